#pragma once

#include <complex>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace gasrotor {

/// Herringbone-grooved journal bearing. Angles in rad, lengths in m.
/// alpha is the groove fraction of one groove+ridge pitch; gamma is the
/// axial fraction of the bearing carrying grooves.
struct HGJBGeometry {
  double alpha = 0.5;
  double beta = 2.44;
  double gamma = 0.8;
  double h_g = 10e-6;
  double h_r = 5e-6;
  double L = 0.01;
  double D = 0.01;
};

void validate(const HGJBGeometry& geom);

struct OperatingPoint {
  std::string fluid = "air";
  double p_a = 1.0e5;    // Pa
  double T = 293.15;     // K
  double N = 200000.0;   // rpm

  double omega() const noexcept;  // rad/s
};

void validate(const OperatingPoint& op);

struct FluidProperties {
  double mu = 0.0;     // Pa s
  double R_gas = 0.0;  // J/(kg K)
};

/// mu(T) = mu_ref (T/T_ref)^(3/2) (T_ref + S)/(T + S)
struct SutherlandFluid {
  double mu_ref = 0.0;
  double T_ref = 0.0;
  double S = 0.0;
  double R_gas = 0.0;
};

class FluidRegistry {
 public:
  /// Air and nitrogen.
  static FluidRegistry defaults();
  /// JSON object: name -> {mu_ref, T_ref, S, R_gas}.
  static FluidRegistry from_json(std::string_view text);

  void add(std::string name, SutherlandFluid fluid);
  const SutherlandFluid& at(std::string_view name) const;
  std::vector<std::string> names() const;

 private:
  std::map<std::string, SutherlandFluid, std::less<>> fluids_;
};

inline constexpr double kFluidTMin = 150.0;
inline constexpr double kFluidTMax = 600.0;

FluidProperties fluid_properties(const FluidRegistry& registry, std::string_view fluid, double T, double p_a);

/// Lambda = 6 mu Omega (R/h_r)^2 / p_a.
double compressibility_number(double mu, double omega, double R, double p_a, double h_r);

/// The groove-averaged film only sees these ratios.
struct DimensionlessBearing {
  double alpha = 0.5;
  double beta = 2.44;
  double gamma = 0.8;
  double groove_ratio = 2.0;  // h_g / h_r
  double aspect = 1.0;        // L / D

  static DimensionlessBearing from(const HGJBGeometry& geom);
};

void validate(const DimensionlessBearing& b);

/// Groove-averaged film coefficients at local ridge film H (scaled by h_r),
/// in (theta, zeta) components: mass flux = -P A grad P + 2 Lambda P c.
template <typename Scalar>
struct FilmCoefficients {
  Eigen::Matrix<Scalar, 2, 2> A;
  Eigen::Matrix<Scalar, 2, 1> c;
  Scalar storage;  // mean film thickness entering the squeeze term
};

/// Narrow-groove averaging over one groove/ridge pitch with grooves inclined at
/// `beta` from the sliding direction. `upper` selects the half z > 0; the lower
/// half is its mirror image, which makes the pattern a herringbone.
/// Along the grooves the two films share the pressure gradient; across them
/// they share the flux (series conductance).
template <typename Scalar>
FilmCoefficients<Scalar> grooved_film(const Scalar& H, double groove_ratio, double alpha, double beta, bool upper) {
  using std::cos;
  using std::sin;
  const Scalar Hg = H + groove_ratio;
  const Scalar ar = H * H * H;
  const Scalar ag = Hg * Hg * Hg;
  const Scalar series = alpha * ar + (1.0 - alpha) * ag;
  const Scalar A_along = alpha * ag + (1.0 - alpha) * ar;
  const Scalar A_across = ag * ar / series;
  const Scalar h_along = H + alpha * groove_ratio;
  const Scalar h_across = (alpha * ar * Hg + (1.0 - alpha) * ag * H) / series;

  const double sz = upper ? sin(beta) : -sin(beta);
  Eigen::Matrix<double, 2, 1> es(cos(beta), sz);
  Eigen::Matrix<double, 2, 1> en(-sz, cos(beta));

  FilmCoefficients<Scalar> f;
  f.A = A_along * (es * es.transpose()).template cast<Scalar>() + A_across * (en * en.transpose()).template cast<Scalar>();
  // Couette transport: sliding velocity along theta split into groove-parallel
  // and groove-normal parts, each carried by its own effective film.
  f.c = (0.5 * h_along * es.x()) * es.template cast<Scalar>() + (0.5 * h_across * en.x()) * en.template cast<Scalar>();
  f.storage = h_along;
  return f;
}

template <typename Scalar>
FilmCoefficients<Scalar> smooth_film(const Scalar& H) {
  FilmCoefficients<Scalar> f;
  f.A = (H * H * H) * Eigen::Matrix<Scalar, 2, 2>::Identity();
  f.c << 0.5 * H, Scalar(0);
  f.storage = H;
  return f;
}

struct PressureProfile {
  Eigen::VectorXd zeta;  // axial coordinate z / R over [-L/D, L/D]
  Eigen::VectorXd P;     // p / p_a
  int iterations = 0;
  double residual = 0.0;
};

inline constexpr int kDefaultGridN = 101;
inline constexpr double kDefaultPerturbation = 1e-3;

/// Steady concentric pressure by damped Newton on Psi = P^2 with a
/// conservative second-order axial discretization. Ambient at both ends.
PressureProfile solve_zeroth_order(const DimensionlessBearing& bearing, double Lambda, int grid_n = kDefaultGridN);

/// Dimensionless impedance split into stiffness and damping. Forces scale with
/// p_a R L, displacements with h_r and damping with p_a R L / (h_r Omega).
struct BearingCoefficients {
  Eigen::Matrix2d K = Eigen::Matrix2d::Zero();
  Eigen::Matrix2d C = Eigen::Matrix2d::Zero();
  double Lambda = 0.0;
  double nu = 0.0;
};

/// Which member carries the grooves. On a rotating grooved shaft the film is
/// solved in the shaft frame, where every circular whirl component is shifted
/// by the spin and the sliding direction is reversed.
enum class GrooveCarrier { rotor, sleeve };

/// Precomputes the steady film of one bearing at one Lambda so the first-order
/// problem can be solved cheaply at many whirl ratios.
class FilmSolver {
 public:
  FilmSolver(const DimensionlessBearing& bearing, double Lambda, double eps = kDefaultPerturbation,
             int grid_n = kDefaultGridN, GrooveCarrier carrier = GrooveCarrier::rotor);

  BearingCoefficients coefficients(double nu) const;

  /// Complex impedance (Z_xx, Z_xy) of the grooves-on-sleeve film at whirl
  /// ratio nu >= 0; isotropy gives Z_yy = Z_xx and Z_yx = -Z_xy.
  std::pair<std::complex<double>, std::complex<double>> sleeve_impedance(double nu) const;

  const PressureProfile& steady() const noexcept { return steady_; }
  double Lambda() const noexcept { return Lambda_; }

  /// Perturbation pressure (cos, sin components) for a unit x-displacement.
  struct FirstOrder {
    Eigen::VectorXcd cos_part;
    Eigen::VectorXcd sin_part;
  };
  FirstOrder first_order(double nu) const;

 private:
  struct Cell {
    FilmCoefficients<double> film;
    Eigen::Matrix2d dA;
    Eigen::Vector2d dc;
  };

  DimensionlessBearing bearing_;
  GrooveCarrier carrier_;
  double Lambda_;
  double dz_;
  std::vector<Cell> cells_;
  PressureProfile steady_;
};

BearingCoefficients dynamic_coefficients(const DimensionlessBearing& bearing, double Lambda, double nu,
                                         double eps = kDefaultPerturbation, int grid_n = kDefaultGridN,
                                         GrooveCarrier carrier = GrooveCarrier::rotor);

/// Dimensional stiffness N/m and damping N s/m of one bearing.
struct DimensionalCoefficients {
  Eigen::Matrix2d K;
  Eigen::Matrix2d C;
};

DimensionalCoefficients redimensionalize(const BearingCoefficients& coeffs, const HGJBGeometry& geom, double p_a,
                                         double omega);

/// Viscous Couette loss of one bearing, W.
double power_loss(const HGJBGeometry& geom, double mu, double omega);

/// 0.25 h_r times the smaller singular value of the dimensional stiffness at
/// synchronous whirl. A proxy, not a static load solution.
double load_capacity_proxy(const BearingCoefficients& coeffs, const HGJBGeometry& geom, double p_a);

inline constexpr double kAllowableEccentricity = 0.25;

}  // namespace gasrotor
