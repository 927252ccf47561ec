#pragma once

#include <array>
#include <complex>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gasrotor/bearing.hpp"
#include "gasrotor/rotor.hpp"

namespace gasrotor {

/// 4-DOF rigid rotor q = (x, y, theta_x, theta_y) on two journal bearings.
/// Spin is about +z; bearing displacement is (x + z theta_y, y - z theta_x).
struct RigidRotorModel {
  double mass = 0.0;
  double I_transverse = 0.0;
  double I_polar = 0.0;
  double z1 = 0.0;  // bearing A offset from CG, m
  double z2 = 0.0;  // bearing B offset from CG, m
  double Omega = 0.0;  // rad/s

  Eigen::Matrix4d mass_matrix() const;
  /// Skew-symmetric, proportional to I_polar * Omega.
  Eigen::Matrix4d gyroscopic_matrix() const;
};

void validate(const RigidRotorModel& model);

RigidRotorModel assemble(const MassProperties& mp, double Omega);

/// Dimensional coefficients of both journals at one whirl ratio.
struct BearingPair {
  DimensionalCoefficients a;
  DimensionalCoefficients b;
};

/// Bearing stiffness or damping mapped onto q through the lever arms.
Eigen::Matrix4d bearing_to_rotor(const Eigen::Matrix2d& bearing_a, const Eigen::Matrix2d& bearing_b, double z1,
                                 double z2);

struct EigenSolution {
  Eigen::Matrix<std::complex<double>, 8, 1> values;
  Eigen::Matrix<std::complex<double>, 4, 8> shapes;  // displacement part of each eigenvector
};

/// Eigenpairs of M q'' + (C_b + G) q' + K_b q = 0 in first-order form. Real
/// parts below the round-off floor of the state matrix are reported as zero.
EigenSolution eigen_at(const RigidRotorModel& model, const BearingPair& bearings);

/// delta = -2 pi Re(lambda) / |Im(lambda)|. Throws for a non-oscillatory root.
double log_decrement(std::complex<double> lambda);

enum class ModeId { cylindrical_forward = 1, cylindrical_backward = 2, conical_forward = 3, conical_backward = 4 };

const char* mode_name(ModeId id);

struct ModeStabilityResult {
  ModeId mode = ModeId::cylindrical_forward;
  bool excited = false;
  bool stable = false;  // meaningful only when excited
  std::optional<double> whirl_speed_ratio;
  std::optional<double> log_dec;

  bool operator==(const ModeStabilityResult&) const = default;
};

using ModeResults = std::array<ModeStabilityResult, 4>;

using CoefficientProvider = std::function<BearingPair(double nu)>;

struct IntersectionOptions {
  std::vector<double> nu_grid;  // empty: default_nu_grid()
  double tolerance = 1e-6;      // on |Im(lambda)/Omega - nu|
  int max_bisections = 40;
  double ambiguous_mac = 0.5;   // below this a tracking step is ambiguous
  double root_check = 1e-3;     // |g| a bisection must reach to count as a root
};

/// [0.05, 2.0] in steps of 0.01.
std::vector<double> default_nu_grid(double step = 0.01, double lo = 0.05, double hi = 2.0);

struct AmbiguousStep {
  ModeId mode;
  double nu_lo, nu_hi, mac;
};

struct IntersectionResult {
  ModeResults modes;
  double min_mac = 1.0;  // worst modal assurance over unambiguous steps
  std::vector<AmbiguousStep> ambiguous;
};

/// Frequency-sweep intersection: for each tracked mode g(nu) = Im(lambda)/Omega - nu;
/// a sign change marks an excited mode, whose first root is refined by bisection.
/// Steps where a mode cannot be matched (typically an overdamped pair turning
/// into two real roots) are recorded; a sign change across such a step that
/// does not bisect down to a root is not a crossing. If no genuine crossing
/// explains it, the sweep throws mode_tracking with the interval.
IntersectionResult intersection_sweep(const RigidRotorModel& model, const CoefficientProvider& provider,
                                      const IntersectionOptions& options = {});

/// Modal assurance between two displacement shapes in mass-weighted coordinates.
double modal_assurance(const Eigen::Vector4cd& a, const Eigen::Vector4cd& b, const RigidRotorModel& model);

}  // namespace gasrotor
