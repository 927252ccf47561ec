#include "gasrotor/bearing.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <tuple>

#include <json.hpp>

#include "gasrotor/error.hpp"

// Groove-averaged (narrow groove) compressible Reynolds equation for an
// isothermal ideal-gas film, after Vohr & Chow (1965). In the concentric
// position the averaged coefficients do not depend on theta, so both the
// steady problem and the first-order problem for a harmonic journal
// displacement reduce to two-point boundary value problems in the axial
// coordinate zeta = z / R. The first-order problem is posed with the grooves
// on the stationary sleeve; grooves on the shaft are handled by moving each
// circular whirl component into the shaft frame (see coefficients()).

namespace gasrotor {

namespace {

using cd = std::complex<double>;
using Block = Eigen::Matrix2cd;

constexpr double kNewtonTolerance = 1e-10;
constexpr int kNewtonMaxIterations = 50;

void require(bool ok, const char* what) {
  if (!ok) throw Error(errc::invalid_argument, what);
}

double overlap(double a0, double a1, double b0, double b1) { return std::max(0.0, std::min(a1, b1) - std::max(a0, b0)); }

FilmCoefficients<double> blend(const FilmCoefficients<double>& a, double wa, const FilmCoefficients<double>& b,
                               double wb, const FilmCoefficients<double>& c, double wc) {
  FilmCoefficients<double> f;
  f.A = wa * a.A + wb * b.A + wc * c.A;
  f.c = wa * a.c + wb * b.c + wc * c.c;
  f.storage = wa * a.storage + wb * b.storage + wc * c.storage;
  return f;
}

// Region-weighted film of the cell [z0, z1]; grooves occupy |zeta| >= edge.
FilmCoefficients<double> cell_film(const DimensionlessBearing& b, double H, double z0, double z1) {
  const double half = b.aspect;
  const double edge = half * (1.0 - b.gamma);
  const double width = z1 - z0;
  const double w_up = overlap(z0, z1, edge, half) / width;
  const double w_low = overlap(z0, z1, -half, -edge) / width;
  const double w_land = 1.0 - w_up - w_low;
  return blend(grooved_film(H, b.groove_ratio, b.alpha, b.beta, true), w_up,
               grooved_film(H, b.groove_ratio, b.alpha, b.beta, false), w_low, smooth_film(H), w_land);
}

// Face flux of the steady problem in Psi = P^2 and its partial derivatives.
struct FaceFlux {
  double F, dF0, dF1;
};

FaceFlux steady_flux(double Azz, double cz, double Lambda, double dz, double psi0, double psi1) {
  const double mean = 0.5 * (psi0 + psi1);
  const double p_mid = std::sqrt(mean);
  const double diff = Azz / (2.0 * dz);
  const double pump = 2.0 * Lambda * cz;
  const double dp = pump * 0.25 / p_mid;
  return {diff * (psi1 - psi0) - pump * p_mid, -diff - dp, diff - dp};
}

// Thomas algorithm on a tridiagonal system; b is the diagonal.
Eigen::VectorXd solve_tridiagonal(Eigen::VectorXd a, Eigen::VectorXd b, Eigen::VectorXd c, Eigen::VectorXd d) {
  const Eigen::Index n = b.size();
  for (Eigen::Index i = 1; i < n; ++i) {
    const double w = a[i] / b[i - 1];
    b[i] -= w * c[i - 1];
    d[i] -= w * d[i - 1];
  }
  Eigen::VectorXd x(n);
  x[n - 1] = d[n - 1] / b[n - 1];
  for (Eigen::Index i = n - 2; i >= 0; --i) x[i] = (d[i] - c[i] * x[i + 1]) / b[i];
  return x;
}

}  // namespace

double OperatingPoint::omega() const noexcept { return 2.0 * std::numbers::pi * N / 60.0; }

void validate(const HGJBGeometry& g) {
  require(g.alpha > 0.0 && g.alpha < 1.0, "HGJB alpha must lie in (0, 1)");
  require(g.beta > 0.0 && g.beta < std::numbers::pi, "HGJB beta must lie in (0, pi)");
  require(g.gamma > 0.0 && g.gamma <= 1.0, "HGJB gamma must lie in (0, 1]");
  require(g.h_g >= 0.0 && std::isfinite(g.h_g), "HGJB groove depth must be >= 0");
  require(g.h_r > 0.0 && std::isfinite(g.h_r), "HGJB clearance must be > 0");
  require(g.L > 0.0 && g.D > 0.0, "HGJB length and diameter must be > 0");
}

void validate(const OperatingPoint& op) {
  require(op.p_a > 0.0 && std::isfinite(op.p_a), "ambient pressure must be > 0");
  require(op.T > 0.0 && std::isfinite(op.T), "ambient temperature must be > 0");
  require(op.N >= 0.0 && std::isfinite(op.N), "rotational speed must be >= 0");
}

DimensionlessBearing DimensionlessBearing::from(const HGJBGeometry& g) {
  validate(g);
  return {g.alpha, g.beta, g.gamma, g.h_g / g.h_r, g.L / g.D};
}

void validate(const DimensionlessBearing& b) {
  require(b.alpha > 0.0 && b.alpha < 1.0, "alpha must lie in (0, 1)");
  require(b.beta > 0.0 && b.beta < std::numbers::pi, "beta must lie in (0, pi)");
  require(b.gamma > 0.0 && b.gamma <= 1.0, "gamma must lie in (0, 1]");
  require(b.groove_ratio >= 0.0 && std::isfinite(b.groove_ratio), "groove ratio must be >= 0");
  require(b.aspect > 0.0 && std::isfinite(b.aspect), "L/D must be > 0");
}

FluidRegistry FluidRegistry::defaults() {
  FluidRegistry r;
  r.add("air", {1.716e-5, 273.15, 110.4, 287.05});
  r.add("nitrogen", {1.663e-5, 273.15, 106.7, 296.8});
  return r;
}

FluidRegistry FluidRegistry::from_json(std::string_view text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text.begin(), text.end());
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(errc::parse_error, std::string("fluid registry: ") + e.what());
  }
  FluidRegistry r;
  for (const auto& [name, v] : doc.items()) {
    try {
      r.add(name, {v.at("mu_ref").get<double>(), v.at("T_ref").get<double>(), v.at("S").get<double>(),
                   v.at("R_gas").get<double>()});
    } catch (const nlohmann::json::exception& e) {
      throw Error(errc::parse_error, "fluid registry entry '" + name + "': " + e.what(), name);
    }
  }
  return r;
}

void FluidRegistry::add(std::string name, SutherlandFluid f) {
  if (!(f.mu_ref > 0.0 && f.T_ref > 0.0 && f.S >= 0.0 && f.R_gas > 0.0))
    throw Error(errc::invalid_argument, "fluid '" + name + "': Sutherland constants must be positive");
  fluids_[std::move(name)] = f;
}

const SutherlandFluid& FluidRegistry::at(std::string_view name) const {
  auto it = fluids_.find(name);
  if (it == fluids_.end()) throw Error(errc::unknown_fluid, "unknown fluid '" + std::string(name) + "'", "fluid");
  return it->second;
}

std::vector<std::string> FluidRegistry::names() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : fluids_) out.push_back(k);
  return out;
}

FluidProperties fluid_properties(const FluidRegistry& registry, std::string_view fluid, double T, double p_a) {
  const auto& f = registry.at(fluid);
  if (!(T >= kFluidTMin && T <= kFluidTMax))
    throw Error(errc::out_of_range, "temperature " + std::to_string(T) + " K outside the validated range [150, 600] K",
                "T");
  require(p_a > 0.0, "ambient pressure must be > 0");
  FluidProperties out;
  out.mu = f.mu_ref * std::pow(T / f.T_ref, 1.5) * (f.T_ref + f.S) / (T + f.S);
  out.R_gas = f.R_gas;
  return out;
}

double compressibility_number(double mu, double omega, double R, double p_a, double h_r) {
  const double ratio = R / h_r;
  return 6.0 * mu * omega * ratio * ratio / p_a;
}

PressureProfile solve_zeroth_order(const DimensionlessBearing& bearing, double Lambda, int grid_n) {
  validate(bearing);
  if (grid_n < 11 || grid_n % 2 == 0) throw Error(errc::invalid_argument, "grid_n must be odd and >= 11", "grid_n");
  require(Lambda >= 0.0 && std::isfinite(Lambda), "Lambda must be >= 0");

  const int n = grid_n;
  const double half = bearing.aspect;
  const double dz = 2.0 * half / (n - 1);

  PressureProfile out;
  out.zeta.resize(n);
  for (int i = 0; i < n; ++i) out.zeta[i] = -half + i * dz;
  out.zeta[n - 1] = half;

  std::vector<double> Azz(n - 1), cz(n - 1);
  for (int j = 0; j < n - 1; ++j) {
    const auto film = cell_film(bearing, 1.0, out.zeta[j], out.zeta[j + 1]);
    Azz[j] = film.A(1, 1);
    cz[j] = film.c(1);
  }

  Eigen::VectorXd psi = Eigen::VectorXd::Ones(n);
  const int m = n - 2;

  auto residual = [&](const Eigen::VectorXd& s, Eigen::VectorXd* sub, Eigen::VectorXd* diag, Eigen::VectorXd* sup) {
    Eigen::VectorXd R(m);
    std::vector<FaceFlux> faces(n - 1);
    for (int j = 0; j < n - 1; ++j) faces[j] = steady_flux(Azz[j], cz[j], Lambda, dz, s[j], s[j + 1]);
    for (int i = 1; i <= m; ++i) {
      R[i - 1] = faces[i].F - faces[i - 1].F;
      if (diag) {
        (*sub)[i - 1] = -faces[i - 1].dF0;
        (*diag)[i - 1] = faces[i].dF0 - faces[i - 1].dF1;
        (*sup)[i - 1] = faces[i].dF1;
      }
    }
    return R;
  };

  Eigen::VectorXd sub(m), diag(m), sup(m);
  Eigen::VectorXd R = residual(psi, &sub, &diag, &sup);
  double norm = R.lpNorm<Eigen::Infinity>();
  int it = 0;
  while (norm > kNewtonTolerance) {
    if (it == kNewtonMaxIterations)
      throw Error(errc::nonconvergence, "steady film Newton solve did not converge, residual " + std::to_string(norm));
    ++it;
    const Eigen::VectorXd step = solve_tridiagonal(sub, diag, sup, -R);
    double damping = 1.0;
    Eigen::VectorXd trial(n);
    double trial_norm = norm;
    for (int k = 0; k < 30; ++k, damping *= 0.5) {
      trial = psi;
      trial.segment(1, m) += damping * step;
      if ((trial.array() <= 0.0).any()) continue;
      trial_norm = residual(trial, nullptr, nullptr, nullptr).lpNorm<Eigen::Infinity>();
      if (trial_norm < norm) break;
    }
    if (!(trial_norm < norm)) {
      if (norm <= 10.0 * kNewtonTolerance) break;
      throw Error(errc::nonconvergence, "steady film line search stalled, residual " + std::to_string(norm));
    }
    psi = trial;
    R = residual(psi, &sub, &diag, &sup);
    norm = R.lpNorm<Eigen::Infinity>();
  }
  out.P = psi.array().sqrt();
  out.iterations = it;
  out.residual = norm;
  return out;
}

FilmSolver::FilmSolver(const DimensionlessBearing& bearing, double Lambda, double eps, int grid_n,
                       GrooveCarrier carrier)
    : bearing_(bearing), carrier_(carrier), Lambda_(Lambda), steady_(solve_zeroth_order(bearing, Lambda, grid_n)) {
  if (!(eps > 0.0 && eps <= 0.05)) throw Error(errc::invalid_argument, "perturbation eps must lie in (0, 0.05]", "eps");
  const int n = grid_n;
  dz_ = steady_.zeta[1] - steady_.zeta[0];
  cells_.resize(n - 1);
  for (int j = 0; j < n - 1; ++j) {
    const double z0 = steady_.zeta[j], z1 = steady_.zeta[j + 1];
    auto& cell = cells_[j];
    cell.film = cell_film(bearing_, 1.0, z0, z1);
    // Film sensitivity to the ridge clearance by a central difference of
    // half-width eps, the perturbation amplitude.
    const auto plus = cell_film(bearing_, 1.0 + eps, z0, z1);
    const auto minus = cell_film(bearing_, 1.0 - eps, z0, z1);
    cell.dA = (plus.A - minus.A) / (2.0 * eps);
    cell.dc = (plus.c - minus.c) / (2.0 * eps);
  }
}

FilmSolver::FirstOrder FilmSolver::first_order(double nu) const {
  // Unknowns per interior node: u = (f, g), the cos/sin theta components of the
  // pressure response to H = 1 - X cos(theta) e^{i nu tau} (first column) and
  // H = 1 - Y sin(theta) e^{i nu tau} (second column).
  const int n = static_cast<int>(steady_.P.size());
  const int m = n - 2;
  const double dz = dz_;
  const double L2 = 2.0 * Lambda_;
  const auto& P = steady_.P;
  const cd squeeze(0.0, L2 * nu);

  struct CellOps {
    Block M0, M1, Gm;
    double Q, Att, Atz, ct, Hm, dAtz, dct, P0p;
  };
  std::vector<CellOps> ops(n - 1);
  for (int j = 0; j < n - 1; ++j) {
    const auto& c = cells_[j];
    const double Pm = 0.5 * (P[j] + P[j + 1]);
    const double Pp = (P[j + 1] - P[j]) / dz;
    const double Azz = c.film.A(1, 1), Azt = c.film.A(1, 0);
    const double a = Pm * Azz / dz;
    const double b = 0.5 * (Azz * Pp - L2 * c.film.c(1));
    const double s = 0.5 * Pm * Azt;
    auto& o = ops[j];
    o.M0 << cd(-a + b), cd(s), cd(-s), cd(-a + b);
    o.M1 << cd(a + b), cd(s), cd(-s), cd(a + b);
    o.Q = Pm * c.dA(1, 1) * Pp - L2 * Pm * c.dc(1);
    o.Att = c.film.A(0, 0);
    o.Atz = c.film.A(0, 1);
    o.ct = c.film.c(0);
    o.Hm = c.film.storage;
    o.dAtz = c.dA(0, 1);
    o.dct = c.dc(0);
    o.P0p = Pp;
  }

  // Source contribution of cell j at node i: value part acting on u_i, the
  // gradient part acting on (u_{j+1} - u_j), and forcing for both columns.
  auto value_block = [&](const CellOps& o, double Pi) {
    Block V;
    const cd diag = cd(-o.Att * Pi) - squeeze * o.Hm;
    const double off = o.Atz * o.P0p - L2 * o.ct;
    V << diag, cd(off), cd(-off), diag;
    return V;
  };
  auto gradient_block = [&](const CellOps& o, double Pi) {
    Block G;
    const double k = o.Atz * Pi / dz;
    G << cd(0.0), cd(k), cd(-k), cd(0.0);
    return G;
  };
  auto forcing = [&](const CellOps& o, double Pi) {
    Block F;  // columns: x excitation, y excitation
    const cd sq = squeeze * Pi;
    const double w = Pi * o.dAtz * o.P0p - L2 * Pi * o.dct;
    F << sq, cd(-w), cd(w), sq;
    return F;
  };

  std::vector<Block> lower(m), diag(m), upper(m), rhs(m);
  const double hw = 0.5 * dz;
  for (int i = 1; i <= m; ++i) {
    const auto& left = ops[i - 1];
    const auto& right = ops[i];
    const double Pi = P[i];
    const Block Gl = gradient_block(left, Pi);
    const Block Gr = gradient_block(right, Pi);
    lower[i - 1] = -left.M0 - hw * Gl;
    diag[i - 1] = right.M0 - left.M1 + hw * (value_block(left, Pi) + value_block(right, Pi) + Gl - Gr);
    upper[i - 1] = right.M1 + hw * Gr;
    rhs[i - 1] = cd(right.Q - left.Q) * Block::Identity() - hw * (forcing(left, Pi) + forcing(right, Pi));
  }

  // Block Thomas elimination.
  for (int i = 0; i < m; ++i) {
    if (i > 0) {
      const Block w = lower[i] * diag[i - 1].inverse();
      diag[i] -= w * upper[i - 1];
      rhs[i] -= w * rhs[i - 1];
    }
    const double scale = diag[i].cwiseAbs().maxCoeff();
    const double det = std::abs(diag[i].determinant());
    if (!(det > 1e-14 * scale * scale)) {
      throw Error(errc::singular_system, "first-order film system is singular at node " + std::to_string(i + 1) +
                                             " (pivot determinant ratio " + std::to_string(det / (scale * scale)) + ")");
    }
  }
  std::vector<Block> u(m);
  u[m - 1] = diag[m - 1].inverse() * rhs[m - 1];
  for (int i = m - 2; i >= 0; --i) u[i] = diag[i].inverse() * (rhs[i] - upper[i] * u[i + 1]);

  FirstOrder out;
  out.cos_part = Eigen::VectorXcd::Zero(2 * n);
  out.sin_part = Eigen::VectorXcd::Zero(2 * n);
  // cos_part/sin_part hold the x-excitation column followed by the y column.
  for (int i = 1; i <= m; ++i) {
    out.cos_part[i] = u[i - 1](0, 0);
    out.sin_part[i] = u[i - 1](1, 0);
    out.cos_part[n + i] = u[i - 1](0, 1);
    out.sin_part[n + i] = u[i - 1](1, 1);
  }
  return out;
}

std::pair<cd, cd> FilmSolver::sleeve_impedance(double nu) const {
  const auto fo = first_order(nu);
  const int n = static_cast<int>(steady_.P.size());
  // Trapezoid rule; the end values vanish.
  const double w = dz_ * std::numbers::pi / (2.0 * bearing_.aspect);
  return {w * fo.cos_part.head(n).sum(), w * fo.cos_part.tail(n).sum()};
}

BearingCoefficients FilmSolver::coefficients(double nu) const {
  if (!(nu > 0.0) || !std::isfinite(nu)) throw Error(errc::invalid_argument, "whirl ratio nu must be > 0", "nu");
  cd Zxx, Zxy;
  if (carrier_ == GrooveCarrier::sleeve) {
    std::tie(Zxx, Zxy) = sleeve_impedance(nu);
  } else {
    // Radial and tangential force coefficients of a circular whirl at signed
    // rate r (positive along the sliding direction) of the sleeve-grooved film.
    auto circular = [this](double r) {
      const auto [a, b] = sleeve_impedance(std::abs(r));
      const cd z = r >= 0.0 ? a - cd(0.0, 1.0) * b : a + cd(0.0, 1.0) * b;
      return std::pair<double, double>{z.real(), r >= 0.0 ? z.imag() : -z.imag()};
    };
    // In the shaft frame, mirrored so the sleeve slides forward, an inertial
    // whirl at rate s becomes a whirl at rate 1 - s; the mirror flips the
    // tangential component.
    const auto [kr_f, kt_f] = circular(1.0 - nu);
    const auto [kr_b, kt_b] = circular(1.0 + nu);
    const cd Zf(kr_f, -kt_f);  // forward whirl impedance
    const cd Zb(kr_b, kt_b);   // backward whirl impedance
    Zxx = 0.5 * (Zf + Zb);
    Zxy = (Zb - Zf) / cd(0.0, 2.0);
  }
  const cd Zyx = -Zxy, Zyy = Zxx;
  BearingCoefficients out;
  out.Lambda = Lambda_;
  out.nu = nu;
  out.K << Zxx.real(), Zxy.real(), Zyx.real(), Zyy.real();
  out.C << Zxx.imag(), Zxy.imag(), Zyx.imag(), Zyy.imag();
  out.C /= nu;
  return out;
}

BearingCoefficients dynamic_coefficients(const DimensionlessBearing& bearing, double Lambda, double nu, double eps,
                                         int grid_n, GrooveCarrier carrier) {
  return FilmSolver(bearing, Lambda, eps, grid_n, carrier).coefficients(nu);
}

DimensionalCoefficients redimensionalize(const BearingCoefficients& coeffs, const HGJBGeometry& geom, double p_a,
                                         double omega) {
  const double force = p_a * 0.5 * geom.D * geom.L;
  DimensionalCoefficients out;
  out.K = coeffs.K * (force / geom.h_r);
  out.C = coeffs.C * (force / (geom.h_r * omega));
  return out;
}

double power_loss(const HGJBGeometry& geom, double mu, double omega) {
  const double R = 0.5 * geom.D;
  const double film_term = (1.0 - geom.gamma) * geom.L / geom.h_r +
                           geom.gamma * geom.L * (geom.alpha / (geom.h_r + geom.h_g) + (1.0 - geom.alpha) / geom.h_r);
  return mu * omega * omega * R * R * R * 2.0 * std::numbers::pi * film_term;
}

double load_capacity_proxy(const BearingCoefficients& coeffs, const HGJBGeometry& geom, double p_a) {
  const Eigen::Matrix2d K = coeffs.K * (p_a * 0.5 * geom.D * geom.L / geom.h_r);
  const Eigen::JacobiSVD<Eigen::Matrix2d> svd(K);
  return kAllowableEccentricity * geom.h_r * svd.singularValues().minCoeff();
}

}  // namespace gasrotor
