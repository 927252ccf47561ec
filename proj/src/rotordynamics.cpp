#include "gasrotor/rotordynamics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "gasrotor/error.hpp"

namespace gasrotor {

namespace {

using cd = std::complex<double>;

// Labels in ModeId order: (cylindrical?, forward?).
constexpr std::array<std::pair<bool, bool>, 4> kLabels{{{true, true}, {true, false}, {false, true}, {false, false}}};

struct Tracked {
  std::array<cd, 4> lambda;
  std::array<Eigen::Vector4cd, 4> shape;
};

// The four roots with the largest imaginary part: one of each conjugate pair.
Tracked upper_roots(const EigenSolution& es) {
  std::array<int, 8> order;
  for (int i = 0; i < 8; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return es.values[a].imag() > es.values[b].imag(); });
  Tracked t;
  for (int k = 0; k < 4; ++k) {
    t.lambda[k] = es.values[order[k]];
    t.shape[k] = es.shapes.col(order[k]);
  }
  return t;
}

Eigen::Vector4cd weighted(const Eigen::Vector4cd& v, const RigidRotorModel& m) {
  const double sm = std::sqrt(m.mass), si = std::sqrt(m.I_transverse);
  return Eigen::Vector4cd(sm * v[0], sm * v[1], si * v[2], si * v[3]);
}

double label_score(const Eigen::Vector4cd& v, const RigidRotorModel& m, bool cylindrical, bool forward) {
  const Eigen::Vector4cd w = weighted(v, m);
  const double trans = std::norm(w[0]) + std::norm(w[1]);
  const double tilt = std::norm(w[2]) + std::norm(w[3]);
  const double total = trans + tilt;
  if (!(total > 0.0)) return 0.0;
  // Circular forward whirl of (x, y) is (1, -i); the tilt axis moves like (theta_y, -theta_x).
  const double direction =
      -(std::imag(std::conj(w[0]) * w[1]) + std::imag(std::conj(w[3]) * -w[2])) / total;  // in [-1/2, 1/2]
  const double shape = cylindrical ? trans / total : tilt / total;
  return shape + (forward ? 0.5 + direction : 0.5 - direction);
}

// Best permutation (4! candidates) maximising a score table.
std::array<int, 4> best_assignment(const std::array<std::array<double, 4>, 4>& score) {
  std::array<int, 4> perm{0, 1, 2, 3}, best = perm;
  double best_total = -std::numeric_limits<double>::infinity();
  do {
    double total = 0.0;
    for (int k = 0; k < 4; ++k) total += score[k][perm[k]];
    if (total > best_total) {
      best_total = total;
      best = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

// Orders `next` so that slot k continues slot k of `prev`; returns the MAC per slot.
std::array<double, 4> match(const Tracked& prev, Tracked& next, const RigidRotorModel& model) {
  std::array<std::array<double, 4>, 4> mac;
  for (int k = 0; k < 4; ++k)
    for (int l = 0; l < 4; ++l) mac[k][l] = modal_assurance(prev.shape[k], next.shape[l], model);
  const auto perm = best_assignment(mac);
  Tracked ordered;
  std::array<double, 4> out;
  for (int k = 0; k < 4; ++k) {
    ordered.lambda[k] = next.lambda[perm[k]];
    ordered.shape[k] = next.shape[perm[k]];
    out[k] = mac[k][perm[k]];
  }
  next = ordered;
  return out;
}

}  // namespace

Eigen::Matrix4d RigidRotorModel::mass_matrix() const {
  return Eigen::Vector4d(mass, mass, I_transverse, I_transverse).asDiagonal();
}

Eigen::Matrix4d RigidRotorModel::gyroscopic_matrix() const {
  Eigen::Matrix4d G = Eigen::Matrix4d::Zero();
  G(2, 3) = I_polar * Omega;
  G(3, 2) = -I_polar * Omega;
  return G;
}

void validate(const RigidRotorModel& m) {
  if (!(m.mass > 0.0 && m.I_transverse > 0.0 && m.I_polar > 0.0))
    throw Error(errc::invalid_argument, "rigid rotor needs positive mass and inertias");
  if (!(m.z1 < m.z2)) throw Error(errc::invalid_argument, "bearing offsets must satisfy z1 < z2", "z1");
  if (!(m.Omega >= 0.0) || !std::isfinite(m.Omega)) throw Error(errc::invalid_argument, "spin speed must be >= 0");
}

RigidRotorModel assemble(const MassProperties& mp, double Omega) {
  if (!mp.z1 || !mp.z2) throw Error(errc::invalid_rotor, "both journal bearings must be assigned", "journal_a");
  if (*mp.z1 == *mp.z2) throw Error(errc::invalid_argument, "bearings coincide (z1 = z2)", "journal_b");
  RigidRotorModel m{mp.mass, mp.I_transverse, mp.I_polar, *mp.z1, *mp.z2, Omega};
  validate(m);
  return m;
}

Eigen::Matrix4d bearing_to_rotor(const Eigen::Matrix2d& ka, const Eigen::Matrix2d& kb, double z1, double z2) {
  auto lever = [](double z) {
    Eigen::Matrix<double, 2, 4> T;
    T << 1, 0, 0, z, 0, 1, -z, 0;
    return T;
  };
  const auto Ta = lever(z1), Tb = lever(z2);
  return Ta.transpose() * ka * Ta + Tb.transpose() * kb * Tb;
}

EigenSolution eigen_at(const RigidRotorModel& model, const BearingPair& bp) {
  const Eigen::Matrix4d K = bearing_to_rotor(bp.a.K, bp.b.K, model.z1, model.z2);
  const Eigen::Matrix4d C = bearing_to_rotor(bp.a.C, bp.b.C, model.z1, model.z2) + model.gyroscopic_matrix();
  if (!K.allFinite() || !C.allFinite()) throw Error(errc::eigen_failure, "non-finite bearing coefficients");
  const Eigen::Vector4d inv_m = model.mass_matrix().diagonal().cwiseInverse();

  Eigen::Matrix<double, 8, 8> A = Eigen::Matrix<double, 8, 8>::Zero();
  A.topRightCorner<4, 4>().setIdentity();
  A.bottomLeftCorner<4, 4>() = -(inv_m.asDiagonal() * K);
  A.bottomRightCorner<4, 4>() = -(inv_m.asDiagonal() * C);

  Eigen::EigenSolver<Eigen::Matrix<double, 8, 8>> solver(A, true);
  if (solver.info() != Eigen::Success) throw Error(errc::eigen_failure, "state-matrix eigensolver failed");

  EigenSolution out;
  out.values = solver.eigenvalues();
  out.shapes = solver.eigenvectors().topRows<4>();
  const double floor = 64.0 * std::numeric_limits<double>::epsilon() * A.cwiseAbs().rowwise().sum().maxCoeff();
  for (auto& v : out.values)
    if (std::abs(v.real()) <= floor) v = cd(0.0, v.imag());
  return out;
}

double log_decrement(cd lambda) {
  if (lambda.imag() == 0.0)
    throw Error(errc::invalid_argument, "log decrement undefined for a non-oscillatory eigenvalue");
  return -2.0 * std::numbers::pi * lambda.real() / std::abs(lambda.imag());
}

const char* mode_name(ModeId id) {
  switch (id) {
    case ModeId::cylindrical_forward: return "cylindrical-forward";
    case ModeId::cylindrical_backward: return "cylindrical-backward";
    case ModeId::conical_forward: return "conical-forward";
    case ModeId::conical_backward: return "conical-backward";
  }
  return "unknown";
}

double modal_assurance(const Eigen::Vector4cd& a, const Eigen::Vector4cd& b, const RigidRotorModel& model) {
  const Eigen::Vector4cd wa = weighted(a, model), wb = weighted(b, model);
  const double na = wa.squaredNorm(), nb = wb.squaredNorm();
  if (!(na > 0.0 && nb > 0.0)) return 0.0;
  return std::norm(wa.dot(wb)) / (na * nb);
}

std::vector<double> default_nu_grid(double step, double lo, double hi) {
  std::vector<double> grid;
  const auto count = static_cast<long>(std::floor((hi - lo) / step + 1e-9));
  for (long k = 0; k <= count; ++k) grid.push_back(lo + static_cast<double>(k) * step);
  return grid;
}

IntersectionResult intersection_sweep(const RigidRotorModel& model, const CoefficientProvider& provider,
                                      const IntersectionOptions& options) {
  validate(model);
  if (!(model.Omega > 0.0)) throw Error(errc::invalid_argument, "intersection sweep undefined at zero speed", "N");
  const std::vector<double> grid = options.nu_grid.empty() ? default_nu_grid() : options.nu_grid;
  if (grid.size() < 2) throw Error(errc::invalid_argument, "whirl-ratio grid needs at least two points", "nu_grid");
  for (std::size_t k = 1; k < grid.size(); ++k)
    if (!(grid[k] > grid[k - 1]) || !(grid[0] > 0.0))
      throw Error(errc::invalid_argument, "whirl-ratio grid must be positive and strictly increasing", "nu_grid");

  const double Omega = model.Omega;
  auto roots_at = [&](double nu) { return upper_roots(eigen_at(model, provider(nu))); };
  auto gap = [&](const cd& lambda, double nu) { return lambda.imag() / Omega - nu; };

  IntersectionResult result;
  std::vector<Tracked> track;
  track.reserve(grid.size());

  Tracked first = roots_at(grid[0]);
  {
    std::array<std::array<double, 4>, 4> score;  // label x root
    for (int k = 0; k < 4; ++k)
      for (int l = 0; l < 4; ++l) score[k][l] = label_score(first.shape[l], model, kLabels[k].first, kLabels[k].second);
    const auto perm = best_assignment(score);
    Tracked labelled;
    for (int k = 0; k < 4; ++k) {
      labelled.lambda[k] = first.lambda[perm[k]];
      labelled.shape[k] = first.shape[perm[k]];
    }
    track.push_back(labelled);
  }
  std::vector<std::array<double, 4>> step_mac;  // step k joins grid[k] and grid[k + 1]
  for (std::size_t k = 1; k < grid.size(); ++k) {
    Tracked next = roots_at(grid[k]);
    const auto mac = match(track.back(), next, model);
    for (int m = 0; m < 4; ++m) {
      if (mac[m] < options.ambiguous_mac)
        result.ambiguous.push_back({static_cast<ModeId>(m + 1), grid[k - 1], grid[k], mac[m]});
      else
        result.min_mac = std::min(result.min_mac, mac[m]);
    }
    step_mac.push_back(mac);
    track.push_back(std::move(next));
  }

  for (int m = 0; m < 4; ++m) {
    auto& r = result.modes[m];
    r.mode = static_cast<ModeId>(m + 1);
    std::optional<std::size_t> unresolved;
    for (std::size_t k = 0; k + 1 < grid.size(); ++k) {
      double lo = grid[k], hi = grid[k + 1];
      double g_lo = gap(track[k].lambda[m], lo);
      const double g_hi = gap(track[k + 1].lambda[m], hi);
      if (g_lo * g_hi > 0.0 || (g_lo == 0.0 && g_hi == 0.0 && k > 0)) continue;

      // Bisection; each midpoint is matched against the left end of the bracket.
      Tracked left = track[k];
      cd lambda = std::abs(g_lo) <= std::abs(g_hi) ? track[k].lambda[m] : track[k + 1].lambda[m];
      double nu_star = std::abs(g_lo) <= std::abs(g_hi) ? lo : hi;
      double g_best = std::min(std::abs(g_lo), std::abs(g_hi));
      for (int it = 0; it < options.max_bisections && g_best >= options.tolerance; ++it) {
        const double mid = 0.5 * (lo + hi);
        Tracked probe = roots_at(mid);
        match(left, probe, model);
        const double g_mid = gap(probe.lambda[m], mid);
        lambda = probe.lambda[m];
        nu_star = mid;
        g_best = std::abs(g_mid);
        if ((g_mid < 0.0) == (g_lo < 0.0)) {
          lo = mid;
          g_lo = g_mid;
          left = probe;
        } else {
          hi = mid;
        }
      }
      if (g_best > options.root_check && step_mac[k][m] < options.ambiguous_mac) {
        // A label jump, not a crossing.
        if (!unresolved) unresolved = k;
        continue;
      }
      r.excited = true;
      r.whirl_speed_ratio = nu_star;
      r.log_dec = lambda.imag() != 0.0 ? log_decrement(lambda) : 0.0;
      r.stable = *r.log_dec > 0.0;
      break;
    }
    if (!r.excited && unresolved) {
      std::ostringstream msg;
      msg << "mode tracking ambiguous for " << mode_name(r.mode) << " on nu in [" << grid[*unresolved] << ", "
          << grid[*unresolved + 1] << "] (MAC " << step_mac[*unresolved][m] << ")";
      throw Error(errc::mode_tracking, msg.str(), "nu_grid");
    }
  }
  return result;
}

}  // namespace gasrotor
