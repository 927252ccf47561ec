#pragma once

#include <array>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gasrotor/bearing.hpp"
#include "gasrotor/rotor.hpp"
#include "gasrotor/rotordynamics.hpp"

namespace gasrotor {

/// The dimensionless groups that fully determine the rigid-rotor stability
/// problem. With l = z2 - z1:
///   mass    = m Omega^2 h_r / (p_a D L)
///   inertia = I_t Omega^2 h_r / (p_a D L l^2)
///   inertia_ratio = I_p / I_t,  z1 = z1 / l,  z2 = z2 / l
struct FeatureVector {
  static constexpr int kSize = 11;
  using Vector = Eigen::Matrix<double, kSize, 1>;

  double alpha = 0.0;
  double beta_over_pi = 0.0;
  double gamma = 0.0;
  double groove_ratio = 0.0;
  double aspect = 0.0;
  double Lambda = 0.0;
  double mass = 0.0;
  double inertia = 0.0;
  double inertia_ratio = 0.0;
  double z1 = 0.0;
  double z2 = 0.0;

  Vector to_vector() const;
  static FeatureVector from_vector(const Eigen::Ref<const Eigen::VectorXd>& v);
  static const std::array<const char*, kSize>& names();

  DimensionlessBearing bearing() const;

  bool operator==(const FeatureVector&) const = default;
};

/// Scale groups spanning decades (Lambda, mass, inertia, inertia_ratio); the
/// networks see their logs.
inline constexpr std::array<int, 4> kLogScaledFeatures{5, 6, 7, 8};

/// Sampling box of the training data; z2 is always z1 + 1. The mass and
/// inertia groups cover rotors of tens of grams at 1e5-3e5 rpm on 5-10 um
/// clearances.
struct FeatureRanges {
  std::array<double, 2> alpha{0.1, 0.9};
  std::array<double, 2> beta_over_pi{110.0 / 180.0, 170.0 / 180.0};
  std::array<double, 2> gamma{0.3, 0.9};
  std::array<double, 2> groove_ratio{1.0, 4.0};
  std::array<double, 2> aspect{0.5, 2.0};
  std::array<double, 2> Lambda{0.5, 40.0};
  std::array<double, 2> mass{0.1, 30.0};
  std::array<double, 2> inertia{0.05, 10.0};
  std::array<double, 2> inertia_ratio{0.02, 1.5};
  std::array<double, 2> z1{-0.9, -0.1};
  /// Feature indices drawn log-uniformly; the rest are uniform.
  std::vector<int> log_uniform{5};

  /// Ten independent (lo, hi) pairs in FeatureVector order, z2 excluded.
  std::array<std::array<double, 2>, 10> bounds() const;
  /// Names of features outside the box.
  std::vector<std::string> out_of_range(const FeatureVector& f) const;
};

/// One design point: the rotor, the groove pattern shared by both journals
/// (L and D taken from journal A) and the operating conditions.
struct Design {
  Rotor rotor;
  HGJBGeometry bearing;
  OperatingPoint op;
};

/// Copies the journal A element's length and outer diameter into `grooves`.
HGJBGeometry journal_geometry(const Rotor& rotor, HGJBGeometry grooves);

FeatureVector featureize(const Rotor& rotor, const HGJBGeometry& geom, const OperatingPoint& op,
                         const FluidRegistry& fluids);

/// Dimensional scales used to rebuild a rigid rotor from features. Results
/// do not depend on the choice.
struct CanonicalScales {
  double p_a = 1.0e5;
  double D = 0.01;
  double h_r = 1.0e-5;
  double Omega = 1.0e4;
  double span = 0.05;
};

RigidRotorModel canonical_model(const FeatureVector& f, const CanonicalScales& s = {});

struct OracleOptions {
  int grid_n = kDefaultGridN;
  double eps = kDefaultPerturbation;
  IntersectionOptions sweep;
  /// Called before every coefficient solve; may throw to abandon the sweep.
  std::function<void()> checkpoint;
};

/// Bearing physics + intersection sweep for one feature vector.
IntersectionResult oracle_stability(const FeatureVector& f, const OracleOptions& options = {},
                                    const CanonicalScales& scales = {});

struct PointEvaluation {
  MassProperties mass;
  FeatureVector features;
  ModeResults modes;
  double power_loss_W = 0.0;     // both journals
  double load_capacity_N = 0.0;  // per journal
  std::vector<std::string> warnings;
};

/// Losses and load proxy shared by both evaluators; stability left empty.
PointEvaluation evaluate_common(const Design& design, const FluidRegistry& fluids, int grid_n,
                                const FeatureRanges& ranges = {});

PointEvaluation evaluate_oracle(const Design& design, const FluidRegistry& fluids, const OracleOptions& options = {});

}  // namespace gasrotor
