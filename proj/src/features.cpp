#include "gasrotor/features.hpp"

#include <cmath>
#include <numbers>

#include "gasrotor/error.hpp"

namespace gasrotor {

FeatureVector::Vector FeatureVector::to_vector() const {
  Vector v;
  v << alpha, beta_over_pi, gamma, groove_ratio, aspect, Lambda, mass, inertia, inertia_ratio, z1, z2;
  return v;
}

FeatureVector FeatureVector::from_vector(const Eigen::Ref<const Eigen::VectorXd>& v) {
  if (v.size() != kSize) throw Error(errc::invalid_argument, "feature vector must have 11 entries");
  return {v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7], v[8], v[9], v[10]};
}

const std::array<const char*, FeatureVector::kSize>& FeatureVector::names() {
  static const std::array<const char*, kSize> n{"alpha",  "beta_over_pi", "gamma",         "groove_ratio",
                                                "aspect", "Lambda",       "mass",          "inertia",
                                                "inertia_ratio", "z1",    "z2"};
  return n;
}

DimensionlessBearing FeatureVector::bearing() const {
  return {alpha, beta_over_pi * std::numbers::pi, gamma, groove_ratio, aspect};
}

std::array<std::array<double, 2>, 10> FeatureRanges::bounds() const {
  return {alpha, beta_over_pi, gamma, groove_ratio, aspect, Lambda, mass, inertia, inertia_ratio, z1};
}

std::vector<std::string> FeatureRanges::out_of_range(const FeatureVector& f) const {
  const auto b = bounds();
  const auto v = f.to_vector();
  std::vector<std::string> out;
  for (int k = 0; k < 10; ++k)
    if (v[k] < b[k][0] || v[k] > b[k][1]) out.emplace_back(FeatureVector::names()[k]);
  if (f.z2 < z1[0] + 1.0 || f.z2 > z1[1] + 1.0) out.emplace_back("z2");
  return out;
}

HGJBGeometry journal_geometry(const Rotor& rotor, HGJBGeometry grooves) {
  if (!rotor.journal_a) throw Error(errc::invalid_rotor, "journal_a is not assigned", "journal_a");
  const auto& e = rotor.elements.at(*rotor.journal_a);
  grooves.L = e.L;
  grooves.D = e.layers.back().D_outer;
  return grooves;
}

FeatureVector featureize(const Rotor& rotor, const HGJBGeometry& geom, const OperatingPoint& op,
                         const FluidRegistry& fluids) {
  validate(geom);
  validate(op);
  const MassProperties mp = mass_properties(rotor);
  if (!mp.z1 || !mp.z2) throw Error(errc::invalid_rotor, "both journal bearings must be assigned", "journal_a");
  const double Omega = op.omega();
  if (!(Omega > 0.0)) throw Error(errc::invalid_argument, "rotational speed must be > 0 for a stability evaluation", "N");
  const FluidProperties fluid = fluid_properties(fluids, op.fluid, op.T, op.p_a);

  const double span = *mp.z2 - *mp.z1;
  const double load = op.p_a * geom.D * geom.L;
  const double w2h = Omega * Omega * geom.h_r;

  FeatureVector f;
  f.alpha = geom.alpha;
  f.beta_over_pi = geom.beta / std::numbers::pi;
  f.gamma = geom.gamma;
  f.groove_ratio = geom.h_g / geom.h_r;
  f.aspect = geom.L / geom.D;
  f.Lambda = compressibility_number(fluid.mu, Omega, 0.5 * geom.D, op.p_a, geom.h_r);
  f.mass = mp.mass * w2h / load;
  f.inertia = mp.I_transverse * w2h / (load * span * span);
  f.inertia_ratio = mp.I_polar / mp.I_transverse;
  f.z1 = *mp.z1 / span;
  f.z2 = *mp.z2 / span;
  return f;
}

RigidRotorModel canonical_model(const FeatureVector& f, const CanonicalScales& s) {
  const double L = f.aspect * s.D;
  const double load = s.p_a * s.D * L;
  const double w2h = s.Omega * s.Omega * s.h_r;
  RigidRotorModel m;
  m.mass = f.mass * load / w2h;
  m.I_transverse = f.inertia * load * s.span * s.span / w2h;
  m.I_polar = f.inertia_ratio * m.I_transverse;
  m.z1 = f.z1 * s.span;
  m.z2 = f.z2 * s.span;
  m.Omega = s.Omega;
  return m;
}

IntersectionResult oracle_stability(const FeatureVector& f, const OracleOptions& options, const CanonicalScales& s) {
  const RigidRotorModel model = canonical_model(f, s);
  const FilmSolver film(f.bearing(), f.Lambda, options.eps, options.grid_n);
  HGJBGeometry geom;
  geom.D = s.D;
  geom.L = f.aspect * s.D;
  geom.h_r = s.h_r;
  const CoefficientProvider provider = [&](double nu) {
    if (options.checkpoint) options.checkpoint();
    const auto dim = redimensionalize(film.coefficients(nu), geom, s.p_a, s.Omega);
    return BearingPair{dim, dim};
  };
  return intersection_sweep(model, provider, options.sweep);
}

PointEvaluation evaluate_common(const Design& design, const FluidRegistry& fluids, int grid_n,
                                const FeatureRanges& ranges) {
  PointEvaluation out;
  out.mass = mass_properties(design.rotor);
  out.features = featureize(design.rotor, design.bearing, design.op, fluids);
  const auto& g = design.bearing;
  const double Omega = design.op.omega();
  const double mu = fluid_properties(fluids, design.op.fluid, design.op.T, design.op.p_a).mu;
  out.power_loss_W = 2.0 * power_loss(g, mu, Omega);
  const FilmSolver film(out.features.bearing(), out.features.Lambda, kDefaultPerturbation, grid_n);
  out.load_capacity_N = load_capacity_proxy(film.coefficients(1.0), g, design.op.p_a);

  for (const auto& name : ranges.out_of_range(out.features))
    out.warnings.push_back("feature '" + name + "' outside the training range");
  const auto& rotor = design.rotor;
  const auto& ea = rotor.elements[*rotor.journal_a];
  const auto& eb = rotor.elements[*rotor.journal_b];
  if (ea.L != eb.L || ea.layers.back().D_outer != eb.layers.back().D_outer)
    out.warnings.emplace_back("journal_b dimensions differ from journal_a; both bearings use journal_a's L and D");
  return out;
}

PointEvaluation evaluate_oracle(const Design& design, const FluidRegistry& fluids, const OracleOptions& options) {
  PointEvaluation out = evaluate_common(design, fluids, options.grid_n);
  out.modes = oracle_stability(out.features, options).modes;
  return out;
}

}  // namespace gasrotor
