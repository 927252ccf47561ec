#include "gasrotor/json_io.hpp"

#include <algorithm>
#include <ctime>

#include "gasrotor/error.hpp"

namespace gasrotor {

namespace {

Json pair(const std::array<double, 2>& p) { return Json::array({p[0], p[1]}); }

void read_pair(const Json& j, const char* key, std::array<double, 2>& out) {
  if (!j.contains(key)) return;
  const auto& v = j.at(key);
  if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number() || !(v[0].get<double>() < v[1].get<double>()))
    throw Error(errc::invalid_argument, std::string("range '") + key + "' must be [lo, hi] with lo < hi",
                std::string("feature_ranges.") + key);
  out = {v[0].get<double>(), v[1].get<double>()};
}

}  // namespace

std::string utc_timestamp() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

double number_at(const Json& j, const char* key, const std::string& path) {
  const std::string where = path.empty() ? key : path + "." + key;
  if (!j.is_object() || !j.contains(key)) throw Error(errc::invalid_argument, "missing field '" + where + "'", where);
  const auto& v = j.at(key);
  if (!v.is_number()) throw Error(errc::invalid_argument, "field '" + where + "' must be a number", where);
  return v.get<double>();
}

Json to_json(const FeatureRanges& r) {
  Json j;
  j["alpha"] = pair(r.alpha);
  j["beta_over_pi"] = pair(r.beta_over_pi);
  j["gamma"] = pair(r.gamma);
  j["groove_ratio"] = pair(r.groove_ratio);
  j["aspect"] = pair(r.aspect);
  j["Lambda"] = pair(r.Lambda);
  j["mass"] = pair(r.mass);
  j["inertia"] = pair(r.inertia);
  j["inertia_ratio"] = pair(r.inertia_ratio);
  j["z1"] = pair(r.z1);
  Json logs = Json::array();
  for (int k : r.log_uniform) logs.push_back(FeatureVector::names()[k]);
  j["log_uniform"] = logs;
  return j;
}

FeatureRanges ranges_from_json(const Json& j) {
  FeatureRanges r;
  if (!j.is_object()) throw Error(errc::invalid_argument, "feature_ranges must be an object", "feature_ranges");
  read_pair(j, "alpha", r.alpha);
  read_pair(j, "beta_over_pi", r.beta_over_pi);
  read_pair(j, "gamma", r.gamma);
  read_pair(j, "groove_ratio", r.groove_ratio);
  read_pair(j, "aspect", r.aspect);
  read_pair(j, "Lambda", r.Lambda);
  read_pair(j, "mass", r.mass);
  read_pair(j, "inertia", r.inertia);
  read_pair(j, "inertia_ratio", r.inertia_ratio);
  read_pair(j, "z1", r.z1);
  if (j.contains("log_uniform")) {
    const auto& logs = j.at("log_uniform");
    if (!logs.is_array()) throw Error(errc::invalid_argument, "log_uniform must be a list of feature names", "feature_ranges.log_uniform");
    r.log_uniform.clear();
    const auto b = r.bounds();
    for (const auto& name : logs) {
      const auto& names = FeatureVector::names();
      const auto it = name.is_string() ? std::find(names.begin(), names.begin() + 10, name.get<std::string>()) : names.end();
      if (it == names.begin() + 10 || it == names.end())
        throw Error(errc::invalid_argument, "log_uniform names an unknown feature", "feature_ranges.log_uniform");
      const int k = static_cast<int>(it - names.begin());
      if (!(b[k][0] > 0.0)) throw Error(errc::invalid_argument, "log-uniform range must be positive", "feature_ranges.log_uniform");
      r.log_uniform.push_back(k);
    }
  }
  return r;
}

Json to_json(const FeatureVector& f) {
  Json j;
  const auto v = f.to_vector();
  for (int k = 0; k < FeatureVector::kSize; ++k) j[FeatureVector::names()[k]] = v[k];
  return j;
}

Json to_json(const MassProperties& mp) {
  Json j;
  j["mass_kg"] = mp.mass;
  j["z_cg_m"] = mp.z_cg;
  j["I_polar_kg_m2"] = mp.I_polar;
  j["I_transverse_kg_m2"] = mp.I_transverse;
  j["z1_m"] = mp.z1 ? Json(*mp.z1) : Json(nullptr);
  j["z2_m"] = mp.z2 ? Json(*mp.z2) : Json(nullptr);
  return j;
}

Json to_json(const ModeStabilityResult& r) {
  Json j;
  j["mode"] = static_cast<int>(r.mode);
  j["name"] = mode_name(r.mode);
  j["excited"] = r.excited;
  j["stable"] = r.excited ? Json(r.stable) : Json(nullptr);
  j["whirl_speed_ratio"] = r.whirl_speed_ratio ? Json(*r.whirl_speed_ratio) : Json(nullptr);
  j["log_dec"] = r.log_dec ? Json(*r.log_dec) : Json(nullptr);
  return j;
}

Json to_json(const ModeResults& modes) {
  Json j = Json::array();
  for (const auto& m : modes) j.push_back(to_json(m));
  return j;
}

HGJBGeometry grooves_from_json(const Json& j) {
  if (!j.is_object()) throw Error(errc::invalid_argument, "bearing must be an object", "bearing");
  HGJBGeometry g;
  g.alpha = number_at(j, "alpha", "bearing");
  g.beta = number_at(j, "beta_rad", "bearing");
  g.gamma = number_at(j, "gamma", "bearing");
  g.h_g = number_at(j, "h_g_m", "bearing");
  g.h_r = number_at(j, "h_r_m", "bearing");
  return g;
}

Json grooves_to_json(const HGJBGeometry& g) {
  Json j;
  j["alpha"] = g.alpha;
  j["beta_rad"] = g.beta;
  j["gamma"] = g.gamma;
  j["h_g_m"] = g.h_g;
  j["h_r_m"] = g.h_r;
  return j;
}

OperatingPoint operating_point_from_json(const Json& j) {
  if (!j.is_object()) throw Error(errc::invalid_argument, "operating_point must be an object", "operating_point");
  OperatingPoint op;
  if (j.contains("fluid")) {
    if (!j.at("fluid").is_string())
      throw Error(errc::invalid_argument, "operating_point.fluid must be a string", "operating_point.fluid");
    op.fluid = j.at("fluid").get<std::string>();
  }
  op.p_a = number_at(j, "p_a_Pa", "operating_point");
  op.T = number_at(j, "T_K", "operating_point");
  op.N = number_at(j, "N_rpm", "operating_point");
  return op;
}

Json to_json(const OperatingPoint& op) {
  Json j;
  j["fluid"] = op.fluid;
  j["p_a_Pa"] = op.p_a;
  j["T_K"] = op.T;
  j["N_rpm"] = op.N;
  return j;
}

}  // namespace gasrotor
