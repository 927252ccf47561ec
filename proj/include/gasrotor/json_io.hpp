#pragma once

// JSON mappings of engine types shared by the model metadata, the service and
// the CLI.

#include <json.hpp>

#include "gasrotor/features.hpp"

namespace gasrotor {

using Json = nlohmann::ordered_json;

Json to_json(const FeatureRanges& r);
/// Missing keys keep their defaults.
FeatureRanges ranges_from_json(const Json& j);

Json to_json(const FeatureVector& f);
Json to_json(const MassProperties& mp);
Json to_json(const ModeStabilityResult& r);
Json to_json(const ModeResults& modes);

/// {"alpha", "beta_rad", "gamma", "h_g_m", "h_r_m"}; L and D come from the rotor.
HGJBGeometry grooves_from_json(const Json& j);
Json grooves_to_json(const HGJBGeometry& g);
/// {"fluid", "p_a_Pa", "T_K", "N_rpm"}
OperatingPoint operating_point_from_json(const Json& j);
Json to_json(const OperatingPoint& op);

/// Current UTC time as YYYY-MM-DDTHH:MM:SSZ.
std::string utc_timestamp();

/// Reads a required number, throwing invalid_argument with `path` on a
/// missing or mistyped field.
double number_at(const Json& j, const char* key, const std::string& path);

}  // namespace gasrotor
