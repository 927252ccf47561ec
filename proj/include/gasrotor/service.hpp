#pragma once

// HTTP/JSON front end. Handlers are plain functions of the request body so
// they can be exercised without a socket; serve() binds them to routes.

#include <chrono>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "gasrotor/error.hpp"
#include "gasrotor/json_io.hpp"
#include "gasrotor/surrogate.hpp"
#include "gasrotor/sweep.hpp"

namespace gasrotor {

inline constexpr const char* kVersion = "1.0.0";

/// Keys of the config file; every one may be overridden by the environment
/// variable GASROTOR_<KEY in upper case>.
struct ServiceConfig {
  std::string model_path;      // model loaded at startup; empty: first valid file in model_dir
  std::string model_dir;       // *.grsm files listed by /api/v1/models
  std::string fluid_registry;  // JSON fluid table; empty: built-in air and nitrogen
  double timeout_s = 60.0;
  int grid_n = kDefaultGridN;  // film grid
  int sweep_grid_n = 21;
  int speed_points = 11;
  double speed_lo = 0.5;  // fractions of the nominal speed
  double speed_hi = 1.2;
  std::string host = "127.0.0.1";
  int port = 8080;
  unsigned threads = 1;
};

using EnvLookup = std::function<const char*(const char*)>;

/// Reads `path` (empty: defaults only), then applies environment overrides.
ServiceConfig load_config(const std::string& path, const EnvLookup& env = {});
ServiceConfig config_from_json(const Json& j, ServiceConfig base = {});
void apply_env(ServiceConfig& c, const EnvLookup& env);
Json to_json(const ServiceConfig& c);

FluidRegistry load_fluids(const ServiceConfig& c);

struct ModelEntry {
  std::string name;
  std::string path;
  std::string digest;  // SHA-256 of the file
  bool valid = false;
  std::string error_code;
  std::string error;
  std::optional<ModelMetadata> metadata;
};

/// The startup snapshot of model files; immutable afterwards.
struct ModelRegistry {
  std::vector<ModelEntry> entries;
  std::shared_ptr<const SurrogateModel> model;
  std::string model_digest;
  std::string model_name;
};

/// Scans model_dir (and model_path). Files failing integrity checks are listed
/// as invalid and never loaded.
ModelRegistry scan_models(const ServiceConfig& c);

struct ComputeRequest {
  Design design;
  EvaluatorKind evaluator = EvaluatorKind::surrogate;
  int grid_n = kDefaultGridN;
  std::optional<SweepSpec> sweep;
};

/// The one validation path shared by the CLI and the service. `rotor` may be a
/// rotor document object or its text.
Rotor rotor_from_json(const Json& j);
ComputeRequest parse_compute_request(std::string_view body, const ServiceConfig& config, const FluidRegistry& fluids);

struct Response {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;
};

int http_status(const std::string& code);
Json error_json(const Error& e);

class Service {
 public:
  Service(ServiceConfig config, FluidRegistry fluids, ModelRegistry models);
  static Service from_config(const ServiceConfig& config);

  Response validate_rotor(std::string_view body) const;
  Response compute(std::string_view body) const;
  /// NDJSON: progress events, then one result (or error) event. `emit`
  /// receives each line as it is produced; the body holds all of them.
  Response sweep(std::string_view body, const std::function<void(const std::string&)>& emit = {}) const;
  Response models() const;
  Response health() const;

  /// Routes by method and path; unknown routes give 404.
  Response handle(std::string_view method, std::string_view path, std::string_view body) const;

  const ServiceConfig& config() const { return config_; }
  const ModelRegistry& registry() const { return models_; }
  const FluidRegistry& fluids() const { return fluids_; }

  PointEvaluator evaluator(EvaluatorKind kind, int grid_n,
                           std::optional<std::chrono::steady_clock::time_point> deadline = {}) const;

 private:
  ServiceConfig config_;
  FluidRegistry fluids_;
  ModelRegistry models_;
};

/// Blocks serving HTTP until stop is requested or the process ends.
void serve(const Service& service);

}  // namespace gasrotor
