#include "gasrotor/service.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <httplib.h>

#include "gasrotor/digest.hpp"

namespace gasrotor {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(errc::io_error, "cannot open '" + path + "'", path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Json parse_body(std::string_view body, const char* what) {
  if (body.find_first_not_of(" \t\r\n") == std::string_view::npos)
    throw Error(errc::parse_error, std::string("empty ") + what + " body");
  try {
    return Json::parse(body.begin(), body.end());
  } catch (const Json::parse_error& e) {
    throw Error(errc::parse_error, std::string(what) + " body is not valid JSON: " + e.what());
  }
}

Response json_response(int status, const Json& j) { return {status, "application/json", j.dump()}; }

Response error_response(const Error& e) { return json_response(http_status(e.code()), error_json(e)); }

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

int parse_int(const std::string& key, const char* v) {
  try {
    std::size_t pos = 0;
    const int out = std::stoi(v, &pos);
    if (pos != std::string_view(v).size()) throw std::invalid_argument(key);
    return out;
  } catch (const std::exception&) {
    throw Error(errc::invalid_argument, "environment variable " + key + " must be an integer", key);
  }
}

double parse_double(const std::string& key, const char* v) {
  try {
    std::size_t pos = 0;
    const double out = std::stod(v, &pos);
    if (pos != std::string_view(v).size()) throw std::invalid_argument(key);
    return out;
  } catch (const std::exception&) {
    throw Error(errc::invalid_argument, "environment variable " + key + " must be a number", key);
  }
}

void check(const ServiceConfig& c) {
  if (!(c.timeout_s > 0.0)) throw Error(errc::invalid_argument, "timeout_s must be > 0", "timeout_s");
  if (c.grid_n < 11) throw Error(errc::invalid_argument, "grid_n must be >= 11", "grid_n");
  if (c.sweep_grid_n < 1) throw Error(errc::invalid_argument, "sweep_grid_n must be >= 1", "sweep_grid_n");
  if (c.speed_points < 1) throw Error(errc::invalid_argument, "speed_points must be >= 1", "speed_points");
  if (!(c.speed_lo > 0.0 && c.speed_lo <= c.speed_hi))
    throw Error(errc::invalid_argument, "need 0 < speed_lo <= speed_hi", "speed_lo");
  if (c.port < 0 || c.port > 65535) throw Error(errc::invalid_argument, "port out of range", "port");
}

ModelEntry inspect_model(const fs::path& p) {
  ModelEntry e;
  e.name = p.filename().string();
  e.path = p.string();
  try {
    const std::string bytes = read_file(e.path);
    e.digest = sha256_hex(bytes);
    e.metadata = deserialize_model(bytes).metadata;
    e.valid = true;
  } catch (const Error& err) {
    e.error_code = err.code();
    e.error = err.what();
  }
  return e;
}

Json model_entry_json(const ModelEntry& e) {
  Json j;
  j["name"] = e.name;
  j["path"] = e.path;
  j["status"] = e.valid ? "valid" : "invalid";
  j["digest"] = e.digest.empty() ? Json(nullptr) : Json(e.digest);
  if (e.metadata) {
    j["metadata"] = {{"config_digest", e.metadata->config_digest},
                     {"dataset_digest", e.metadata->dataset_digest},
                     {"seed", e.metadata->seed},
                     {"created", e.metadata->created},
                     {"threshold", e.metadata->threshold}};
  } else {
    j["error"] = {{"code", e.error_code}, {"message", e.error}};
  }
  return j;
}

Json evaluation_json(const PointEvaluation& e) {
  Json j;
  j["mass_properties"] = to_json(e.mass);
  j["features"] = to_json(e.features);
  j["modes"] = to_json(e.modes);
  j["power_loss_W"] = e.power_loss_W;
  j["load_capacity_N"] = e.load_capacity_N;
  j["warnings"] = e.warnings;
  return j;
}

SweepSpec sweep_from_json(const Json& j, const Design& d, const ServiceConfig& c) {
  if (!j.is_object()) throw Error(errc::invalid_argument, "sweep must be an object", "sweep");
  SweepSpec s;
  s.tolerance.delta_h_r = j.contains("delta_h_r_m") ? number_at(j, "delta_h_r_m", "sweep") : 0.0;
  s.tolerance.delta_h_g = j.contains("delta_h_g_m") ? number_at(j, "delta_h_g_m", "sweep") : 0.0;
  s.tolerance.grid_n = c.sweep_grid_n;
  if (j.contains("grid_n")) {
    if (!j.at("grid_n").is_number_integer())
      throw Error(errc::invalid_argument, "sweep.grid_n must be an integer", "sweep.grid_n");
    s.tolerance.grid_n = j.at("grid_n").get<int>();
  }
  if (j.contains("speeds_rpm")) {
    const auto& v = j.at("speeds_rpm");
    if (!v.is_array()) throw Error(errc::invalid_argument, "sweep.speeds_rpm must be an array", "sweep.speeds_rpm");
    for (std::size_t k = 0; k < v.size(); ++k) {
      if (!v[k].is_number())
        throw Error(errc::invalid_argument, "speeds must be numbers", "sweep.speeds_rpm[" + std::to_string(k) + "]");
      s.speeds.push_back(v[k].get<double>());
    }
  } else {
    if (!(d.op.N > 0.0)) throw Error(errc::out_of_range, "N_rpm must be > 0 for a speed sweep", "operating_point.N_rpm");
    s.speeds = default_speeds(d.op.N, c.speed_points, c.speed_lo, c.speed_hi);
  }
  validate(s, d);
  return s;
}

}  // namespace

int http_status(const std::string& code) {
  if (code == errc::parse_error) return 400;
  if (code == errc::invalid_rotor || code == errc::invalid_argument || code == errc::out_of_range ||
      code == errc::unknown_material || code == errc::unknown_fluid)
    return 422;
  if (code == errc::no_model) return 404;
  if (code == errc::timeout) return 504;
  return 500;
}

Json error_json(const Error& e) {
  Json j;
  j["code"] = e.code();
  j["message"] = e.what();
  j["path"] = e.path().empty() ? Json(nullptr) : Json(e.path());
  return j;
}

ServiceConfig config_from_json(const Json& j, ServiceConfig c) {
  if (!j.is_object()) throw Error(errc::parse_error, "config must be a JSON object");
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "model_path") c.model_path = v.get<std::string>();
      else if (key == "model_dir") c.model_dir = v.get<std::string>();
      else if (key == "fluid_registry") c.fluid_registry = v.get<std::string>();
      else if (key == "timeout_s") c.timeout_s = v.get<double>();
      else if (key == "grid_n") c.grid_n = v.get<int>();
      else if (key == "sweep_grid_n") c.sweep_grid_n = v.get<int>();
      else if (key == "speed_points") c.speed_points = v.get<int>();
      else if (key == "speed_lo") c.speed_lo = v.get<double>();
      else if (key == "speed_hi") c.speed_hi = v.get<double>();
      else if (key == "host") c.host = v.get<std::string>();
      else if (key == "port") c.port = v.get<int>();
      else if (key == "threads") c.threads = v.get<unsigned>();
      else throw Error(errc::invalid_argument, "unknown config key '" + key + "'", key);
    }
  } catch (const Json::exception& e) {
    throw Error(errc::parse_error, std::string("config: ") + e.what());
  }
  check(c);
  return c;
}

void apply_env(ServiceConfig& c, const EnvLookup& env) {
  const EnvLookup get = env ? env : EnvLookup([](const char* k) { return std::getenv(k); });
  if (const char* v = get("GASROTOR_MODEL_PATH")) c.model_path = v;
  if (const char* v = get("GASROTOR_MODEL_DIR")) c.model_dir = v;
  if (const char* v = get("GASROTOR_FLUID_REGISTRY")) c.fluid_registry = v;
  if (const char* v = get("GASROTOR_TIMEOUT_S")) c.timeout_s = parse_double("GASROTOR_TIMEOUT_S", v);
  if (const char* v = get("GASROTOR_GRID_N")) c.grid_n = parse_int("GASROTOR_GRID_N", v);
  if (const char* v = get("GASROTOR_SWEEP_GRID_N")) c.sweep_grid_n = parse_int("GASROTOR_SWEEP_GRID_N", v);
  if (const char* v = get("GASROTOR_SPEED_POINTS")) c.speed_points = parse_int("GASROTOR_SPEED_POINTS", v);
  if (const char* v = get("GASROTOR_SPEED_LO")) c.speed_lo = parse_double("GASROTOR_SPEED_LO", v);
  if (const char* v = get("GASROTOR_SPEED_HI")) c.speed_hi = parse_double("GASROTOR_SPEED_HI", v);
  if (const char* v = get("GASROTOR_HOST")) c.host = v;
  if (const char* v = get("GASROTOR_PORT")) c.port = parse_int("GASROTOR_PORT", v);
  if (const char* v = get("GASROTOR_THREADS")) c.threads = static_cast<unsigned>(std::max(1, parse_int("GASROTOR_THREADS", v)));
  check(c);
}

ServiceConfig load_config(const std::string& path, const EnvLookup& env) {
  ServiceConfig c;
  if (!path.empty()) {
    const std::string text = read_file(path);
    Json j;
    try {
      j = Json::parse(text);
    } catch (const Json::parse_error& e) {
      throw Error(errc::parse_error, "config '" + path + "': " + e.what(), path);
    }
    c = config_from_json(j.contains("service") ? j.at("service") : j);
  }
  apply_env(c, env);
  return c;
}

Json to_json(const ServiceConfig& c) {
  Json j;
  j["model_path"] = c.model_path;
  j["model_dir"] = c.model_dir;
  j["fluid_registry"] = c.fluid_registry;
  j["timeout_s"] = c.timeout_s;
  j["grid_n"] = c.grid_n;
  j["sweep_grid_n"] = c.sweep_grid_n;
  j["speed_points"] = c.speed_points;
  j["speed_lo"] = c.speed_lo;
  j["speed_hi"] = c.speed_hi;
  j["host"] = c.host;
  j["port"] = c.port;
  j["threads"] = c.threads;
  return j;
}

FluidRegistry load_fluids(const ServiceConfig& c) {
  if (c.fluid_registry.empty()) return FluidRegistry::defaults();
  return FluidRegistry::from_json(read_file(c.fluid_registry));
}

ModelRegistry scan_models(const ServiceConfig& c) {
  ModelRegistry r;
  std::vector<fs::path> files;
  if (!c.model_dir.empty() && fs::exists(c.model_dir)) {
    std::error_code ec;
    for (const auto& de : fs::directory_iterator(c.model_dir, ec))
      if (de.is_regular_file() && de.path().extension() == ".grsm") files.push_back(de.path());
    if (ec) throw Error(errc::io_error, "cannot list model_dir '" + c.model_dir + "': " + ec.message(), "model_dir");
    std::sort(files.begin(), files.end());
  }
  if (!c.model_path.empty()) {
    const fs::path p(c.model_path);
    const bool listed = std::any_of(files.begin(), files.end(), [&](const fs::path& f) {
      std::error_code ec;
      return fs::equivalent(f, p, ec);
    });
    if (!listed) files.insert(files.begin(), p);
  }
  for (const auto& f : files) r.entries.push_back(inspect_model(f));

  const ModelEntry* chosen = nullptr;
  if (!c.model_path.empty()) {
    for (const auto& e : r.entries) {
      std::error_code ec;
      if (fs::equivalent(e.path, c.model_path, ec) && e.valid) chosen = &e;
    }
  } else {
    for (const auto& e : r.entries)
      if (e.valid) {
        chosen = &e;
        break;
      }
  }
  if (chosen) {
    const std::string bytes = read_file(chosen->path);
    // Re-check: only the bytes that were hashed are loaded.
    if (sha256_hex(bytes) == chosen->digest) {
      r.model = std::make_shared<const SurrogateModel>(deserialize_model(bytes));
      r.model_digest = chosen->digest;
      r.model_name = chosen->name;
    }
  }
  return r;
}

Rotor rotor_from_json(const Json& j) {
  if (j.is_string()) return parse_rotor(j.get<std::string>());
  if (j.is_object()) return parse_rotor(j.dump());
  throw Error(errc::invalid_rotor, "rotor must be a rotor document", "rotor");
}

ComputeRequest parse_compute_request(std::string_view body, const ServiceConfig& config, const FluidRegistry& fluids) {
  const Json j = parse_body(body, "request");
  if (!j.is_object()) throw Error(errc::parse_error, "request body must be a JSON object");
  ComputeRequest r;
  if (!j.contains("rotor")) throw Error(errc::invalid_argument, "missing field 'rotor'", "rotor");
  r.design.rotor = rotor_from_json(j.at("rotor"));
  if (!r.design.rotor.has_journals())
    throw Error(errc::invalid_rotor, "both journal bearings must be assigned", "rotor.journal_a");
  if (!j.contains("bearing")) throw Error(errc::invalid_argument, "missing field 'bearing'", "bearing");
  r.design.bearing = journal_geometry(r.design.rotor, grooves_from_json(j.at("bearing")));
  validate(r.design.bearing);
  if (!j.contains("operating_point"))
    throw Error(errc::invalid_argument, "missing field 'operating_point'", "operating_point");
  r.design.op = operating_point_from_json(j.at("operating_point"));
  validate(r.design.op);
  fluid_properties(fluids, r.design.op.fluid, r.design.op.T, r.design.op.p_a);
  if (!(r.design.op.N > 0.0))
    throw Error(errc::out_of_range, "N_rpm must be > 0: the compressibility number and speed sweep are undefined at rest",
                "operating_point.N_rpm");
  if (j.contains("evaluator")) {
    if (!j.at("evaluator").is_string()) throw Error(errc::invalid_argument, "evaluator must be a string", "evaluator");
    r.evaluator = evaluator_from(j.at("evaluator").get<std::string>());
  }
  r.grid_n = config.grid_n;
  if (j.contains("grid_n")) {
    if (!j.at("grid_n").is_number_integer()) throw Error(errc::invalid_argument, "grid_n must be an integer", "grid_n");
    r.grid_n = j.at("grid_n").get<int>();
    if (r.grid_n < 11 || r.grid_n > 401) throw Error(errc::out_of_range, "grid_n must be in [11, 401]", "grid_n");
  }
  if (j.contains("sweep") && !j.at("sweep").is_null()) r.sweep = sweep_from_json(j.at("sweep"), r.design, config);
  if (r.sweep) r.sweep->evaluator = r.evaluator;
  return r;
}

Service::Service(ServiceConfig config, FluidRegistry fluids, ModelRegistry models)
    : config_(std::move(config)), fluids_(std::move(fluids)), models_(std::move(models)) {}

Service Service::from_config(const ServiceConfig& config) {
  return Service(config, load_fluids(config), scan_models(config));
}

PointEvaluator Service::evaluator(EvaluatorKind kind, int grid_n, std::optional<Clock::time_point> deadline) const {
  auto check_deadline = [deadline] {
    if (deadline && Clock::now() > *deadline) throw Error(errc::timeout, "evaluation exceeded the server timeout");
  };
  if (kind == EvaluatorKind::surrogate) {
    if (!models_.model) throw Error(errc::no_model, "no surrogate model is loaded", "evaluator");
    auto model = models_.model;
    return [this, model, grid_n, check_deadline](const Design& d) {
      check_deadline();
      return evaluate_surrogate(d, fluids_, *model, grid_n);
    };
  }
  return [this, grid_n, check_deadline](const Design& d) {
    check_deadline();
    OracleOptions o;
    o.grid_n = grid_n;
    o.checkpoint = check_deadline;
    return evaluate_oracle(d, fluids_, o);
  };
}

Response Service::validate_rotor(std::string_view body) const {
  try {
    const Json j = parse_body(body, "rotor");
    const Rotor rotor = rotor_from_json(j);
    Json out;
    out["valid"] = true;
    out["elements"] = rotor.elements.size();
    out["length_m"] = rotor.length();
    out["mass_properties"] = to_json(mass_properties(rotor));
    Json diag = Json::array();
    if (!rotor.has_journals()) diag.push_back("journal bearings are not both assigned; dynamic evaluation needs them");
    if (!rotor.thrust) diag.push_back("no thrust bearing element assigned");
    if (rotor.has_journals()) {
      const auto& a = rotor.elements[*rotor.journal_a];
      const auto& b = rotor.elements[*rotor.journal_b];
      if (a.L != b.L || a.layers.back().D_outer != b.layers.back().D_outer)
        diag.push_back("journal_b dimensions differ from journal_a; both bearings use journal_a's L and D");
    }
    out["diagnostics"] = diag;
    return json_response(200, out);
  } catch (const Error& e) {
    return error_response(e);
  }
}

Response Service::compute(std::string_view body) const {
  const auto t0 = Clock::now();
  Json timing;
  try {
    const ComputeRequest req = parse_compute_request(body, config_, fluids_);
    timing["parse"] = ms_since(t0);
    const auto deadline = t0 + std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(config_.timeout_s));
    const PointEvaluator eval = evaluator(req.evaluator, req.grid_n, deadline);
    const auto t1 = Clock::now();
    const PointEvaluation e = eval(req.design);
    timing["evaluate"] = ms_since(t1);
    Json out;
    out["api_version"] = "v1";
    out["evaluator"] = evaluator_name(req.evaluator);
    out["model_digest"] = req.evaluator == EvaluatorKind::surrogate ? Json(models_.model_digest) : Json(nullptr);
    out["design_digest"] = design_digest(req.design);
    out.update(evaluation_json(e));
    timing["total"] = ms_since(t0);
    out["timing_ms"] = timing;
    return json_response(200, out);
  } catch (const Error& e) {
    Json err = error_json(e);
    if (e.code() == errc::timeout) {
      timing["total"] = ms_since(t0);
      err["timing_ms"] = timing;
    }
    return json_response(http_status(e.code()), err);
  }
}

Response Service::sweep(std::string_view body, const std::function<void(const std::string&)>& emit) const {
  const auto t0 = Clock::now();
  Response resp;
  resp.content_type = "application/x-ndjson";
  auto push = [&](const Json& j) {
    const std::string line = j.dump() + "\n";
    resp.body += line;
    if (emit) emit(line);
  };
  ComputeRequest req;
  PointEvaluator eval;
  try {
    req = parse_compute_request(body, config_, fluids_);
    if (!req.sweep) throw Error(errc::invalid_argument, "missing field 'sweep'", "sweep");
    const auto deadline = t0 + std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(config_.timeout_s));
    eval = evaluator(req.evaluator, req.grid_n, deadline);
  } catch (const Error& e) {
    return error_response(e);
  }

  SweepOptions opt;
  opt.threads = config_.threads;
  opt.progress = [&](std::size_t done, std::size_t total) {
    push({{"event", "progress"}, {"done", done}, {"total", total}});
  };
  const FeasibilityMap map = run_sweep(req.design, *req.sweep, eval, opt);
  std::size_t timed_out = 0;
  for (const auto& c : map.cells)
    if (!c.valid && c.error.find("timeout") != std::string::npos) ++timed_out;
  if (timed_out > 0) {
    Json err = error_json(Error(errc::timeout, "sweep exceeded the server timeout"));
    err["event"] = "error";
    err["cells_timed_out"] = timed_out;
    err["timing_ms"] = {{"total", ms_since(t0)}};
    push(err);
    resp.status = 504;
    return resp;
  }
  ContourDocument doc = make_contours(map, design_digest(req.design), utc_timestamp());
  Json result;
  result["event"] = "result";
  result["contours"] = to_json(doc);
  result["model_digest"] = req.evaluator == EvaluatorKind::surrogate ? Json(models_.model_digest) : Json(nullptr);
  result["timing_ms"] = {{"total", ms_since(t0)}};
  push(result);
  return resp;
}

Response Service::models() const {
  Json list = Json::array();
  for (const auto& e : models_.entries) list.push_back(model_entry_json(e));
  Json out;
  out["models"] = list;
  out["loaded"] = models_.model ? Json(models_.model_digest) : Json(nullptr);
  return json_response(200, out);
}

Response Service::health() const {
  Json out;
  out["status"] = "ok";
  out["version"] = kVersion;
  out["model_digest"] = models_.model ? Json(models_.model_digest) : Json(nullptr);
  return json_response(200, out);
}

Response Service::handle(std::string_view method, std::string_view path, std::string_view body) const {
  if (method == "GET" && path == "/healthz") return health();
  if (method == "GET" && path == "/api/v1/models") return models();
  if (method == "POST" && path == "/api/v1/rotor/validate") return validate_rotor(body);
  if (method == "POST" && path == "/api/v1/compute") return compute(body);
  if (method == "POST" && path == "/api/v1/sweep") return sweep(body);
  return json_response(404, {{"code", "not_found"}, {"message", "no route " + std::string(method) + " " + std::string(path)},
                             {"path", std::string(path)}});
}

void serve(const Service& service) {
  httplib::Server server;
  auto bind = [&](const char* method, const char* route) {
    auto handler = [&service, method, route](const httplib::Request& req, httplib::Response& res) {
      const Response r = service.handle(method, route, req.body);
      res.status = r.status;
      res.set_content(r.body, r.content_type);
    };
    if (std::string_view(method) == "GET") server.Get(route, handler);
    else server.Post(route, handler);
  };
  bind("GET", "/healthz");
  bind("GET", "/api/v1/models");
  bind("POST", "/api/v1/rotor/validate");
  bind("POST", "/api/v1/compute");

  // Sweeps stream: progress lines are flushed as cells finish.
  server.Post("/api/v1/sweep", [&service](const httplib::Request& req, httplib::Response& res) {
    // Validation errors are reported with a plain status before streaming starts.
    try {
      const ComputeRequest r = parse_compute_request(req.body, service.config(), service.fluids());
      if (!r.sweep) throw Error(errc::invalid_argument, "missing field 'sweep'", "sweep");
      if (r.evaluator == EvaluatorKind::surrogate && !service.registry().model)
        throw Error(errc::no_model, "no surrogate model is loaded", "evaluator");
    } catch (const Error& e) {
      res.status = http_status(e.code());
      res.set_content(error_json(e).dump(), "application/json");
      return;
    }
    const std::string body = req.body;
    res.set_chunked_content_provider("application/x-ndjson", [&service, body](std::size_t, httplib::DataSink& sink) {
      service.sweep(body, [&](const std::string& line) {
        sink.write(line.data(), line.size());
      });
      sink.done();
      return true;
    });
  });

  if (!server.bind_to_port(service.config().host, service.config().port))
    throw Error(errc::io_error, "cannot bind " + service.config().host + ":" + std::to_string(service.config().port));
  server.listen_after_bind();
}

}  // namespace gasrotor
