#include <doctest.h>

#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <thread>

#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include "gasrotor/service.hpp"

#include <httplib.h>

extern char** environ;

using namespace gasrotor;
namespace fs = std::filesystem;

namespace {

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary);
  out << s;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("gasrotor_service_" + std::to_string(::getpid())) / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

Json reference_rotor() { return Json::parse(read_text(std::string(GASROTOR_DATA_DIR) + "/reference.rotor")); }

Json compute_body(const std::string& evaluator = "oracle") {
  return {{"rotor", reference_rotor()},
          {"bearing", {{"alpha", 0.5}, {"beta_rad", 2.44}, {"gamma", 0.8}, {"h_g_m", 10e-6}, {"h_r_m", 5e-6}}},
          {"operating_point", {{"fluid", "air"}, {"p_a_Pa", 1e5}, {"T_K", 293.15}, {"N_rpm", 1e5}}},
          {"evaluator", evaluator}};
}

Json without_timing(Json j) {
  j.erase("timing_ms");
  return j;
}

const std::string kShortElement = R"({"L_m": 0.01, "layers": [{"d_m": 0, "D_m": 0.01, "material": "steel"}]})";
const std::string kBadRotor = R"({"format_version": 1, "elements": [)" + kShortElement +
                              R"(, {"L_m": 0.01, "layers": [{"d_m": 0.01, "D_m": 0.008, "material": "steel"}]}]})";

Service plain_service(ServiceConfig c = {}) { return Service(c, FluidRegistry::defaults(), ModelRegistry{}); }

// Tiny model trained on closed-form labels.
SurrogateModel tiny_model() {
  TrainingDataset d;
  for (const FeatureVector& f : sample_features(FeatureRanges{}, 150, 1)) {
    DatasetRow row;
    row.features = f;
    for (auto& l : row.labels) {
      l.excited = f.alpha > 0.4;
      if (!l.excited) continue;
      l.stable = f.gamma > 0.6;
      l.whirl_speed_ratio = 0.5;
      l.log_dec = f.gamma - 0.6;
    }
    d.rows.push_back(row);
  }
  assign_splits(d, 1);
  TrainingConfig c;
  for (auto& t : c.tasks) {
    t.hidden = {4};
    t.hyper.epochs = 5;
  }
  return train_surrogate(d, c, 2);
}

std::string run_capture_stderr(const std::string& cmd) {
  const fs::path err = scratch("cli") / "stderr.txt";
  const int rc = std::system((cmd + " >/dev/null 2>" + err.string()).c_str());
  CHECK(rc != 0);
  return read_text(err);
}

}  // namespace

TEST_CASE("validate endpoint") {
  const Service s = plain_service();
  const Response ok = s.handle("POST", "/api/v1/rotor/validate", "{\"format_version\": 1, \"elements\": [" + kShortElement + "]}");
  CHECK(ok.status == 200);
  const Json j = Json::parse(ok.body);
  CHECK(j.at("valid") == true);
  CHECK(j.at("mass_properties").at("mass_kg").get<double>() == doctest::Approx(7800.0 * 3.14159265358979 / 4 * 1e-4 * 0.01));

  const Json thick = Json::parse(
      s.validate_rotor(R"({"format_version": 1, "elements": [{"L_m": 0.1, "layers": [{"d_m": 0, "D_m": 0.02, "rho_kg_m3": 8000}]}]})")
          .body);
  CHECK(thick.at("mass_properties").at("mass_kg").get<double>() == doctest::Approx(0.2513).epsilon(1e-3));

  const Response bad = s.validate_rotor(kBadRotor);
  CHECK(bad.status == 422);
  const Json e = Json::parse(bad.body);
  CHECK(e.at("code") == errc::invalid_rotor);
  CHECK(e.at("path").get<std::string>().find("elements[1]") != std::string::npos);

  CHECK(s.validate_rotor("").status == 400);
  CHECK(s.validate_rotor("{not json").status == 400);
}

TEST_CASE("CLI and service report the same validation error") {
  const fs::path dir = scratch("parity");
  const std::vector<std::string> docs{kBadRotor, "{\"format_version\": 1, \"elements\": [}",
                                      R"({"format_version": 1, "elements": [{"L_m": 0.01, "layers": [{"d_m": 0, "D_m": 0.01, "material": "unobtainium"}]}]})"};
  const Service s = plain_service();
  for (std::size_t k = 0; k < docs.size(); ++k) {
    CAPTURE(k);
    const fs::path f = dir / ("bad" + std::to_string(k) + ".json");
    write_text(f, docs[k]);
    const Json cli = Json::parse(run_capture_stderr(std::string(GASROTOR_CLI) + " validate " + f.string()));
    const Json svc = Json::parse(s.validate_rotor(docs[k]).body);
    CHECK(cli.at("code") == svc.at("code"));
    CHECK(cli.at("path") == svc.at("path"));
    CHECK(cli.at("message") == svc.at("message"));
  }
}

TEST_CASE("compute: errors and idempotence") {
  const Service s = plain_service();
  const Response none = s.compute(compute_body("surrogate").dump());
  CHECK(none.status == 404);
  CHECK(Json::parse(none.body).at("code") == errc::no_model);

  Json rest = compute_body();
  rest["operating_point"]["N_rpm"] = 0.0;
  const Response r0 = s.compute(rest.dump());
  CHECK(r0.status == 422);
  CHECK(Json::parse(r0.body).at("path") == "operating_point.N_rpm");

  Json missing = compute_body();
  missing.erase("bearing");
  CHECK(s.compute(missing.dump()).status == 422);
  CHECK(s.compute("").status == 400);
  Json fluid = compute_body();
  fluid["operating_point"]["fluid"] = "xenon";
  CHECK(Json::parse(s.compute(fluid.dump()).body).at("code") == errc::unknown_fluid);

  const Response a = s.compute(compute_body().dump());
  const Response b = s.compute(compute_body().dump());
  REQUIRE(a.status == 200);
  CHECK(without_timing(Json::parse(a.body)) == without_timing(Json::parse(b.body)));
  const Json j = Json::parse(a.body);
  CHECK(j.at("evaluator") == "oracle");
  CHECK(j.at("model_digest").is_null());
  CHECK(j.at("modes").size() == 4);
  CHECK(j.contains("timing_ms"));
}

TEST_CASE("a one-cell sweep equals compute") {
  const Service s = plain_service();
  Json body = compute_body();
  body["sweep"] = {{"delta_h_r_m", 1e-6}, {"delta_h_g_m", 1e-6}, {"grid_n", 1}, {"speeds_rpm", {1e5}}};
  const Response sw = s.sweep(body.dump());
  REQUIRE(sw.status == 200);
  CHECK(sw.content_type == "application/x-ndjson");
  std::vector<Json> events;
  std::istringstream lines(sw.body);
  for (std::string line; std::getline(lines, line);) events.push_back(Json::parse(line));
  REQUIRE(events.size() == 2);
  CHECK(events[0].at("event") == "progress");
  CHECK(events.back().at("event") == "result");
  const Json& contours = events.back().at("contours");
  const Json c = Json::parse(s.compute(compute_body().dump()).body);
  CHECK(contours.at("nominal_modes").at(0) == c.at("modes"));
  CHECK(contours.at("metadata").at("design_digest") == c.at("design_digest"));

  body["sweep"]["grid_n"] = 0;
  CHECK(s.sweep(body.dump()).status == 422);
  body.erase("sweep");
  CHECK(s.sweep(body.dump()).status == 422);
}

TEST_CASE("timeouts give 504") {
  ServiceConfig c;
  c.timeout_s = 1e-6;
  const Service s = plain_service(c);
  const Response r = s.compute(compute_body().dump());
  CHECK(r.status == 504);
  CHECK(Json::parse(r.body).at("code") == errc::timeout);
  Json body = compute_body();
  body["sweep"] = {{"delta_h_r_m", 1e-6}, {"grid_n", 3}, {"speeds_rpm", {1e5}}};
  const Response sw = s.sweep(body.dump());
  CHECK(sw.status == 504);
  const std::string last = sw.body.substr(sw.body.rfind('\n', sw.body.size() - 2) + 1);
  CHECK(Json::parse(last).at("event") == "error");
}

TEST_CASE("routes") {
  const Service s = plain_service();
  CHECK(s.handle("GET", "/nope", "").status == 404);
  CHECK(s.handle("GET", "/api/v1/compute", "").status == 404);
  const Response h = s.handle("GET", "/healthz", "");
  CHECK(h.status == 200);
  CHECK(Json::parse(h.body).at("model_digest").is_null());
}

TEST_CASE("model registry: corrupted files are listed invalid and never loaded") {
  const fs::path dir = scratch("models");
  const SurrogateModel model = tiny_model();
  const std::string bytes = serialize_model(model);
  std::string corrupt = bytes;
  corrupt[corrupt.size() - 10] ^= 0x40;
  write_text(dir / "a_corrupt.grsm", corrupt);
  write_text(dir / "b_good.grsm", bytes);
  write_text(dir / "c_truncated.grsm", bytes.substr(0, 100));
  write_text(dir / "notes.txt", "ignored");

  ServiceConfig c;
  c.model_dir = dir.string();
  const Service s = Service::from_config(c);
  const Json list = Json::parse(s.models().body);
  REQUIRE(list.at("models").size() == 3);
  CHECK(list.at("models")[0].at("status") == "invalid");
  CHECK(list.at("models")[0].at("error").at("code") == errc::model_digest);
  CHECK(list.at("models")[1].at("status") == "valid");
  CHECK(list.at("models")[2].at("error").at("code") == errc::model_truncated);
  REQUIRE(s.registry().model);
  CHECK(s.registry().model_name == "b_good.grsm");
  CHECK(*s.registry().model == model);

  const Response r = s.compute(compute_body("surrogate").dump());
  REQUIRE(r.status == 200);
  CHECK(Json::parse(r.body).at("model_digest") == list.at("loaded"));
  CHECK(without_timing(Json::parse(r.body)) == without_timing(Json::parse(s.compute(compute_body("surrogate").dump()).body)));

  SUBCASE("only corrupted files: nothing loads") {
    fs::remove(dir / "b_good.grsm");
    const Service t = Service::from_config(c);
    CHECK_FALSE(t.registry().model);
    CHECK(t.compute(compute_body("surrogate").dump()).status == 404);
    CHECK(t.health().status == 200);
  }
  SUBCASE("explicit path to a corrupted file") {
    ServiceConfig p;
    p.model_path = (dir / "a_corrupt.grsm").string();
    const Service t = Service::from_config(p);
    CHECK_FALSE(t.registry().model);
    REQUIRE(t.registry().entries.size() == 1);
    CHECK_FALSE(t.registry().entries[0].valid);
  }
}

TEST_CASE("empty or missing model directory") {
  ServiceConfig c;
  c.model_dir = scratch("empty").string();
  const Service s = Service::from_config(c);
  CHECK(Json::parse(s.models().body).at("models").empty());
  CHECK(s.health().status == 200);
  c.model_dir = (scratch("empty") / "absent").string();
  CHECK(Service::from_config(c).registry().entries.empty());
}

TEST_CASE("config file and environment overrides") {
  std::map<std::string, std::string> env{{"GASROTOR_PORT", "9091"}, {"GASROTOR_TIMEOUT_S", "2.5"}, {"GASROTOR_MODEL_DIR", "/tmp/m"}};
  const EnvLookup lookup = [&](const char* k) -> const char* {
    const auto it = env.find(k);
    return it == env.end() ? nullptr : it->second.c_str();
  };
  const ServiceConfig c = load_config(std::string(GASROTOR_DATA_DIR) + "/../config/default.json", lookup);
  CHECK(c.port == 9091);
  CHECK(c.timeout_s == 2.5);
  CHECK(c.model_dir == "/tmp/m");
  CHECK(c.grid_n == 101);
  CHECK(c.sweep_grid_n == 21);
  CHECK(config_from_json(to_json(c)).port == 9091);

  env["GASROTOR_GRID_N"] = "lots";
  CHECK_THROWS_AS(load_config("", lookup), Error);
  env["GASROTOR_GRID_N"] = "5";
  CHECK_THROWS_AS(load_config("", lookup), Error);
  CHECK_THROWS_AS(config_from_json(Json{{"colour", "red"}}), Error);
}

TEST_CASE("HTTP endpoints over a socket") {
  const int port = 20000 + ::getpid() % 20000;
  const fs::path models = scratch("http_models");
  const std::string port_env = "GASROTOR_PORT=" + std::to_string(port);
  const std::string dir_env = "GASROTOR_MODEL_DIR=" + models.string();
  std::vector<std::string> envs{port_env, dir_env};
  for (char** e = environ; *e; ++e)
    if (std::string_view(*e).rfind("GASROTOR_", 0) != 0) envs.emplace_back(*e);
  std::vector<char*> envp;
  for (auto& e : envs) envp.push_back(e.data());
  envp.push_back(nullptr);
  std::string exe = GASROTOR_CLI, sub = "serve";
  char* argv[] = {exe.data(), sub.data(), nullptr};
  pid_t pid = 0;
  REQUIRE(posix_spawn(&pid, exe.c_str(), nullptr, nullptr, argv, envp.data()) == 0);

  httplib::Client cli("127.0.0.1", port);
  cli.set_read_timeout(60, 0);
  bool up = false;
  for (int i = 0; i < 100 && !up; ++i) {
    if (auto r = cli.Get("/healthz")) up = r->status == 200;
    else std::this_thread::sleep_for(std::chrono::milliseconds(100));
  }
  CHECK(up);
  if (up) {
    auto models_r = cli.Get("/api/v1/models");
    REQUIRE(models_r);
    CHECK(Json::parse(models_r->body).at("models").empty());
    auto v = cli.Post("/api/v1/rotor/validate", kBadRotor, "application/json");
    REQUIRE(v);
    CHECK(v->status == 422);
    auto c = cli.Post("/api/v1/compute", compute_body().dump(), "application/json");
    REQUIRE(c);
    CHECK(c->status == 200);
    CHECK(without_timing(Json::parse(c->body)) == without_timing(Json::parse(plain_service().compute(compute_body().dump()).body)));
    auto ns = cli.Post("/api/v1/compute", compute_body("surrogate").dump(), "application/json");
    REQUIRE(ns);
    CHECK(ns->status == 404);
    Json body = compute_body();
    body["sweep"] = {{"delta_h_r_m", 1e-6}, {"grid_n", 3}, {"speeds_rpm", {1e5}}};
    auto sw = cli.Post("/api/v1/sweep", body.dump(), "application/json");
    REQUIRE(sw);
    CHECK(sw->status == 200);
    CHECK(sw->body.find("\"event\":\"result\"") != std::string::npos);
    auto missing = cli.Get("/api/v1/nothing");
    REQUIRE(missing);
    CHECK(missing->status == 404);
  }
  ::kill(pid, SIGTERM);
  int status = 0;
  ::waitpid(pid, &status, 0);
}
