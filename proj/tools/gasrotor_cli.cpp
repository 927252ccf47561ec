// gasrotor: batch front end of the engine.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numbers>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "gasrotor/dataset.hpp"
#include "gasrotor/digest.hpp"
#include "gasrotor/ga.hpp"
#include "gasrotor/service.hpp"
#include "gasrotor/surrogate.hpp"
#include "gasrotor/sweep.hpp"

using namespace gasrotor;
namespace fs = std::filesystem;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(errc::io_error, "cannot open '" + path + "'", path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& bytes) {
  const fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(errc::io_error, "cannot open '" + path + "' for writing", path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(errc::io_error, "write to '" + path + "' failed", path);
}

// The file given to --config: {"service": {...}, "feature_ranges": {...}, "training": {...}}.
struct FileConfig {
  Json doc = Json::object();
  std::string path;

  const Json* section(const char* key) const { return doc.contains(key) ? &doc.at(key) : nullptr; }
};

FileConfig load_file_config(const std::string& path) {
  FileConfig c;
  c.path = path;
  if (path.empty()) return c;
  try {
    c.doc = Json::parse(read_file(path));
  } catch (const Json::parse_error& e) {
    throw Error(errc::parse_error, "config '" + path + "': " + e.what(), path);
  }
  return c;
}

ServiceConfig service_config(const FileConfig& fc) {
  ServiceConfig c;
  if (const Json* s = fc.section("service")) c = config_from_json(*s);
  apply_env(c, {});
  return c;
}

FeatureRanges feature_ranges(const FileConfig& fc) {
  if (const Json* r = fc.section("feature_ranges")) return ranges_from_json(*r);
  return {};
}

TrainingConfig training_config(const FileConfig& fc, unsigned threads) {
  TrainingConfig t;
  if (const Json* s = fc.section("training")) t = training_config_from_json(s->dump());
  t.threads = threads;
  return t;
}

void write_manifest(const std::string& artifact, const std::string& command, std::uint64_t seed,
                    const Json& inputs, const Json& extra = Json::object()) {
  Json m;
  m["command"] = command;
  m["version"] = kVersion;
  m["seed"] = seed;
  m["inputs"] = inputs;
  m["inputs_digest"] = sha256_hex(inputs.dump());
  m["artifact"] = fs::path(artifact).filename().string();
  m["artifact_digest"] = sha256_hex(read_file(artifact));
  m["created"] = utc_timestamp();
  for (const auto& [k, v] : extra.items()) m[k] = v;
  write_file(artifact + ".manifest.json", m.dump(2) + "\n");
}

Json file_input(const std::string& path) { return {{"path", path}, {"sha256", sha256_hex(read_file(path))}}; }

unsigned default_threads() { return std::max(1u, std::thread::hardware_concurrency()); }

// Design flags shared by compute and sweep; turned into a request document so
// the CLI takes the service's validation path.
struct DesignFlags {
  std::string request;
  std::string rotor;
  double alpha = 0.5, beta_deg = 140.0, gamma = 0.8, h_g_um = 14.0, h_r_um = 7.0;
  std::string fluid = "air";
  double p_a = 1.0e5, T = 293.15, N = 200000.0;
  std::string evaluator = "surrogate";
  int grid_n = 0;

  void add(CLI::App* app) {
    app->add_option("--request", request, "Request document (JSON, as POSTed to the service)");
    app->add_option("--rotor", rotor, "Rotor document");
    app->add_option("--alpha", alpha, "Groove width ratio");
    app->add_option("--beta-deg", beta_deg, "Groove angle, degrees");
    app->add_option("--gamma", gamma, "Grooved region ratio");
    app->add_option("--h-g-um", h_g_um, "Groove depth, um");
    app->add_option("--h-r-um", h_r_um, "Ridge clearance, um");
    app->add_option("--fluid", fluid, "Fluid name");
    app->add_option("--p-a", p_a, "Ambient pressure, Pa");
    app->add_option("--T", T, "Ambient temperature, K");
    app->add_option("--N", N, "Speed, rpm");
    app->add_option("--evaluator", evaluator, "oracle or surrogate")->check(CLI::IsMember({"oracle", "surrogate"}));
    app->add_option("--grid-n", grid_n, "Film grid points per axis");
  }

  Json request_json() const {
    if (!request.empty()) {
      try {
        return Json::parse(read_file(request));
      } catch (const Json::parse_error& e) {
        throw Error(errc::parse_error, "request '" + request + "': " + e.what(), request);
      }
    }
    if (rotor.empty()) throw Error(errc::invalid_argument, "either --request or --rotor is required", "rotor");
    Json j;
    j["rotor"] = read_file(rotor);
    j["bearing"] = {{"alpha", alpha}, {"beta_rad", beta_deg * std::numbers::pi / 180.0}, {"gamma", gamma},
                    {"h_g_m", h_g_um * 1e-6}, {"h_r_m", h_r_um * 1e-6}};
    j["operating_point"] = {{"fluid", fluid}, {"p_a_Pa", p_a}, {"T_K", T}, {"N_rpm", N}};
    j["evaluator"] = evaluator;
    if (grid_n > 0) j["grid_n"] = grid_n;
    return j;
  }
};

void print_modes(const Json& modes) {
  std::printf("%-22s %-8s %-8s %12s %12s\n", "mode", "excited", "stable", "whirl_ratio", "log_dec");
  for (const auto& m : modes) {
    const bool ex = m.at("excited").get<bool>();
    std::printf("%-22s %-8s %-8s", m.at("name").get<std::string>().c_str(), ex ? "yes" : "no",
                ex ? (m.at("stable").get<bool>() ? "yes" : "no") : "-");
    if (ex) std::printf(" %12.6f %12.6f\n", m.at("whirl_speed_ratio").get<double>(), m.at("log_dec").get<double>());
    else std::printf(" %12s %12s\n", "-", "-");
  }
}

Json metrics_json(const ModelMetrics& mm) {
  Json modes = Json::array();
  for (int m = 0; m < 4; ++m) {
    const auto& x = mm.modes[m];
    modes.push_back({{"mode", m + 1},
                     {"name", mode_name(static_cast<ModeId>(m + 1))},
                     {"rows", x.rows},
                     {"excited_rows", x.excited_rows},
                     {"excited_accuracy", x.excited_accuracy},
                     {"excited_balanced_accuracy", x.excited_balanced_accuracy},
                     {"stable_accuracy", x.stable_accuracy},
                     {"stable_balanced_accuracy", x.stable_balanced_accuracy},
                     {"whirl_speed_ratio_r2", x.wsr_r2},
                     {"whirl_speed_ratio_mae", x.wsr_mae},
                     {"log_dec_r2", x.logdec_r2},
                     {"log_dec_mae", x.logdec_mae}});
  }
  return {{"split", "test"}, {"modes", modes}};
}

int fail(const Error& e) {
  std::cerr << error_json(e).dump() << "\n";
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gas-bearing rotor stability engine"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  std::string config_path;
  app.add_option("--config", config_path, "Config file (JSON)")->check(CLI::ExistingFile);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Sample features and label them with the oracle");
  std::size_t gen_n = 2000;
  std::uint64_t gen_seed = 0;
  std::string gen_out = "dataset.csv";
  unsigned gen_threads = default_threads();
  int gen_grid = kDefaultGridN;
  gen->add_option("--n", gen_n, "Number of samples")->check(CLI::Range(100, 10000000));
  gen->add_option("--seed", gen_seed, "Sampling seed");
  gen->add_option("--out", gen_out, "Dataset CSV");
  gen->add_option("--threads", gen_threads, "Worker threads")->check(CLI::PositiveNumber);
  gen->add_option("--grid-n", gen_grid, "Film grid points per axis")->check(CLI::Range(11, 401));
  gen->add_option("--config", config_path, "Config file (JSON)")->check(CLI::ExistingFile);

  // train
  auto* train = app.add_subcommand("train", "Train the 16-block surrogate");
  std::string train_data, train_out = "model.grsm";
  std::uint64_t train_seed = 0;
  unsigned train_threads = default_threads();
  train->add_option("--dataset", train_data, "Dataset CSV")->required()->check(CLI::ExistingFile);
  train->add_option("--out", train_out, "Model file");
  train->add_option("--seed", train_seed, "Training seed");
  train->add_option("--threads", train_threads, "Worker threads")->check(CLI::PositiveNumber);
  train->add_option("--config", config_path, "Config file (JSON)")->check(CLI::ExistingFile);

  // ga-search
  auto* ga = app.add_subcommand("ga-search", "Genetic search over one block's hyperparameters");
  std::string ga_data, ga_out = "ga.json", ga_task = "log_dec";
  std::uint64_t ga_seed = 0;
  int ga_mode = 1, ga_budget = 80, ga_generations = 10, ga_epochs = 40;
  unsigned ga_threads = default_threads();
  ga->add_option("--dataset", ga_data, "Dataset CSV")->required()->check(CLI::ExistingFile);
  ga->add_option("--mode", ga_mode, "Mode 1-4")->check(CLI::Range(1, 4));
  ga->add_option("--task", ga_task, "Block")->check(CLI::IsMember({"excited", "stable", "whirl_speed_ratio", "log_dec"}));
  ga->add_option("--budget", ga_budget, "Fitness evaluations")->check(CLI::PositiveNumber);
  ga->add_option("--generations", ga_generations, "Generation cap")->check(CLI::PositiveNumber);
  ga->add_option("--epochs", ga_epochs, "Training epochs per fitness evaluation")->check(CLI::PositiveNumber);
  ga->add_option("--seed", ga_seed, "Search seed");
  ga->add_option("--threads", ga_threads, "Worker threads")->check(CLI::PositiveNumber);
  ga->add_option("--out", ga_out, "Result JSON");
  ga->add_option("--config", config_path, "Config file (JSON)")->check(CLI::ExistingFile);

  // eval
  auto* ev = app.add_subcommand("eval", "Score a model on the test split of a dataset");
  std::string ev_model, ev_data, ev_out = "metrics.json";
  ev->add_option("--model", ev_model, "Model file")->required()->check(CLI::ExistingFile);
  ev->add_option("--dataset", ev_data, "Dataset CSV")->required()->check(CLI::ExistingFile);
  ev->add_option("--out", ev_out, "Metrics JSON");
  ev->add_option("--config", config_path, "Config file (JSON)")->check(CLI::ExistingFile);

  // compute
  auto* comp = app.add_subcommand("compute", "Evaluate one design");
  DesignFlags comp_flags;
  std::string comp_model, comp_out;
  comp_flags.add(comp);
  comp->add_option("--model", comp_model, "Model file (surrogate evaluator)");
  comp->add_option("--out", comp_out, "Write the response JSON here");
  comp->add_option("--config", config_path, "Config file (JSON)")->check(CLI::ExistingFile);

  // sweep
  auto* sw = app.add_subcommand("sweep", "Robustness sweep over clearance and groove-depth deviations");
  DesignFlags sw_flags;
  std::string sw_model, sw_out = "contours.json";
  double sw_dhr = 1.0, sw_dhg = 2.0;
  int sw_grid = 0;
  std::vector<double> sw_speeds;
  sw_flags.add(sw);
  sw->add_option("--model", sw_model, "Model file (surrogate evaluator)");
  sw->add_option("--delta-h-r-um", sw_dhr, "Clearance deviation, um");
  sw->add_option("--delta-h-g-um", sw_dhg, "Groove depth deviation, um");
  sw->add_option("--sweep-grid-n", sw_grid, "Deviation grid points per axis");
  sw->add_option("--speeds", sw_speeds, "Speeds, rpm");
  sw->add_option("--out", sw_out, "Contour document");
  sw->add_option("--config", config_path, "Config file (JSON)")->check(CLI::ExistingFile);

  // serve
  auto* srv = app.add_subcommand("serve", "Run the HTTP service");
  srv->add_option("--config", config_path, "Config file (JSON)")->check(CLI::ExistingFile);

  // validate
  auto* val = app.add_subcommand("validate", "Validate a rotor document and print its mass properties");
  std::string val_rotor;
  val->add_option("rotor", val_rotor, "Rotor document")->required();

  // coeffs
  auto* co = app.add_subcommand("coeffs", "Dump dimensionless bearing coefficients as CSV");
  double co_alpha = 0.5, co_beta = 140.0, co_gamma = 0.8, co_ratio = 2.0, co_aspect = 1.0;
  std::vector<double> co_lambda{1.0, 5.0, 20.0}, co_nu{0.25, 0.5, 1.0, 1.5};
  int co_grid = kDefaultGridN;
  std::string co_carrier = "rotor";
  co->add_option("--alpha", co_alpha);
  co->add_option("--beta-deg", co_beta);
  co->add_option("--gamma", co_gamma);
  co->add_option("--groove-ratio", co_ratio, "h_g / h_r");
  co->add_option("--aspect", co_aspect, "L / D");
  co->add_option("--lambda", co_lambda, "Compressibility numbers");
  co->add_option("--nu", co_nu, "Whirl speed ratios");
  co->add_option("--grid-n", co_grid)->check(CLI::Range(11, 401));
  co->add_option("--grooves-on", co_carrier, "rotor or sleeve")->check(CLI::IsMember({"rotor", "sleeve"}));

  CLI11_PARSE(app, argc, argv);

  try {
    const FileConfig fc = load_file_config(config_path);

    if (*gen) {
      DatasetOptions opt;
      opt.threads = gen_threads;
      opt.oracle.grid_n = gen_grid;
      std::size_t last = 0;
      opt.progress = [&](std::size_t done, std::size_t total) {
        if (done * 20 / total != last * 20 / total || done == total) std::fprintf(stderr, "\rlabelled %zu/%zu", done, total);
        last = done;
      };
      const FeatureRanges ranges = feature_ranges(fc);
      const TrainingDataset data = generate_dataset(ranges, gen_n, gen_seed, opt);
      std::fprintf(stderr, "\n");
      write_file(gen_out, write_dataset_csv(data));
      Json inputs = {{"n", gen_n}, {"grid_n", gen_grid}, {"feature_ranges", to_json(ranges)}};
      write_manifest(gen_out, "gen-data", gen_seed, inputs,
                     {{"rows", data.rows.size()}, {"failed", data.failed}, {"failures", data.failures}});
      std::printf("wrote %s: %zu rows, %zu failed samples\n", gen_out.c_str(), data.rows.size(), data.failed);
      return 0;
    }

    if (*train) {
      const TrainingDataset data = parse_dataset_csv(read_file(train_data));
      TrainingConfig tc = training_config(fc, train_threads);
      SurrogateModel model = train_surrogate(data, tc, train_seed, [](int mode, Task task) {
        std::fprintf(stderr, "trained mode %d %s\n", mode + 1, task_name(task));
      });
      model.metadata.ranges = feature_ranges(fc);
      save_model(model, train_out);
      write_manifest(train_out, "train", train_seed,
                     {{"dataset", file_input(train_data)}, {"training_config", Json::parse(training_config_json(tc))}},
                     {{"config_digest", model.metadata.config_digest}, {"dataset_digest", model.metadata.dataset_digest}});
      std::printf("wrote %s\n", train_out.c_str());
      return 0;
    }

    if (*ga) {
      const TrainingDataset data = parse_dataset_csv(read_file(ga_data));
      Task task = Task::excited;
      for (int t = 0; t < 4; ++t)
        if (ga_task == task_name(static_cast<Task>(t))) task = static_cast<Task>(t);
      GAOptions o;
      o.seed = ga_seed;
      o.budget = ga_budget;
      o.max_generations = ga_generations;
      o.threads = ga_threads;
      const GAResult r = ga_search(GASpace{}, o, block_fitness(data, ga_mode - 1, task, ga_epochs));
      Json hist = Json::array();
      for (const auto& e : r.history)
        hist.push_back({{"generation", e.generation},
                        {"hidden_layers", e.params.hidden_layers},
                        {"width", e.params.width},
                        {"learning_rate", e.params.learning_rate},
                        {"batch_size", e.params.batch_size},
                        {"fitness", e.fitness}});
      Json out;
      out["best"] = {{"hidden_layers", r.best.hidden_layers},
                     {"width", r.best.width},
                     {"learning_rate", r.best.learning_rate},
                     {"batch_size", r.best.batch_size},
                     {"fitness", r.best_fitness}};
      out["best_per_generation"] = r.best_per_generation;
      out["budget_exhausted"] = r.budget_exhausted;
      out["history"] = hist;
      write_file(ga_out, out.dump(2) + "\n");
      write_manifest(ga_out, "ga-search", ga_seed,
                     {{"dataset", file_input(ga_data)}, {"mode", ga_mode}, {"task", ga_task}, {"budget", ga_budget},
                      {"epochs", ga_epochs}});
      std::printf("best: %d x %d, lr %.3g, batch %d, validation loss %.6g\n", r.best.hidden_layers, r.best.width,
                  r.best.learning_rate, r.best.batch_size, r.best_fitness);
      return 0;
    }

    if (*ev) {
      const SurrogateModel model = load_model(ev_model);
      const TrainingDataset data = parse_dataset_csv(read_file(ev_data));
      const ModelMetrics mm = evaluate_model(model, data, Split::test);
      const Json report = metrics_json(mm);
      write_file(ev_out, report.dump(2) + "\n");
      write_manifest(ev_out, "eval", model.metadata.seed, {{"model", file_input(ev_model)}, {"dataset", file_input(ev_data)}});
      std::printf("%-22s %6s %9s %9s %9s %9s %9s %9s\n", "mode", "rows", "exc_bacc", "stb_bacc", "wsr_r2", "wsr_mae",
                  "dec_r2", "dec_mae");
      for (int m = 0; m < 4; ++m) {
        const auto& x = mm.modes[m];
        std::printf("%-22s %6zu %9.4f %9.4f %9.4f %9.4f %9.4f %9.4f\n", mode_name(static_cast<ModeId>(m + 1)), x.rows,
                    x.excited_balanced_accuracy, x.stable_balanced_accuracy, x.wsr_r2, x.wsr_mae, x.logdec_r2,
                    x.logdec_mae);
      }
      return 0;
    }

    if (*comp || *sw) {
      ServiceConfig sc = service_config(fc);
      const DesignFlags& flags = *comp ? comp_flags : sw_flags;
      const std::string& model = *comp ? comp_model : sw_model;
      if (!model.empty()) {
        sc.model_path = model;
        sc.model_dir.clear();
      }
      const Service service = Service::from_config(sc);
      if (!model.empty() && !service.registry().model) {
        const auto& e = service.registry().entries.front();
        throw Error(e.error_code.empty() ? errc::io_error : e.error_code, e.error, model);
      }
      Json req = flags.request_json();
      if (*sw) {
        if (!req.contains("sweep")) req["sweep"] = Json::object();
        auto& s = req["sweep"];
        if (!s.contains("delta_h_r_m")) s["delta_h_r_m"] = sw_dhr * 1e-6;
        if (!s.contains("delta_h_g_m")) s["delta_h_g_m"] = sw_dhg * 1e-6;
        if (sw_grid > 0) s["grid_n"] = sw_grid;
        if (!sw_speeds.empty()) s["speeds_rpm"] = sw_speeds;
      }
      if (*comp) {
        const Response r = service.compute(req.dump());
        const Json body = Json::parse(r.body);
        if (r.status != 200) {
          std::cerr << body.dump() << "\n";
          return 1;
        }
        if (!comp_out.empty()) write_file(comp_out, body.dump(2) + "\n");
        const auto& mp = body.at("mass_properties");
        std::printf("evaluator %s\nmass %.6g kg, I_p %.6g kg m^2, I_t %.6g kg m^2\n",
                    body.at("evaluator").get<std::string>().c_str(), mp.at("mass_kg").get<double>(),
                    mp.at("I_polar_kg_m2").get<double>(), mp.at("I_transverse_kg_m2").get<double>());
        std::printf("power loss %.6g W, load capacity %.6g N per journal\n", body.at("power_loss_W").get<double>(),
                    body.at("load_capacity_N").get<double>());
        print_modes(body.at("modes"));
        for (const auto& w : body.at("warnings")) std::printf("warning: %s\n", w.get<std::string>().c_str());
        return 0;
      }
      const Response r = service.sweep(req.dump(), [](const std::string& line) {
        const Json e = Json::parse(line);
        if (e.at("event") == "progress")
          std::fprintf(stderr, "\rcells %zu/%zu", e.at("done").get<std::size_t>(), e.at("total").get<std::size_t>());
      });
      std::fprintf(stderr, "\n");
      if (r.content_type != "application/x-ndjson") {
        std::cerr << r.body << "\n";
        return 1;
      }
      const std::string last = r.body.substr(r.body.rfind('\n', r.body.size() - 2) + 1);
      const Json final_event = Json::parse(last);
      if (final_event.at("event") != "result") {
        std::cerr << final_event.dump() << "\n";
        return 1;
      }
      const ContourDocument doc = contours_from_json(final_event.at("contours"));
      write_file(sw_out, export_contours(doc) + "\n");
      const Json summary = final_event.at("contours").at("summary");
      std::printf("wrote %s: %s\n", sw_out.c_str(), summary.dump().c_str());
      return 0;
    }

    if (*srv) {
      const ServiceConfig sc = service_config(fc);
      const Service service = Service::from_config(sc);
      std::fprintf(stderr, "listening on %s:%d (model %s)\n", sc.host.c_str(), sc.port,
                   service.registry().model ? service.registry().model_name.c_str() : "none");
      serve(service);
      return 0;
    }

    if (*val) {
      const Service service(ServiceConfig{}, FluidRegistry::defaults(), ModelRegistry{});
      const Response r = service.validate_rotor(read_file(val_rotor));
      if (r.status != 200) {
        std::cerr << r.body << "\n";
        return 1;
      }
      std::printf("%s\n", Json::parse(r.body).dump(2).c_str());
      return 0;
    }

    if (*co) {
      DimensionlessBearing b;
      b.alpha = co_alpha;
      b.beta = co_beta * std::numbers::pi / 180.0;
      b.gamma = co_gamma;
      b.groove_ratio = co_ratio;
      b.aspect = co_aspect;
      validate(b);
      const GrooveCarrier carrier = co_carrier == "sleeve" ? GrooveCarrier::sleeve : GrooveCarrier::rotor;
      std::printf("Lambda,nu,Kxx,Kxy,Kyx,Kyy,Cxx,Cxy,Cyx,Cyy\n");
      for (double L : co_lambda) {
        const FilmSolver film(b, L, kDefaultPerturbation, co_grid, carrier);
        for (double nu : co_nu) {
          const BearingCoefficients c = film.coefficients(nu);
          std::printf("%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", L, nu, c.K(0, 0), c.K(0, 1),
                      c.K(1, 0), c.K(1, 1), c.C(0, 0), c.C(0, 1), c.C(1, 0), c.C(1, 1));
        }
      }
      return 0;
    }
  } catch (const Error& e) {
    return fail(e);
  } catch (const std::exception& e) {
    return fail(Error("internal", e.what()));
  }
  return 0;
}
