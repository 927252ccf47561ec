#include "gasrotor/sweep.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <mutex>
#include <thread>

#include "gasrotor/digest.hpp"
#include "gasrotor/error.hpp"

namespace gasrotor {

namespace {

using Matrix = std::vector<std::vector<std::optional<double>>>;

Json optional_matrix(const Matrix& m) {
  Json out = Json::array();
  for (const auto& row : m) {
    Json r = Json::array();
    for (const auto& v : row) r.push_back(v ? Json(*v) : Json(nullptr));
    out.push_back(r);
  }
  return out;
}

Matrix optional_matrix_from(const Json& j, std::size_t n, const char* key) {
  if (!j.is_array() || j.size() != n) throw Error(errc::parse_error, std::string("contour matrix '") + key + "' has the wrong shape", key);
  Matrix m;
  for (const auto& row : j) {
    if (!row.is_array() || row.size() != n) throw Error(errc::parse_error, std::string("contour matrix '") + key + "' has the wrong shape", key);
    auto& r = m.emplace_back();
    for (const auto& v : row) r.push_back(v.is_null() ? std::nullopt : std::optional<double>(v.get<double>()));
  }
  return m;
}

Json bool_matrix(const std::vector<std::vector<bool>>& m) {
  Json out = Json::array();
  for (const auto& row : m) {
    Json r = Json::array();
    for (bool v : row) r.push_back(v);
    out.push_back(r);
  }
  return out;
}

std::vector<std::vector<bool>> bool_matrix_from(const Json& j, std::size_t n, const char* key) {
  if (!j.is_array() || j.size() != n) throw Error(errc::parse_error, std::string("contour mask '") + key + "' has the wrong shape", key);
  std::vector<std::vector<bool>> m;
  for (const auto& row : j) {
    if (!row.is_array() || row.size() != n) throw Error(errc::parse_error, std::string("contour mask '") + key + "' has the wrong shape", key);
    auto& r = m.emplace_back();
    for (const auto& v : row) r.push_back(v.get<bool>());
  }
  return m;
}

SweepCell evaluate_cell(const Design& nominal, const std::vector<double>& speeds, double dh_r, double dh_g,
                        const PointEvaluator& evaluate) {
  SweepCell cell;
  cell.delta_h_r = dh_r;
  cell.delta_h_g = dh_g;
  Design d = nominal;
  d.bearing.h_r = nominal.bearing.h_r + dh_r;
  d.bearing.h_g = nominal.bearing.h_g + dh_g;
  try {
    for (std::size_t k = 0; k < speeds.size(); ++k) {
      d.op.N = speeds[k];
      const PointEvaluation e = evaluate(d);
      cell.per_speed.push_back(e.modes);
      cell.min_load_N = k == 0 ? e.load_capacity_N : std::min(cell.min_load_N, e.load_capacity_N);
      cell.max_power_W = k == 0 ? e.power_loss_W : std::max(cell.max_power_W, e.power_loss_W);
      for (const auto& m : e.modes) {
        if (!m.excited || !m.log_dec) continue;
        if (!cell.worst_log_dec || *m.log_dec < *cell.worst_log_dec) cell.worst_log_dec = *m.log_dec;
      }
    }
    cell.valid = true;
    cell.feasible = !cell.worst_log_dec || *cell.worst_log_dec > 0.0;
  } catch (const std::exception& e) {
    cell = SweepCell{};
    cell.delta_h_r = dh_r;
    cell.delta_h_g = dh_g;
    cell.error = e.what();
  }
  return cell;
}

}  // namespace

const char* evaluator_name(EvaluatorKind k) { return k == EvaluatorKind::oracle ? "oracle" : "surrogate"; }

EvaluatorKind evaluator_from(const std::string& name) {
  if (name == "oracle") return EvaluatorKind::oracle;
  if (name == "surrogate") return EvaluatorKind::surrogate;
  throw Error(errc::invalid_argument, "evaluator must be 'oracle' or 'surrogate'", "evaluator");
}

std::vector<double> default_speeds(double N, int n, double lo, double hi) {
  if (!(N > 0.0)) throw Error(errc::invalid_argument, "nominal speed must be > 0 for a speed sweep", "N_rpm");
  if (n < 1) throw Error(errc::invalid_argument, "speed count must be >= 1");
  if (n == 1) return {N};
  std::vector<double> s(n);
  for (int k = 0; k < n; ++k) s[k] = N * (lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(n - 1));
  return s;
}

std::vector<double> deviation_axis(double delta, int n) {
  if (n < 1) throw Error(errc::invalid_argument, "grid_n must be >= 1", "grid_n");
  std::vector<double> a(n, 0.0);
  if (n == 1) return a;
  for (int i = 0; i < n; ++i) a[i] = delta * (static_cast<double>(2 * i - (n - 1)) / static_cast<double>(n - 1));
  return a;
}

void validate(const SweepSpec& spec, const Design& nominal) {
  const auto& t = spec.tolerance;
  if (t.grid_n < 1 || t.grid_n > 201) throw Error(errc::out_of_range, "grid_n must be in [1, 201]", "sweep.grid_n");
  if (!(t.delta_h_r >= 0.0) || !std::isfinite(t.delta_h_r))
    throw Error(errc::out_of_range, "delta_h_r must be >= 0", "sweep.delta_h_r_m");
  if (!(t.delta_h_g >= 0.0) || !std::isfinite(t.delta_h_g))
    throw Error(errc::out_of_range, "delta_h_g must be >= 0", "sweep.delta_h_g_m");
  if (!(nominal.bearing.h_r - t.delta_h_r > 0.0))
    throw Error(errc::out_of_range, "h_r - delta_h_r must stay > 0 over the grid", "sweep.delta_h_r_m");
  if (spec.speeds.empty()) throw Error(errc::invalid_argument, "speed list is empty", "sweep.speeds_rpm");
  for (std::size_t k = 0; k < spec.speeds.size(); ++k) {
    if (!(spec.speeds[k] > 0.0) || !std::isfinite(spec.speeds[k]))
      throw Error(errc::out_of_range, "speeds must be > 0", "sweep.speeds_rpm[" + std::to_string(k) + "]");
    if (k > 0 && !(spec.speeds[k] > spec.speeds[k - 1]))
      throw Error(errc::invalid_argument, "speeds must be strictly increasing", "sweep.speeds_rpm[" + std::to_string(k) + "]");
  }
}

FeasibilityMap run_sweep(const Design& nominal, const SweepSpec& spec, const PointEvaluator& evaluate,
                         const SweepOptions& options) {
  validate(spec, nominal);
  FeasibilityMap map;
  const int n = spec.tolerance.grid_n;
  map.axis_h_r = deviation_axis(spec.tolerance.delta_h_r, n);
  map.axis_h_g = deviation_axis(spec.tolerance.delta_h_g, n);
  map.speeds = spec.speeds;
  map.evaluator = spec.evaluator;
  const std::size_t total = static_cast<std::size_t>(n) * static_cast<std::size_t>(n);
  map.cells.resize(total);

  std::vector<std::size_t> order = options.order;
  if (order.empty()) {
    order.resize(total);
    for (std::size_t k = 0; k < total; ++k) order[k] = k;
  } else {
    std::vector<bool> seen(total, false);
    if (order.size() != total) throw Error(errc::invalid_argument, "cell order must be a permutation of the grid");
    for (std::size_t k : order) {
      if (k >= total || seen[k]) throw Error(errc::invalid_argument, "cell order must be a permutation of the grid");
      seen[k] = true;
    }
  }

  std::atomic<std::size_t> next{0}, done{0};
  std::mutex progress_mutex;
  auto worker = [&] {
    for (std::size_t k; (k = next++) < total;) {
      const std::size_t c = order[k];
      const int i = static_cast<int>(c) / n, j = static_cast<int>(c) % n;
      map.cells[c] = evaluate_cell(nominal, spec.speeds, map.axis_h_r[i], map.axis_h_g[j], evaluate);
      const std::size_t d = ++done;
      if (options.progress) {
        std::lock_guard lock(progress_mutex);
        options.progress(d, total);
      }
    }
  };
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < std::max(1u, options.threads); ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  return map;
}

double feasible_fraction(const FeasibilityMap& map) {
  std::size_t valid = 0, feasible = 0;
  for (const auto& c : map.cells) {
    if (!c.valid) continue;
    ++valid;
    if (c.feasible) ++feasible;
  }
  if (valid == 0) throw Error(errc::invalid_argument, "every cell of the map is invalid");
  return static_cast<double>(feasible) / static_cast<double>(valid);
}

ContourDocument make_contours(const FeasibilityMap& map, const std::string& digest, const std::string& created) {
  ContourDocument doc;
  doc.design_digest = digest;
  doc.evaluator = evaluator_name(map.evaluator);
  doc.created = created;
  doc.speeds_rpm = map.speeds;
  const int n = map.grid_n();
  for (int i = 0; i < n; ++i) {
    doc.delta_h_r_um.push_back(map.axis_h_r[i] * 1e6);
    doc.delta_h_g_um.push_back(map.axis_h_g[i] * 1e6);
  }
  doc.worst_log_dec.assign(n, std::vector<std::optional<double>>(n));
  doc.min_load_capacity_N = doc.worst_log_dec;
  doc.max_power_loss_W = doc.worst_log_dec;
  doc.feasible.assign(n, std::vector<bool>(n, false));
  doc.valid = doc.feasible;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const SweepCell& c = map.at(i, j);
      doc.valid[i][j] = c.valid;
      doc.feasible[i][j] = c.feasible;
      if (!c.valid) {
        doc.failures.push_back({i, j, c.error});
        continue;
      }
      doc.worst_log_dec[i][j] = c.worst_log_dec;
      doc.min_load_capacity_N[i][j] = c.min_load_N;
      doc.max_power_loss_W[i][j] = c.max_power_W;
    }
  }
  const SweepCell& centre = map.at(n / 2, n / 2);
  doc.nominal = centre.per_speed;
  return doc;
}

Json to_json(const ContourDocument& doc) {
  Json j;
  j["format"] = "gasrotor-contours";
  j["format_version"] = ContourDocument::kFormatVersion;
  j["metadata"] = {{"design_digest", doc.design_digest},
                   {"evaluator", doc.evaluator},
                   {"created", doc.created},
                   {"speeds_rpm", doc.speeds_rpm},
                   {"grid_n", doc.delta_h_r_um.size()}};
  j["axes"] = {{"delta_h_r_um", doc.delta_h_r_um}, {"delta_h_g_um", doc.delta_h_g_um}};
  j["metrics"] = {{"worst_log_dec", optional_matrix(doc.worst_log_dec)},
                  {"min_load_capacity_N", optional_matrix(doc.min_load_capacity_N)},
                  {"max_power_loss_W", optional_matrix(doc.max_power_loss_W)}};
  j["feasible"] = bool_matrix(doc.feasible);
  j["valid"] = bool_matrix(doc.valid);
  Json failures = Json::array();
  for (const auto& f : doc.failures) failures.push_back({{"i_r", f.i_r}, {"i_g", f.i_g}, {"error", f.error}});
  j["failures"] = failures;
  Json nominal = Json::array();
  for (const auto& m : doc.nominal) nominal.push_back(to_json(m));
  j["nominal_modes"] = nominal;

  std::size_t valid = 0, feasible = 0;
  std::optional<double> lo, hi;
  for (std::size_t i = 0; i < doc.valid.size(); ++i) {
    for (std::size_t k = 0; k < doc.valid[i].size(); ++k) {
      if (!doc.valid[i][k]) continue;
      ++valid;
      if (doc.feasible[i][k]) ++feasible;
      if (const auto& d = doc.worst_log_dec[i][k]) {
        lo = lo ? std::min(*lo, *d) : *d;
        hi = hi ? std::max(*hi, *d) : *d;
      }
    }
  }
  j["summary"] = {{"cells", doc.valid.size() * doc.valid.size()},
                  {"valid_cells", valid},
                  {"failed_cells", doc.failures.size()},
                  {"feasible_fraction", valid ? Json(static_cast<double>(feasible) / static_cast<double>(valid)) : Json(nullptr)},
                  {"min_log_dec", lo ? Json(*lo) : Json(nullptr)},
                  {"max_log_dec", hi ? Json(*hi) : Json(nullptr)}};
  return j;
}

ModeResults mode_results_from_json(const Json& j) {
  if (!j.is_array() || j.size() != 4) throw Error(errc::parse_error, "mode results must be an array of 4");
  ModeResults out;
  for (int m = 0; m < 4; ++m) {
    const auto& e = j[m];
    auto& r = out[m];
    r.mode = static_cast<ModeId>(e.at("mode").get<int>());
    r.excited = e.at("excited").get<bool>();
    r.stable = e.at("stable").is_boolean() && e.at("stable").get<bool>();
    if (!e.at("whirl_speed_ratio").is_null()) r.whirl_speed_ratio = e.at("whirl_speed_ratio").get<double>();
    if (!e.at("log_dec").is_null()) r.log_dec = e.at("log_dec").get<double>();
  }
  return out;
}

ContourDocument contours_from_json(const Json& j) {
  try {
    if (j.at("format").get<std::string>() != "gasrotor-contours")
      throw Error(errc::parse_error, "not a contour document", "format");
    if (j.at("format_version").get<int>() != ContourDocument::kFormatVersion)
      throw Error(errc::parse_error, "unsupported contour format_version", "format_version");
    ContourDocument doc;
    const auto& meta = j.at("metadata");
    doc.design_digest = meta.at("design_digest").get<std::string>();
    doc.evaluator = meta.at("evaluator").get<std::string>();
    doc.created = meta.at("created").get<std::string>();
    doc.speeds_rpm = meta.at("speeds_rpm").get<std::vector<double>>();
    doc.delta_h_r_um = j.at("axes").at("delta_h_r_um").get<std::vector<double>>();
    doc.delta_h_g_um = j.at("axes").at("delta_h_g_um").get<std::vector<double>>();
    const std::size_t n = doc.delta_h_r_um.size();
    if (doc.delta_h_g_um.size() != n) throw Error(errc::parse_error, "contour axes differ in length", "axes");
    const auto& m = j.at("metrics");
    doc.worst_log_dec = optional_matrix_from(m.at("worst_log_dec"), n, "worst_log_dec");
    doc.min_load_capacity_N = optional_matrix_from(m.at("min_load_capacity_N"), n, "min_load_capacity_N");
    doc.max_power_loss_W = optional_matrix_from(m.at("max_power_loss_W"), n, "max_power_loss_W");
    doc.feasible = bool_matrix_from(j.at("feasible"), n, "feasible");
    doc.valid = bool_matrix_from(j.at("valid"), n, "valid");
    for (const auto& f : j.at("failures"))
      doc.failures.push_back({f.at("i_r").get<int>(), f.at("i_g").get<int>(), f.at("error").get<std::string>()});
    for (const auto& e : j.at("nominal_modes")) doc.nominal.push_back(mode_results_from_json(e));
    return doc;
  } catch (const Json::exception& e) {
    throw Error(errc::parse_error, std::string("contour document: ") + e.what());
  }
}

std::string export_contours(const ContourDocument& doc) { return to_json(doc).dump(1); }

ContourDocument parse_contours(std::string_view text) {
  Json j;
  try {
    j = Json::parse(text.begin(), text.end());
  } catch (const Json::parse_error& e) {
    throw Error(errc::parse_error, std::string("contour document: ") + e.what());
  }
  return contours_from_json(j);
}

Json design_json(const Design& d) {
  Json j;
  j["rotor"] = Json::parse(serialize_rotor(d.rotor));
  j["bearing"] = grooves_to_json(d.bearing);
  j["operating_point"] = to_json(d.op);
  return j;
}

std::string design_digest(const Design& d) { return sha256_hex(design_json(d).dump()); }

}  // namespace gasrotor
