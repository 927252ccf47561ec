#pragma once

// Manufacturing-deviation sweeps: a (dh_r, dh_g) grid crossed with a speed
// list, each cell reduced to worst-case metrics.

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "gasrotor/features.hpp"
#include "gasrotor/json_io.hpp"

namespace gasrotor {

struct ToleranceSpec {
  double delta_h_r = 0.0;  // m, grid spans [-delta, +delta]
  double delta_h_g = 0.0;
  int grid_n = 21;
};

enum class EvaluatorKind { oracle, surrogate };

const char* evaluator_name(EvaluatorKind k);
EvaluatorKind evaluator_from(const std::string& name);

struct SweepSpec {
  std::vector<double> speeds;  // rpm, strictly increasing
  ToleranceSpec tolerance;
  EvaluatorKind evaluator = EvaluatorKind::surrogate;
};

/// n points from lo*N to hi*N inclusive.
std::vector<double> default_speeds(double N, int n = 11, double lo = 0.5, double hi = 1.2);

/// Symmetric axis delta*(2i - (n-1))/(n-1). Coincident points of grids n and
/// 2n-1 are bitwise equal and the centre is exactly 0.
std::vector<double> deviation_axis(double delta, int n);

/// Throws out_of_range / invalid_argument for a spec the nominal design cannot carry.
void validate(const SweepSpec& spec, const Design& nominal);

struct SweepCell {
  double delta_h_r = 0.0;
  double delta_h_g = 0.0;
  bool valid = false;
  std::string error;
  std::vector<ModeResults> per_speed;
  std::optional<double> worst_log_dec;  // none when no mode is excited at any speed
  double min_load_N = 0.0;
  double max_power_W = 0.0;
  bool feasible = false;  // worst_log_dec > 0, or nothing excited

  bool operator==(const SweepCell&) const = default;
};

struct FeasibilityMap {
  std::vector<double> axis_h_r;  // m
  std::vector<double> axis_h_g;
  std::vector<double> speeds;
  EvaluatorKind evaluator = EvaluatorKind::surrogate;
  std::vector<SweepCell> cells;  // row-major, index i_r * n + i_g

  int grid_n() const { return static_cast<int>(axis_h_r.size()); }
  const SweepCell& at(int i_r, int i_g) const { return cells[static_cast<std::size_t>(i_r * grid_n() + i_g)]; }

  bool operator==(const FeasibilityMap&) const = default;
};

using PointEvaluator = std::function<PointEvaluation(const Design&)>;
using SweepProgress = std::function<void(std::size_t done, std::size_t total)>;

struct SweepOptions {
  unsigned threads = 1;
  SweepProgress progress;
  /// Cell visiting order (a permutation of 0..n^2-1); empty means row-major.
  std::vector<std::size_t> order;
};

/// Evaluates every cell at every speed with h_r + dh_r and h_g + dh_g on both
/// journals. A cell whose evaluation throws is marked invalid and the sweep
/// continues.
FeasibilityMap run_sweep(const Design& nominal, const SweepSpec& spec, const PointEvaluator& evaluate,
                         const SweepOptions& options = {});

/// Feasible over valid cells. Throws invalid_argument when no cell is valid.
double feasible_fraction(const FeasibilityMap& map);

/// The exchange form of a map: axes in um, metric matrices indexed
/// [i_r][i_g], null where a value does not exist.
struct ContourDocument {
  static constexpr int kFormatVersion = 1;
  std::string design_digest;
  std::string evaluator;
  std::string created;
  std::vector<double> speeds_rpm;
  std::vector<double> delta_h_r_um;
  std::vector<double> delta_h_g_um;
  std::vector<std::vector<std::optional<double>>> worst_log_dec;
  std::vector<std::vector<std::optional<double>>> min_load_capacity_N;
  std::vector<std::vector<std::optional<double>>> max_power_loss_W;
  std::vector<std::vector<bool>> feasible;
  std::vector<std::vector<bool>> valid;
  struct Failure {
    int i_r = 0, i_g = 0;
    std::string error;
    bool operator==(const Failure&) const = default;
  };
  std::vector<Failure> failures;
  /// Per-speed mode results of the nominal (0, 0) cell.
  std::vector<ModeResults> nominal;

  bool operator==(const ContourDocument&) const = default;
};

ContourDocument make_contours(const FeasibilityMap& map, const std::string& design_digest, const std::string& created);
Json to_json(const ContourDocument& doc);
ContourDocument contours_from_json(const Json& j);
std::string export_contours(const ContourDocument& doc);
ContourDocument parse_contours(std::string_view text);

/// SHA-256 hex of the canonical design JSON (rotor document, grooves, operating point).
std::string design_digest(const Design& d);
Json design_json(const Design& d);

ModeResults mode_results_from_json(const Json& j);

}  // namespace gasrotor
