#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "gasrotor/features.hpp"

namespace gasrotor {

struct ModeLabel {
  bool excited = false;
  bool stable = false;
  std::optional<double> whirl_speed_ratio;
  std::optional<double> log_dec;

  static ModeLabel from(const ModeStabilityResult& r);
  bool operator==(const ModeLabel&) const = default;
};

enum class Split : std::uint8_t { train = 0, val = 1, test = 2 };

struct DatasetRow {
  FeatureVector features;
  std::array<ModeLabel, 4> labels;
  Split split = Split::train;

  bool operator==(const DatasetRow&) const = default;
};

struct TrainingDataset {
  std::vector<DatasetRow> rows;
  std::size_t failed = 0;              // samples the oracle could not label
  std::vector<std::string> failures;   // one message per failed sample

  std::vector<const DatasetRow*> subset(Split s) const;
};

/// n x dims stratified samples in [0, 1): each column hits every stratum
/// [k/n, (k+1)/n) exactly once.
Eigen::MatrixXd latin_hypercube(std::size_t n, int dims, std::mt19937_64& rng);

std::vector<FeatureVector> sample_features(const FeatureRanges& ranges, std::size_t n, std::uint64_t seed);

using StabilityOracle = std::function<ModeResults(const FeatureVector&)>;

struct DatasetOptions {
  OracleOptions oracle;
  StabilityOracle stability;  // empty: oracle_stability with `oracle`
  unsigned threads = 1;
  double train_fraction = 0.6;
  double val_fraction = 0.2;
  std::function<void(std::size_t done, std::size_t total)> progress;
};

/// Latin-hypercube samples labelled by the oracle, then split. Failed samples
/// are dropped and counted. Output does not depend on `threads`.
TrainingDataset generate_dataset(const FeatureRanges& ranges, std::size_t n_samples, std::uint64_t seed,
                                 const DatasetOptions& options = {});

/// Seeded permutation into train/val/test by the given fractions.
void assign_splits(TrainingDataset& data, std::uint64_t seed, double train_fraction = 0.6, double val_fraction = 0.2);

/// Header: the 11 feature names, m{1..4}_{excited,stable,wsr,logdec}, split.
/// Absent labels are empty fields. Doubles use the shortest round-trip form.
std::string dataset_csv_header();
std::string write_dataset_csv(const TrainingDataset& data);
TrainingDataset parse_dataset_csv(std::string_view text);

}  // namespace gasrotor
