#include "gasrotor/dataset.hpp"

#include <atomic>
#include <charconv>
#include <cmath>
#include <mutex>
#include <sstream>
#include <thread>

#include "gasrotor/error.hpp"
#include "gasrotor/mlp.hpp"

namespace gasrotor {

namespace {

constexpr std::array<const char*, 3> kSplitNames{"train", "val", "test"};

std::string number(double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

double parse_number(std::string_view s, std::size_t line, const char* column) {
  double v = 0.0;
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || end != s.data() + s.size())
    throw Error(errc::parse_error, "dataset line " + std::to_string(line) + ": bad number '" + std::string(s) + "'",
                column);
  return v;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

}  // namespace

ModeLabel ModeLabel::from(const ModeStabilityResult& r) {
  ModeLabel l;
  l.excited = r.excited;
  l.stable = r.excited && r.stable;
  if (r.excited) {
    l.whirl_speed_ratio = r.whirl_speed_ratio;
    l.log_dec = r.log_dec;
  }
  return l;
}

std::vector<const DatasetRow*> TrainingDataset::subset(Split s) const {
  std::vector<const DatasetRow*> out;
  for (const auto& r : rows)
    if (r.split == s) out.push_back(&r);
  return out;
}

Eigen::MatrixXd latin_hypercube(std::size_t n, int dims, std::mt19937_64& rng) {
  Eigen::MatrixXd out(n, dims);
  std::vector<Eigen::Index> perm(n);
  for (int d = 0; d < dims; ++d) {
    for (std::size_t i = 0; i < n; ++i) perm[i] = static_cast<Eigen::Index>(i);
    shuffle(perm, rng);
    for (std::size_t i = 0; i < n; ++i)
      out(i, d) = (static_cast<double>(perm[i]) + uniform01(rng)) / static_cast<double>(n);
  }
  return out;
}

std::vector<FeatureVector> sample_features(const FeatureRanges& ranges, std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const auto b = ranges.bounds();
  const Eigen::MatrixXd u = latin_hypercube(n, 10, rng);
  std::vector<FeatureVector> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    FeatureVector::Vector v;
    for (int k = 0; k < 10; ++k) v[k] = b[k][0] + (b[k][1] - b[k][0]) * u(i, k);
    for (int k : ranges.log_uniform) v[k] = b[k][0] * std::pow(b[k][1] / b[k][0], u(i, k));
    v[10] = v[9] + 1.0;
    out.push_back(FeatureVector::from_vector(v));
  }
  return out;
}

TrainingDataset generate_dataset(const FeatureRanges& ranges, std::size_t n_samples, std::uint64_t seed,
                                 const DatasetOptions& options) {
  if (n_samples < 100) throw Error(errc::invalid_argument, "n_samples must be >= 100", "n");
  const auto samples = sample_features(ranges, n_samples, seed);
  const StabilityOracle oracle =
      options.stability ? options.stability
                        : StabilityOracle([&](const FeatureVector& f) { return oracle_stability(f, options.oracle).modes; });

  std::vector<std::optional<ModeResults>> labels(n_samples);
  std::vector<std::string> errors(n_samples);
  std::atomic<std::size_t> next{0}, done{0};
  std::mutex progress_mutex;
  auto worker = [&] {
    for (std::size_t i; (i = next++) < n_samples;) {
      try {
        labels[i] = oracle(samples[i]);
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
      const std::size_t d = ++done;
      if (options.progress) {
        std::lock_guard lock(progress_mutex);
        options.progress(d, n_samples);
      }
    }
  };
  const unsigned threads = std::max(1u, options.threads);
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  TrainingDataset data;
  for (std::size_t i = 0; i < n_samples; ++i) {
    if (!labels[i]) {
      ++data.failed;
      data.failures.push_back("sample " + std::to_string(i) + ": " + errors[i]);
      continue;
    }
    DatasetRow row;
    row.features = samples[i];
    for (int m = 0; m < 4; ++m) row.labels[m] = ModeLabel::from((*labels[i])[m]);
    data.rows.push_back(row);
  }
  assign_splits(data, derive_seed(seed, 0x5b1), options.train_fraction, options.val_fraction);
  return data;
}

void assign_splits(TrainingDataset& data, std::uint64_t seed, double train_fraction, double val_fraction) {
  if (!(train_fraction > 0.0 && val_fraction >= 0.0 && train_fraction + val_fraction <= 1.0))
    throw Error(errc::invalid_argument, "split fractions must be positive and sum to <= 1");
  const std::size_t n = data.rows.size();
  std::vector<Eigen::Index> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = static_cast<Eigen::Index>(i);
  std::mt19937_64 rng(seed);
  shuffle(perm, rng);
  const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(n)));
  const auto n_val = static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(n)));
  for (std::size_t k = 0; k < n; ++k)
    data.rows[perm[k]].split = k < n_train ? Split::train : k < n_train + n_val ? Split::val : Split::test;
}

std::string dataset_csv_header() {
  std::string h;
  for (const char* name : FeatureVector::names()) {
    h += name;
    h += ',';
  }
  for (int m = 1; m <= 4; ++m) {
    const std::string p = "m" + std::to_string(m) + "_";
    h += p + "excited," + p + "stable," + p + "wsr," + p + "logdec,";
  }
  h += "split";
  return h;
}

std::string write_dataset_csv(const TrainingDataset& data) {
  std::ostringstream out;
  out << dataset_csv_header() << '\n';
  for (const auto& row : data.rows) {
    const auto v = row.features.to_vector();
    for (int k = 0; k < FeatureVector::kSize; ++k) out << number(v[k]) << ',';
    for (const auto& l : row.labels) {
      out << (l.excited ? 1 : 0) << ',' << (l.stable ? 1 : 0) << ',';
      if (l.whirl_speed_ratio) out << number(*l.whirl_speed_ratio);
      out << ',';
      if (l.log_dec) out << number(*l.log_dec);
      out << ',';
    }
    out << kSplitNames[static_cast<int>(row.split)] << '\n';
  }
  return out.str();
}

TrainingDataset parse_dataset_csv(std::string_view text) {
  TrainingDataset data;
  std::size_t line_no = 0;
  bool header_seen = false;
  while (!text.empty()) {
    const auto eol = text.find('\n');
    std::string_view line = text.substr(0, eol);
    text = eol == std::string_view::npos ? std::string_view{} : text.substr(eol + 1);
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    if (!header_seen) {
      if (line != dataset_csv_header()) throw Error(errc::parse_error, "dataset header does not match the expected columns");
      header_seen = true;
      continue;
    }
    const auto f = split_fields(line);
    if (f.size() != 11 + 16 + 1)
      throw Error(errc::parse_error, "dataset line " + std::to_string(line_no) + ": expected 28 fields");
    DatasetRow row;
    FeatureVector::Vector v;
    for (int k = 0; k < 11; ++k) v[k] = parse_number(f[k], line_no, FeatureVector::names()[k]);
    row.features = FeatureVector::from_vector(v);
    for (int m = 0; m < 4; ++m) {
      const auto* c = &f[11 + 4 * m];
      auto& l = row.labels[m];
      l.excited = c[0] == "1";
      l.stable = c[1] == "1";
      if (!c[2].empty()) l.whirl_speed_ratio = parse_number(c[2], line_no, "wsr");
      if (!c[3].empty()) l.log_dec = parse_number(c[3], line_no, "logdec");
      if (l.excited != (l.whirl_speed_ratio && l.log_dec) || (l.stable && !l.excited))
        throw Error(errc::parse_error, "dataset line " + std::to_string(line_no) + ": inconsistent labels for mode " +
                                           std::to_string(m + 1));
    }
    const auto s = f.back();
    if (s == "train") row.split = Split::train;
    else if (s == "val") row.split = Split::val;
    else if (s == "test") row.split = Split::test;
    else throw Error(errc::parse_error, "dataset line " + std::to_string(line_no) + ": unknown split", "split");
    data.rows.push_back(row);
  }
  if (!header_seen) throw Error(errc::parse_error, "empty dataset file");
  return data;
}

}  // namespace gasrotor
