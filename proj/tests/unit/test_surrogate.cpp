#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "gasrotor/error.hpp"
#include "gasrotor/surrogate.hpp"

using namespace gasrotor;

namespace {

std::string code_of(const auto& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return "";
}

Eigen::MatrixXd uniform_matrix(int rows, int cols, std::mt19937_64& rng) {
  Eigen::MatrixXd X(rows, cols);
  for (Eigen::Index i = 0; i < X.size(); ++i) X.data()[i] = 2.0 * uniform01(rng) - 1.0;
  return X;
}

TrainHyper quick_hyper() {
  TrainHyper h;
  h.learning_rate = 1e-2;
  h.batch_size = 32;
  h.epochs = 150;
  h.patience = 30;
  return h;
}

// Labels from closed forms of the features, so no oracle runs.
TrainingDataset synthetic_dataset(std::size_t n, std::uint64_t seed) {
  TrainingDataset d;
  for (const FeatureVector& f : sample_features(FeatureRanges{}, n, seed)) {
    DatasetRow row;
    row.features = f;
    for (int m = 0; m < 4; ++m) {
      ModeLabel& l = row.labels[m];
      l.excited = f.alpha > 0.3 + 0.1 * m;
      if (!l.excited) continue;
      l.stable = f.gamma > 0.6;
      l.whirl_speed_ratio = 0.3 + 0.2 * f.alpha + 0.1 * m;
      l.log_dec = 0.05 * f.Lambda * (f.gamma - 0.6);
    }
    d.rows.push_back(row);
  }
  assign_splits(d, seed);
  return d;
}

TrainingConfig quick_config() {
  TrainingConfig c;
  for (auto& t : c.tasks) {
    t.hidden = {8};
    t.hyper = quick_hyper();
    t.hyper.epochs = 40;
  }
  return c;
}

const SurrogateModel& small_model() {
  static const SurrogateModel model = train_surrogate(synthetic_dataset(240, 3), quick_config(), 9);
  return model;
}

EnsembleBlock constant_block(Task task, Head head, double bias, double mean = 0.0, double scale = 1.0) {
  EnsembleBlock b;
  b.task = task;
  b.spec = {{FeatureVector::kSize, 2, 1}, Activation::tanh, head};
  b.input.mean = Eigen::VectorXd::Zero(FeatureVector::kSize);
  b.input.stddev = Eigen::VectorXd::Ones(FeatureVector::kSize);
  b.target_mean = mean;
  b.target_scale = scale;
  for (auto& m : b.members) {
    m = MLP::zeros(b.spec);
    m.b.back()[0] = bias;
  }
  return b;
}

EnsembleBlock random_block(Task task, Head head, std::mt19937_64& rng) {
  EnsembleBlock b = constant_block(task, head, 0.0);
  for (auto& m : b.members) m = MLP::random(b.spec, rng);
  for (auto& m : b.members) m.b.back()[0] = 0.3 * (2.0 * uniform01(rng) - 1.0);
  return b;
}

}  // namespace

TEST_CASE("aggregate is the mean and population spread") {
  const BlockPrediction p = aggregate({0.0, 0.0, 0.0, 1.0, 1.0, 1.0});
  CHECK(p.mean == 0.5);
  CHECK(p.spread == 0.5);
  const BlockPrediction q = aggregate({0.3, 0.3, 0.3, 0.3, 0.3, 0.3});
  CHECK(q.mean == doctest::Approx(0.3).epsilon(1e-15));
  CHECK(q.spread == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("gate: a closed excited gate drops everything downstream") {
  std::array<EnsembleBlock, 4> p{constant_block(Task::excited, Head::logistic, -5.0),
                                 constant_block(Task::stable, Head::logistic, 5.0),
                                 constant_block(Task::whirl_ratio, Head::identity, 0.5, 0.4, 0.2),
                                 constant_block(Task::log_dec, Head::identity, 1.0, 0.1, 0.05)};
  const FeatureVector::Vector x = FeatureVector::Vector::Constant(0.3);
  const ModeStabilityResult closed = predict_mode(p, ModeId::conical_forward, x);
  CHECK(closed.mode == ModeId::conical_forward);
  CHECK_FALSE(closed.excited);
  CHECK_FALSE(closed.stable);
  CHECK_FALSE(closed.whirl_speed_ratio);
  CHECK_FALSE(closed.log_dec);

  p[0] = constant_block(Task::excited, Head::logistic, 5.0);
  const ModeStabilityResult open = predict_mode(p, ModeId::conical_forward, x);
  CHECK(open.excited);
  CHECK(open.stable);
  CHECK(*open.whirl_speed_ratio == doctest::Approx(0.4 + 0.2 * 0.5).epsilon(1e-14));
  CHECK(*open.log_dec == doctest::Approx(0.1 + 0.05).epsilon(1e-14));

  p[1] = constant_block(Task::stable, Head::logistic, -5.0);
  CHECK_FALSE(predict_mode(p, ModeId::conical_forward, x).stable);
}

TEST_CASE("gate consistency over random inputs") {
  std::mt19937_64 rng(21);
  SurrogateModel model = small_model();
  for (int m = 0; m < 4; ++m)
    for (int t = 0; t < 4; ++t)
      model.blocks[m][t] = random_block(static_cast<Task>(t), is_classifier(static_cast<Task>(t)) ? Head::logistic : Head::identity, rng);
  std::vector<FeatureVector> fs;
  for (int i = 0; i < 10000; ++i) {
    FeatureVector::Vector v;
    for (int k = 0; k < FeatureVector::kSize; ++k) v[k] = 2.0 * uniform01(rng) - 1.0;
    fs.push_back(FeatureVector::from_vector(v));
  }
  const std::vector<ModeResults> batch = model.predict(fs);
  std::size_t open = 0, bad = 0;
  for (std::size_t i = 0; i < fs.size(); ++i) {
    for (int m = 0; m < 4; ++m) {
      std::array<BlockPrediction, 4> detail;
      const ModeStabilityResult r = predict_mode(model.blocks[m], static_cast<ModeId>(m + 1), fs[i].to_vector(), 0.5, &detail);
      const bool gate = detail[0].mean >= 0.5;
      open += gate;
      if (r.excited != gate) ++bad;
      if (!r.excited && (r.stable || r.whirl_speed_ratio || r.log_dec)) ++bad;
      if (r.excited && (!r.whirl_speed_ratio || !r.log_dec)) ++bad;
      if (!(r == batch[i][m])) ++bad;
    }
  }
  CHECK(bad == 0);
  CHECK(open > 0);
  CHECK(open < 40000);
}

TEST_CASE("regressor learns a linear target") {
  std::mt19937_64 rng(1);
  const Eigen::MatrixXd X = uniform_matrix(3, 500, rng), Xv = uniform_matrix(3, 200, rng), Xt = uniform_matrix(3, 200, rng);
  const EnsembleBlock b = train_block(Task::whirl_ratio, {{3, 16, 1}, Activation::tanh, Head::identity}, quick_hyper(), X,
                                      X.row(0), Xv, Xv.row(0), 4);
  Eigen::RowVectorXd pred(Xt.cols());
  const auto p = b.predict(Xt);
  for (Eigen::Index i = 0; i < Xt.cols(); ++i) pred[i] = p[i].mean;
  CHECK(r_squared(Xt.row(0), pred) >= 0.99);
}

TEST_CASE("classifier separates a linear boundary") {
  std::mt19937_64 rng(2);
  const Eigen::MatrixXd X = uniform_matrix(3, 500, rng), Xv = uniform_matrix(3, 200, rng), Xt = uniform_matrix(3, 500, rng);
  auto labels = [](const Eigen::MatrixXd& A) {
    Eigen::RowVectorXd y(A.cols());
    for (Eigen::Index i = 0; i < A.cols(); ++i) y[i] = A(0, i) + 0.5 * A(1, i) > 0.1 ? 1.0 : 0.0;
    return y;
  };
  TrainingTrace trace;
  const EnsembleBlock b = train_block(Task::excited, {{3, 16, 1}, Activation::tanh, Head::logistic}, quick_hyper(), X,
                                      labels(X), Xv, labels(Xv), 5, 1, &trace);
  const Eigen::RowVectorXd yt = labels(Xt);
  const auto p = b.predict(Xt);
  int hit = 0;
  for (Eigen::Index i = 0; i < Xt.cols(); ++i) hit += (p[i].mean >= 0.5) == (yt[i] == 1.0);
  CHECK(hit >= 0.98 * Xt.cols());
  for (int m = 0; m < kEnsembleMembers; ++m) {
    CHECK(trace.final_val_loss[m] <= trace.initial_val_loss[m]);
    CHECK(trace.epochs_run[m] >= 1);
  }
}

TEST_CASE("training is reproducible and thread independent") {
  std::mt19937_64 rng(3);
  const Eigen::MatrixXd X = uniform_matrix(4, 200, rng), Xv = uniform_matrix(4, 60, rng);
  const Eigen::RowVectorXd y = X.row(1).array().sin() + X.row(2).array(), yv = Xv.row(1).array().sin() + Xv.row(2).array();
  const MLPSpec spec{{4, 6, 1}, Activation::tanh, Head::identity};
  TrainHyper h = quick_hyper();
  h.epochs = 30;
  const EnsembleBlock a = train_block(Task::log_dec, spec, h, X, y, Xv, yv, 77);
  const EnsembleBlock b = train_block(Task::log_dec, spec, h, X, y, Xv, yv, 77);
  const EnsembleBlock c = train_block(Task::log_dec, spec, h, X, y, Xv, yv, 77, 3);
  CHECK(a == b);
  CHECK(a == c);
  const EnsembleBlock d = train_block(Task::log_dec, spec, h, X, y, Xv, yv, 78);
  CHECK_FALSE(a == d);
  for (int m = 1; m < kEnsembleMembers; ++m) CHECK_FALSE(a.members[0] == a.members[m]);
}

TEST_CASE("asinh target transform maps predictions back") {
  std::mt19937_64 rng(4);
  const Eigen::MatrixXd X = uniform_matrix(2, 300, rng), Xv = uniform_matrix(2, 100, rng);
  const Eigen::RowVectorXd y = 20.0 * X.row(0).array().exp(), yv = 20.0 * Xv.row(0).array().exp();
  const EnsembleBlock b = train_block(Task::log_dec, {{2, 8, 1}, Activation::tanh, Head::identity}, quick_hyper(), X, y, Xv,
                                      yv, 6, 1, nullptr, {}, TargetTransform::asinh);
  CHECK(b.target_transform == TargetTransform::asinh);
  CHECK(b.target_mean == doctest::Approx(y.array().asinh().mean()).epsilon(1e-12));
  const auto p = b.predict(Xv);
  Eigen::RowVectorXd pred(Xv.cols());
  for (Eigen::Index i = 0; i < Xv.cols(); ++i) pred[i] = p[i].mean;
  CHECK(r_squared(yv, pred) >= 0.98);
  CHECK(target_transform_from(target_transform_name(TargetTransform::asinh)) == TargetTransform::asinh);
  CHECK(code_of([] { target_transform_from("cube"); }) != "");
}

TEST_CASE("block data gates the downstream blocks on excited rows") {
  const TrainingDataset d = synthetic_dataset(120, 8);
  const BlockData ex = block_data(d, Split::train, 1, Task::excited);
  const BlockData wsr = block_data(d, Split::train, 1, Task::whirl_ratio);
  CHECK(ex.X.rows() == FeatureVector::kSize);
  CHECK(ex.X.cols() == static_cast<Eigen::Index>(d.subset(Split::train).size()));
  CHECK(wsr.X.cols() == static_cast<Eigen::Index>(ex.y.sum()));
}

TEST_CASE("model file round trip") {
  const SurrogateModel& model = small_model();
  const std::string bytes = serialize_model(model);
  REQUIRE(bytes.substr(0, 4) == "GRSM");
  const SurrogateModel back = deserialize_model(bytes);
  CHECK(back == model);
  CHECK(serialize_model(back) == bytes);
  for (int m = 0; m < 4; ++m) CHECK(back.blocks[m][3].target_transform == TargetTransform::asinh);

  const auto fs = sample_features(FeatureRanges{}, 50, 12);
  CHECK(back.predict(fs) == model.predict(fs));

  const auto path = std::filesystem::temp_directory_path() / "gasrotor_test_model.grsm";
  save_model(model, path.string());
  CHECK(load_model(path.string()) == model);
  std::filesystem::remove(path);

  SUBCASE("corrupt payload byte") {
    std::string bad = bytes;
    bad[bad.size() / 2] ^= 0x01;
    CHECK(code_of([&] { deserialize_model(bad); }) == errc::model_digest);
  }
  SUBCASE("corrupt digest byte") {
    std::string bad = bytes;
    bad[9] ^= 0x10;
    CHECK(code_of([&] { deserialize_model(bad); }) == errc::model_digest);
  }
  SUBCASE("truncated") {
    CHECK(code_of([&] { deserialize_model(bytes.substr(0, bytes.size() - 7)); }) == errc::model_truncated);
    CHECK(code_of([&] { deserialize_model(bytes.substr(0, 20)); }) == errc::model_truncated);
  }
  SUBCASE("version mismatch") {
    std::string bad = bytes;
    bad[4] = 2;
    CHECK(code_of([&] { deserialize_model(bad); }) == errc::model_version);
    CHECK(code_of([&] { deserialize_model("XXXX" + bytes.substr(4)); }) == errc::model_version);
  }
  SUBCASE("missing file") { CHECK(code_of([] { load_model("/nonexistent/m.grsm"); }) == errc::io_error); }
}

TEST_CASE("metadata records seed, digests and ranges") {
  const SurrogateModel& model = small_model();
  CHECK(model.metadata.seed == 9);
  CHECK(model.metadata.config_digest.size() == 64);
  CHECK(model.metadata.dataset_digest.size() == 64);
  CHECK(model.metadata.threshold == 0.5);
  CHECK(model.metadata.created.size() == 20);
}

TEST_CASE("shipped training config equals the defaults") {
  std::ifstream in(std::string(GASROTOR_DATA_DIR) + "/../config/default.json");
  REQUIRE(in);
  std::stringstream ss;
  ss << in.rdbuf();
  const auto j = nlohmann::json::parse(ss.str());
  const TrainingConfig c = training_config_from_json(j.at("training").dump());
  CHECK(training_config_json(c) == training_config_json(TrainingConfig{}));
  CHECK(c.tasks[3].target_transform == TargetTransform::asinh);
  CHECK(training_config_json(training_config_from_json(training_config_json(quick_config()))) ==
        training_config_json(quick_config()));
  CHECK(code_of([] { training_config_from_json(R"({"tasks": [{"task": "unknown"}]})"); }) == errc::invalid_argument);
}
