#include "gasrotor/surrogate.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>

#include "gasrotor/digest.hpp"
#include "gasrotor/error.hpp"
#include "gasrotor/json_io.hpp"

namespace gasrotor {

namespace {

constexpr char kMagic[4] = {'G', 'R', 'S', 'M'};

Eigen::RowVectorXd class_weights(const Eigen::RowVectorXd& y, double w_pos, double w_neg) {
  return y.unaryExpr([&](double v) { return v > 0.5 ? w_pos : w_neg; });
}

struct MemberResult {
  MLP net;
  double initial = 0.0, final = 0.0;
  int epochs = 0;
};

MemberResult train_member(const MLPSpec& spec, const TrainHyper& hyper, const Eigen::MatrixXd& X,
                          const Eigen::RowVectorXd& y, const Eigen::RowVectorXd& w, const Eigen::MatrixXd& Xv,
                          const Eigen::RowVectorXd& yv, const Eigen::RowVectorXd& wv, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  MemberResult r;
  r.net = MLP::random(spec, rng);
  Eigen::VectorXd theta = r.net.parameters(), best = theta, grad;
  double best_loss = loss(r.net, Xv, yv, wv);
  r.initial = best_loss;
  if (!std::isfinite(best_loss)) throw Error(errc::divergence, "initial validation loss is not finite");

  Adam adam;
  adam.learning_rate = hyper.learning_rate;
  const Eigen::Index n = X.cols();
  std::vector<Eigen::Index> order(n);
  for (Eigen::Index i = 0; i < n; ++i) order[i] = i;
  const Eigen::Index batch = std::max<Eigen::Index>(1, std::min<Eigen::Index>(hyper.batch_size, n));
  int stale = 0;
  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    shuffle(order, rng);
    for (Eigen::Index start = 0; start < n; start += batch) {
      const Eigen::Index len = std::min(batch, n - start);
      std::vector<Eigen::Index> idx(order.begin() + start, order.begin() + start + len);
      const double l = loss_and_gradient(r.net, X(Eigen::all, idx), y(idx), w(idx), grad);
      if (!std::isfinite(l) || !grad.allFinite()) {
        std::ostringstream msg;
        msg << "training diverged at epoch " << epoch << " (batch loss " << l << ", learning rate "
            << hyper.learning_rate << ")";
        throw Error(errc::divergence, msg.str());
      }
      adam.step(theta, grad);
      r.net.set_parameters(theta);
    }
    r.epochs = epoch + 1;
    const double lv = loss(r.net, Xv, yv, wv);
    if (!std::isfinite(lv)) throw Error(errc::divergence, "validation loss is not finite at epoch " + std::to_string(epoch));
    if (lv < best_loss) {
      best_loss = lv;
      best = theta;
      stale = 0;
    } else if (++stale >= hyper.patience) {
      break;
    }
  }
  r.net.set_parameters(best);
  r.final = best_loss;
  return r;
}

// Little-endian byte stream.
class Writer {
 public:
  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int k = 0; k < 4; ++k) u8(static_cast<std::uint8_t>(v >> (8 * k)));
  }
  void u64(std::uint64_t v) {
    for (int k = 0; k < 8; ++k) u8(static_cast<std::uint8_t>(v >> (8 * k)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void bytes(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    buf_.append(s);
  }
  void f64s(const double* p, Eigen::Index n) {
    for (Eigen::Index i = 0; i < n; ++i) f64(p[i]);
  }
  std::string& str() { return buf_; }

 private:
  std::string buf_;
};

class Reader {
 public:
  explicit Reader(std::string_view s) : s_(s) {}
  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(s_[pos_++]);
  }
  std::uint32_t u32() {
    std::uint32_t v = 0;
    for (int k = 0; k < 4; ++k) v |= std::uint32_t(u8()) << (8 * k);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v = 0;
    for (int k = 0; k < 8; ++k) v |= std::uint64_t(u8()) << (8 * k);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string bytes() {
    const std::uint32_t n = u32();
    need(n);
    std::string out(s_.substr(pos_, n));
    pos_ += n;
    return out;
  }
  void f64s(double* p, Eigen::Index n) {
    for (Eigen::Index i = 0; i < n; ++i) p[i] = f64();
  }
  bool done() const { return pos_ == s_.size(); }

 private:
  void need(std::size_t n) const {
    if (s_.size() - pos_ < n) throw Error(errc::model_truncated, "model file is truncated");
  }
  std::string_view s_;
  std::size_t pos_ = 0;
};

Json metadata_json(const ModelMetadata& m) {
  Json j;
  j["config_digest"] = m.config_digest;
  j["dataset_digest"] = m.dataset_digest;
  j["seed"] = m.seed;
  j["created"] = m.created;
  j["threshold"] = m.threshold;
  j["feature_ranges"] = to_json(m.ranges);
  return j;
}

ModelMetadata metadata_from_json(const Json& j) {
  ModelMetadata m;
  m.config_digest = j.at("config_digest").get<std::string>();
  m.dataset_digest = j.at("dataset_digest").get<std::string>();
  m.seed = j.at("seed").get<std::uint64_t>();
  m.created = j.at("created").get<std::string>();
  m.threshold = j.at("threshold").get<double>();
  m.ranges = ranges_from_json(j.at("feature_ranges"));
  return m;
}

const char* activation_name(Activation a) { return a == Activation::tanh ? "tanh" : "relu"; }

Activation activation_from(const std::string& s) {
  if (s == "tanh") return Activation::tanh;
  if (s == "relu") return Activation::relu;
  throw Error(errc::invalid_argument, "unknown activation '" + s + "'", "activation");
}

}  // namespace

const char* task_name(Task t) {
  switch (t) {
    case Task::excited: return "excited";
    case Task::stable: return "stable";
    case Task::whirl_ratio: return "whirl_speed_ratio";
    case Task::log_dec: return "log_dec";
  }
  return "unknown";
}

const char* target_transform_name(TargetTransform t) {
  switch (t) {
    case TargetTransform::identity: return "identity";
    case TargetTransform::asinh: return "asinh";
  }
  return "unknown";
}

TargetTransform target_transform_from(const std::string& name) {
  if (name == "identity") return TargetTransform::identity;
  if (name == "asinh") return TargetTransform::asinh;
  throw Error(errc::invalid_argument, "target_transform must be 'identity' or 'asinh'", "target_transform");
}

BlockPrediction aggregate(const std::array<double, kEnsembleMembers>& outputs) {
  double mean = 0.0;
  for (double v : outputs) mean += v;
  mean /= kEnsembleMembers;
  double var = 0.0;
  for (double v : outputs) var += (v - mean) * (v - mean);
  return {mean, std::sqrt(var / kEnsembleMembers)};
}

namespace {

Eigen::MatrixXd log_rows(const Eigen::Ref<const Eigen::MatrixXd>& X, const std::vector<int>& rows) {
  Eigen::MatrixXd out = X;
  for (int r : rows) {
    if (r < 0 || r >= X.rows()) throw Error(errc::invalid_argument, "log feature index out of range");
    if (!(out.row(r).array() > 0.0).all())
      throw Error(errc::out_of_range, std::string("feature '") + (X.rows() == FeatureVector::kSize ? FeatureVector::names()[r] : "?") +
                                          "' must be positive for a log-scaled input");
    out.row(r) = out.row(r).array().log();
  }
  return out;
}

}  // namespace

Eigen::MatrixXd EnsembleBlock::transform(const Eigen::Ref<const Eigen::MatrixXd>& X) const {
  return input.apply(log_rows(X, log_features));
}

std::vector<BlockPrediction> EnsembleBlock::predict(const Eigen::Ref<const Eigen::MatrixXd>& X) const {
  const Eigen::MatrixXd Xn = transform(X);
  Eigen::MatrixXd out(kEnsembleMembers, X.cols());
  for (int k = 0; k < kEnsembleMembers; ++k) out.row(k) = members[k].forward(Xn);
  if (!is_classifier(task)) {
    out = (target_scale * out.array() + target_mean).matrix();
    if (target_transform == TargetTransform::asinh) out = out.array().sinh().matrix();
  }
  std::vector<BlockPrediction> preds(X.cols());
  std::array<double, kEnsembleMembers> col;
  for (Eigen::Index i = 0; i < X.cols(); ++i) {
    for (int k = 0; k < kEnsembleMembers; ++k) col[k] = out(k, i);
    preds[i] = aggregate(col);
  }
  return preds;
}

BlockPrediction EnsembleBlock::predict_one(const FeatureVector::Vector& x) const { return predict(Eigen::MatrixXd(x))[0]; }

EnsembleBlock train_block(Task task, const MLPSpec& spec, const TrainHyper& hyper,
                          const Eigen::Ref<const Eigen::MatrixXd>& X_train,
                          const Eigen::Ref<const Eigen::RowVectorXd>& y_train,
                          const Eigen::Ref<const Eigen::MatrixXd>& X_val, const Eigen::Ref<const Eigen::RowVectorXd>& y_val,
                          std::uint64_t seed, unsigned threads, TrainingTrace* trace,
                          const std::vector<int>& log_features, TargetTransform target_transform) {
  validate(spec);
  if (X_train.cols() == 0 || X_train.cols() != y_train.size())
    throw Error(errc::invalid_argument, std::string("no training data for block ") + task_name(task));
  if (X_train.rows() != spec.inputs() || X_val.rows() != spec.inputs() || X_val.cols() != y_val.size())
    throw Error(errc::invalid_argument, "training data does not match the network input width");
  if (!(hyper.learning_rate > 0.0) || hyper.batch_size < 1 || hyper.epochs < 0 || hyper.patience < 1)
    throw Error(errc::invalid_argument, "invalid training hyperparameters");
  MLPSpec s = spec;
  s.head = is_classifier(task) ? Head::logistic : Head::identity;

  EnsembleBlock block;
  block.task = task;
  block.spec = s;
  block.log_features = log_features;
  if (!is_classifier(task)) block.target_transform = target_transform;
  block.input = Normalizer::fit(log_rows(X_train, log_features));
  const Eigen::MatrixXd X = block.transform(X_train);
  const bool has_val = X_val.cols() > 0;
  const Eigen::MatrixXd Xv = has_val ? block.transform(X_val) : X;
  Eigen::RowVectorXd y = y_train, yv = has_val ? Eigen::RowVectorXd(y_val) : Eigen::RowVectorXd(y_train);

  Eigen::RowVectorXd w, wv;
  if (is_classifier(task)) {
    const double n = static_cast<double>(y.size());
    const double pos = (y.array() > 0.5).count();
    if (hyper.balance_classes && pos > 0.0 && pos < n) {
      w = class_weights(y, n / (2.0 * pos), n / (2.0 * (n - pos)));
      wv = class_weights(yv, n / (2.0 * pos), n / (2.0 * (n - pos)));
    }
  } else {
    if (block.target_transform == TargetTransform::asinh) {
      y = y.array().asinh();
      yv = yv.array().asinh();
    }
    block.target_mean = y.mean();
    const double sd = std::sqrt((y.array() - block.target_mean).square().mean());
    block.target_scale = sd > 0.0 ? sd : 1.0;
    y = (y.array() - block.target_mean) / block.target_scale;
    yv = (yv.array() - block.target_mean) / block.target_scale;
  }
  if (w.size() == 0) w = Eigen::RowVectorXd::Ones(y.size());
  if (wv.size() == 0) wv = Eigen::RowVectorXd::Ones(yv.size());

  std::array<MemberResult, kEnsembleMembers> results;
  std::array<std::exception_ptr, kEnsembleMembers> errors;
  auto run = [&](int k) {
    try {
      results[k] = train_member(s, hyper, X, y, w, Xv, yv, wv, derive_seed(seed, 0x6d656d, k));
    } catch (...) {
      errors[k] = std::current_exception();
    }
  };
  const unsigned t = std::clamp(threads, 1u, static_cast<unsigned>(kEnsembleMembers));
  for (int base = 0; base < kEnsembleMembers; base += static_cast<int>(t)) {
    std::vector<std::thread> pool;
    for (int k = base + 1; k < std::min(base + static_cast<int>(t), kEnsembleMembers); ++k) pool.emplace_back(run, k);
    run(base);
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  for (int k = 0; k < kEnsembleMembers; ++k) {
    block.members[k] = std::move(results[k].net);
    if (trace) {
      trace->initial_val_loss[k] = results[k].initial;
      trace->final_val_loss[k] = results[k].final;
      trace->epochs_run[k] = results[k].epochs;
    }
  }
  return block;
}

BlockData block_data(const TrainingDataset& data, Split split, int mode, Task task) {
  std::vector<const DatasetRow*> rows;
  for (const auto& r : data.rows)
    if (r.split == split && (task == Task::excited || r.labels[mode].excited)) rows.push_back(&r);
  BlockData out;
  out.X.resize(FeatureVector::kSize, static_cast<Eigen::Index>(rows.size()));
  out.y.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& l = rows[i]->labels[mode];
    out.X.col(i) = rows[i]->features.to_vector();
    switch (task) {
      case Task::excited: out.y[i] = l.excited ? 1.0 : 0.0; break;
      case Task::stable: out.y[i] = l.stable ? 1.0 : 0.0; break;
      case Task::whirl_ratio: out.y[i] = *l.whirl_speed_ratio; break;
      case Task::log_dec: out.y[i] = *l.log_dec; break;
    }
  }
  return out;
}

bool ModelMetadata::operator==(const ModelMetadata& o) const {
  return metadata_json(*this) == metadata_json(o);
}

ModeStabilityResult predict_mode(const std::array<EnsembleBlock, 4>& pipeline, ModeId mode,
                                 const FeatureVector::Vector& x, double threshold,
                                 std::array<BlockPrediction, 4>* detail) {
  ModeStabilityResult r;
  r.mode = mode;
  const BlockPrediction excited = pipeline[0].predict_one(x);
  if (detail) *detail = {excited, {}, {}, {}};
  if (excited.mean < threshold) return r;
  const BlockPrediction stable = pipeline[1].predict_one(x);
  const BlockPrediction wsr = pipeline[2].predict_one(x);
  const BlockPrediction dec = pipeline[3].predict_one(x);
  if (detail) *detail = {excited, stable, wsr, dec};
  r.excited = true;
  r.stable = stable.mean >= threshold;
  r.whirl_speed_ratio = wsr.mean;
  r.log_dec = dec.mean;
  return r;
}

ModeResults SurrogateModel::predict(const FeatureVector& f) const { return predict(std::vector<FeatureVector>{f})[0]; }

std::vector<ModeResults> SurrogateModel::predict(const std::vector<FeatureVector>& features) const {
  const auto n = static_cast<Eigen::Index>(features.size());
  Eigen::MatrixXd X(FeatureVector::kSize, n);
  for (Eigen::Index i = 0; i < n; ++i) X.col(i) = features[i].to_vector();
  std::vector<ModeResults> out(features.size());
  for (int m = 0; m < 4; ++m) {
    const std::vector<BlockPrediction> gate = blocks[m][0].predict(X);
    // Downstream blocks only see the columns the gate lets through.
    std::vector<Eigen::Index> open;
    for (Eigen::Index i = 0; i < n; ++i) {
      out[i][m].mode = static_cast<ModeId>(m + 1);
      if (gate[i].mean >= metadata.threshold) open.push_back(i);
    }
    if (open.empty()) continue;
    const Eigen::MatrixXd Xo = X(Eigen::all, open);
    std::array<std::vector<BlockPrediction>, 3> p;
    for (int t = 1; t < 4; ++t) p[t - 1] = blocks[m][t].predict(Xo);
    for (std::size_t k = 0; k < open.size(); ++k) {
      auto& r = out[open[k]][m];
      r.excited = true;
      r.stable = p[0][k].mean >= metadata.threshold;
      r.whirl_speed_ratio = p[1][k].mean;
      r.log_dec = p[2][k].mean;
    }
  }
  return out;
}

std::string training_config_json(const TrainingConfig& config) {
  Json j;
  j["format"] = "gasrotor-training-config";
  Json tasks = Json::array();
  for (int t = 0; t < 4; ++t) {
    const auto& c = config.tasks[t];
    Json e;
    e["task"] = task_name(static_cast<Task>(t));
    e["hidden"] = c.hidden;
    e["activation"] = activation_name(c.activation);
    e["learning_rate"] = c.hyper.learning_rate;
    e["batch_size"] = c.hyper.batch_size;
    e["epochs"] = c.hyper.epochs;
    e["patience"] = c.hyper.patience;
    e["balance_classes"] = c.hyper.balance_classes;
    e["log_scale_inputs"] = c.log_scale_inputs;
    e["target_transform"] = target_transform_name(c.target_transform);
    tasks.push_back(e);
  }
  j["tasks"] = tasks;
  return j.dump();
}

TrainingConfig training_config_from_json(std::string_view text) {
  Json j;
  try {
    j = Json::parse(text.begin(), text.end());
  } catch (const Json::parse_error& e) {
    throw Error(errc::parse_error, std::string("training config: ") + e.what());
  }
  TrainingConfig c;
  if (!j.contains("tasks")) return c;
  try {
    for (const auto& e : j.at("tasks")) {
      const std::string name = e.at("task").get<std::string>();
      int t = 0;
      while (t < 4 && name != task_name(static_cast<Task>(t))) ++t;
      if (t == 4) throw Error(errc::invalid_argument, "unknown task '" + name + "'", "tasks");
      auto& b = c.tasks[t];
      if (e.contains("hidden")) b.hidden = e.at("hidden").get<std::vector<int>>();
      if (e.contains("activation")) b.activation = activation_from(e.at("activation").get<std::string>());
      if (e.contains("learning_rate")) b.hyper.learning_rate = e.at("learning_rate").get<double>();
      if (e.contains("batch_size")) b.hyper.batch_size = e.at("batch_size").get<int>();
      if (e.contains("epochs")) b.hyper.epochs = e.at("epochs").get<int>();
      if (e.contains("patience")) b.hyper.patience = e.at("patience").get<int>();
      if (e.contains("balance_classes")) b.hyper.balance_classes = e.at("balance_classes").get<bool>();
      if (e.contains("log_scale_inputs")) b.log_scale_inputs = e.at("log_scale_inputs").get<bool>();
      if (e.contains("target_transform")) b.target_transform = target_transform_from(e.at("target_transform").get<std::string>());
    }
  } catch (const Json::exception& e) {
    throw Error(errc::parse_error, std::string("training config: ") + e.what());
  }
  return c;
}

SurrogateModel train_surrogate(const TrainingDataset& data, const TrainingConfig& config, std::uint64_t seed,
                               const TrainProgress& progress) {
  SurrogateModel model;
  for (int m = 0; m < 4; ++m) {
    for (int t = 0; t < 4; ++t) {
      const Task task = static_cast<Task>(t);
      const auto& bc = config.tasks[t];
      MLPSpec spec;
      spec.widths.push_back(FeatureVector::kSize);
      for (int w : bc.hidden) spec.widths.push_back(w);
      spec.widths.push_back(1);
      spec.activation = bc.activation;
      const BlockData tr = block_data(data, Split::train, m, task);
      const BlockData va = block_data(data, Split::val, m, task);
      if (tr.X.cols() == 0) {
        // Nothing to learn (e.g. a mode never excited): an untrained block
        // that never fires.
        EnsembleBlock& b = model.blocks[m][t];
        b.task = task;
        b.spec = spec;
        b.spec.head = is_classifier(task) ? Head::logistic : Head::identity;
        b.input.mean = Eigen::VectorXd::Zero(FeatureVector::kSize);
        b.input.stddev = Eigen::VectorXd::Ones(FeatureVector::kSize);
        for (auto& mem : b.members) {
          mem = MLP::zeros(b.spec);
          if (task == Task::excited) mem.b.back()[0] = -30.0;
        }
      } else {
        model.blocks[m][t] =
            train_block(task, spec, bc.hyper, tr.X, tr.y, va.X, va.y, derive_seed(seed, m, t), config.threads, nullptr,
                        bc.log_scale_inputs ? std::vector<int>(kLogScaledFeatures.begin(), kLogScaledFeatures.end())
                                            : std::vector<int>{},
                        bc.target_transform);
      }
      if (progress) progress(m, task);
    }
  }
  model.metadata.seed = seed;
  model.metadata.config_digest = sha256_hex(training_config_json(config));
  model.metadata.dataset_digest = sha256_hex(write_dataset_csv(data));
  model.metadata.created = utc_timestamp();
  return model;
}

std::string serialize_model(const SurrogateModel& model) {
  Writer p;
  p.bytes(metadata_json(model.metadata).dump());
  p.u32(16);
  for (int m = 0; m < 4; ++m) {
    for (int t = 0; t < 4; ++t) {
      const EnsembleBlock& b = model.blocks[m][t];
      p.u8(static_cast<std::uint8_t>(m));
      p.u8(static_cast<std::uint8_t>(b.task));
      p.u8(static_cast<std::uint8_t>(b.spec.activation));
      p.u8(static_cast<std::uint8_t>(b.spec.head));
      p.u8(static_cast<std::uint8_t>(b.target_transform));
      p.u32(static_cast<std::uint32_t>(b.spec.widths.size()));
      for (int w : b.spec.widths) p.u32(static_cast<std::uint32_t>(w));
      p.u32(static_cast<std::uint32_t>(b.log_features.size()));
      for (int r : b.log_features) p.u32(static_cast<std::uint32_t>(r));
      p.u32(static_cast<std::uint32_t>(b.input.mean.size()));
      p.f64s(b.input.mean.data(), b.input.mean.size());
      p.f64s(b.input.stddev.data(), b.input.stddev.size());
      p.f64(b.target_mean);
      p.f64(b.target_scale);
      p.u32(kEnsembleMembers);
      for (const MLP& net : b.members) {
        for (std::size_t l = 0; l < net.W.size(); ++l) {
          p.f64s(net.W[l].data(), net.W[l].size());
          p.f64s(net.b[l].data(), net.b[l].size());
        }
      }
    }
  }
  const std::string& payload = p.str();
  Writer out;
  out.str().append(kMagic, 4);
  out.u32(kModelFormatVersion);
  const Sha256 digest = sha256(payload);
  out.str().append(reinterpret_cast<const char*>(digest.data()), digest.size());
  out.u64(payload.size());
  out.str() += payload;
  return std::move(out.str());
}

SurrogateModel deserialize_model(std::string_view bytes) {
  if (bytes.size() < 4 || bytes.substr(0, 4) != std::string_view(kMagic, 4)) {
    if (bytes.size() < 4) throw Error(errc::model_truncated, "model file is truncated");
    throw Error(errc::model_version, "not a surrogate model file (bad magic)");
  }
  Reader h(bytes.substr(4));
  const std::uint32_t version = h.u32();
  if (version != kModelFormatVersion)
    throw Error(errc::model_version, "model format version " + std::to_string(version) + " is not supported (expected " +
                                         std::to_string(kModelFormatVersion) + ")");
  if (bytes.size() < 4 + 4 + 32 + 8) throw Error(errc::model_truncated, "model file is truncated");
  Sha256 stored;
  std::copy_n(bytes.data() + 8, 32, reinterpret_cast<char*>(stored.data()));
  Reader sz(bytes.substr(40, 8));
  const std::uint64_t size = sz.u64();
  const std::string_view payload = bytes.substr(48);
  if (payload.size() < size) throw Error(errc::model_truncated, "model file is truncated");
  if (payload.size() > size) throw Error(errc::model_digest, "model file has trailing bytes after the payload");
  if (sha256(payload) != stored) throw Error(errc::model_digest, "model payload digest mismatch");

  SurrogateModel model;
  Reader p(payload);
  try {
    model.metadata = metadata_from_json(Json::parse(p.bytes()));
  } catch (const Json::exception& e) {
    throw Error(errc::model_version, std::string("model metadata unreadable: ") + e.what());
  }
  if (p.u32() != 16) throw Error(errc::model_version, "model must hold 16 blocks");
  for (int k = 0; k < 16; ++k) {
    const int m = p.u8();
    const int t = p.u8();
    if (m != k / 4 || t != k % 4) throw Error(errc::model_version, "model blocks out of order");
    EnsembleBlock& b = model.blocks[m][t];
    b.task = static_cast<Task>(t);
    b.spec.activation = static_cast<Activation>(p.u8());
    b.spec.head = static_cast<Head>(p.u8());
    const int tt = p.u8();
    if (tt > 1) throw Error(errc::model_version, "unknown target transform in model file");
    b.target_transform = static_cast<TargetTransform>(tt);
    const std::uint32_t nw = p.u32();
    if (nw < 3 || nw > 64) throw Error(errc::model_version, "implausible layer count in model file");
    b.spec.widths.resize(nw);
    for (auto& w : b.spec.widths) w = static_cast<int>(p.u32());
    validate(b.spec);
    const std::uint32_t nl = p.u32();
    if (nl > static_cast<std::uint32_t>(b.spec.inputs())) throw Error(errc::model_version, "implausible log feature count");
    b.log_features.resize(nl);
    for (auto& r : b.log_features) {
      r = static_cast<int>(p.u32());
      if (r >= b.spec.inputs()) throw Error(errc::model_version, "log feature index out of range");
    }
    const std::uint32_t ni = p.u32();
    if (ni != static_cast<std::uint32_t>(b.spec.inputs())) throw Error(errc::model_version, "normalizer size mismatch");
    b.input.mean.resize(ni);
    b.input.stddev.resize(ni);
    p.f64s(b.input.mean.data(), ni);
    p.f64s(b.input.stddev.data(), ni);
    b.target_mean = p.f64();
    b.target_scale = p.f64();
    if (p.u32() != kEnsembleMembers) throw Error(errc::model_version, "ensemble must have 6 members");
    for (MLP& net : b.members) {
      net = MLP::zeros(b.spec);
      for (std::size_t l = 0; l < net.W.size(); ++l) {
        p.f64s(net.W[l].data(), net.W[l].size());
        p.f64s(net.b[l].data(), net.b[l].size());
      }
    }
  }
  if (!p.done()) throw Error(errc::model_version, "unexpected bytes after the last block");
  return model;
}

void save_model(const SurrogateModel& model, const std::string& path) {
  const std::string bytes = serialize_model(model);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(errc::io_error, "cannot open '" + path + "' for writing", path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(errc::io_error, "write to '" + path + "' failed", path);
}

SurrogateModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(errc::io_error, "cannot open model '" + path + "'", path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize_model(ss.str());
}

PointEvaluation evaluate_surrogate(const Design& design, const FluidRegistry& fluids, const SurrogateModel& model,
                                   int grid_n) {
  PointEvaluation out = evaluate_common(design, fluids, grid_n, model.metadata.ranges);
  out.modes = model.predict(out.features);
  return out;
}

}  // namespace gasrotor

namespace gasrotor {

double balanced_accuracy(const std::vector<bool>& truth, const std::vector<bool>& predicted) {
  std::array<std::size_t, 2> n{}, hit{};
  for (std::size_t i = 0; i < truth.size(); ++i) {
    ++n[truth[i]];
    if (truth[i] == predicted[i]) ++hit[truth[i]];
  }
  double sum = 0.0;
  int classes = 0;
  for (int c = 0; c < 2; ++c) {
    if (n[c] == 0) continue;
    sum += static_cast<double>(hit[c]) / static_cast<double>(n[c]);
    ++classes;
  }
  return classes ? sum / classes : 0.0;
}

double r_squared(const Eigen::Ref<const Eigen::RowVectorXd>& truth, const Eigen::Ref<const Eigen::RowVectorXd>& predicted) {
  const double ss_res = (truth - predicted).squaredNorm();
  const double ss_tot = (truth.array() - truth.mean()).square().sum();
  return ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 0.0;
}

ModelMetrics evaluate_model(const SurrogateModel& model, const TrainingDataset& data, Split split) {
  ModelMetrics out;
  out.split = split;
  for (int m = 0; m < 4; ++m) {
    ModeMetrics& mm = out.modes[m];
    const auto& blocks = model.blocks[m];
    const double th = model.metadata.threshold;

    const BlockData all = block_data(data, split, m, Task::excited);
    mm.rows = static_cast<std::size_t>(all.X.cols());
    if (mm.rows == 0) continue;
    const auto pe = blocks[0].predict(all.X);
    std::vector<bool> truth(mm.rows), pred(mm.rows);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < mm.rows; ++i) {
      truth[i] = all.y[i] > 0.5;
      pred[i] = pe[i].mean >= th;
      hits += truth[i] == pred[i];
    }
    mm.excited_accuracy = static_cast<double>(hits) / static_cast<double>(mm.rows);
    mm.excited_balanced_accuracy = balanced_accuracy(truth, pred);
    mm.gated_agreement = mm.excited_accuracy;

    const BlockData st = block_data(data, split, m, Task::stable);
    mm.excited_rows = static_cast<std::size_t>(st.X.cols());
    if (mm.excited_rows == 0) continue;
    const auto ps = blocks[1].predict(st.X);
    truth.assign(mm.excited_rows, false);
    pred.assign(mm.excited_rows, false);
    hits = 0;
    for (std::size_t i = 0; i < mm.excited_rows; ++i) {
      truth[i] = st.y[i] > 0.5;
      pred[i] = ps[i].mean >= th;
      hits += truth[i] == pred[i];
    }
    mm.stable_accuracy = static_cast<double>(hits) / static_cast<double>(mm.excited_rows);
    mm.stable_balanced_accuracy = balanced_accuracy(truth, pred);

    auto regress = [&](Task t, double& r2, double& mae) {
      const BlockData d = block_data(data, split, m, t);
      const auto p = blocks[static_cast<int>(t)].predict(d.X);
      Eigen::RowVectorXd yhat(d.y.size());
      for (Eigen::Index i = 0; i < d.y.size(); ++i) yhat[i] = p[i].mean;
      r2 = r_squared(d.y, yhat);
      mae = (d.y - yhat).cwiseAbs().mean();
    };
    regress(Task::whirl_ratio, mm.wsr_r2, mm.wsr_mae);
    regress(Task::log_dec, mm.logdec_r2, mm.logdec_mae);
  }
  return out;
}

}  // namespace gasrotor
