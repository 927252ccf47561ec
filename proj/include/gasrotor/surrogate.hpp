#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "gasrotor/dataset.hpp"
#include "gasrotor/features.hpp"
#include "gasrotor/mlp.hpp"

namespace gasrotor {

/// The four blocks of one mode pipeline, in evaluation order.
enum class Task : std::uint8_t { excited = 0, stable = 1, whirl_ratio = 2, log_dec = 3 };

const char* task_name(Task t);
inline bool is_classifier(Task t) { return t == Task::excited || t == Task::stable; }

inline constexpr int kEnsembleMembers = 6;

struct TrainHyper {
  double learning_rate = 3e-3;
  int batch_size = 64;
  int epochs = 400;
  int patience = 40;           // epochs without a validation improvement
  bool balance_classes = true; // inverse-frequency sample weights for classifiers
};

struct BlockPrediction {
  double mean = 0.0;
  double spread = 0.0;  // population standard deviation over the members
};

/// Applied to a regressor target before z-scoring. asinh tames the heavy tail
/// of the log decrement of nearly overdamped modes.
enum class TargetTransform : std::uint8_t { identity = 0, asinh = 1 };

const char* target_transform_name(TargetTransform t);
TargetTransform target_transform_from(const std::string& name);

/// Six networks of one shape; regressors learn z-scored (transformed) targets
/// and are mapped back through target_mean + target_scale * output and the
/// inverse transform before aggregation.
struct EnsembleBlock {
  Task task = Task::excited;
  MLPSpec spec;
  TargetTransform target_transform = TargetTransform::identity;
  std::vector<int> log_features;  // rows replaced by their log before `input`
  Normalizer input;
  double target_mean = 0.0;
  double target_scale = 1.0;
  std::array<MLP, kEnsembleMembers> members;

  /// Log rows and normalizer applied to raw inputs.
  Eigen::MatrixXd transform(const Eigen::Ref<const Eigen::MatrixXd>& X) const;
  /// Columns of X are raw (unnormalized) feature vectors.
  std::vector<BlockPrediction> predict(const Eigen::Ref<const Eigen::MatrixXd>& X) const;
  BlockPrediction predict_one(const FeatureVector::Vector& x) const;

  bool operator==(const EnsembleBlock&) const = default;
};

/// Mean and population std of member outputs.
BlockPrediction aggregate(const std::array<double, kEnsembleMembers>& outputs);

struct TrainingTrace {
  std::array<double, kEnsembleMembers> initial_val_loss{};
  std::array<double, kEnsembleMembers> final_val_loss{};
  std::array<int, kEnsembleMembers> epochs_run{};
};

/// Mini-batch Adam per member with early stopping on the validation loss;
/// the best-validation weights are kept, so the final validation loss never
/// exceeds the initial one. Members differ only by their derived seeds and
/// may run on `threads` threads without changing the result.
EnsembleBlock train_block(Task task, const MLPSpec& spec, const TrainHyper& hyper,
                          const Eigen::Ref<const Eigen::MatrixXd>& X_train,
                          const Eigen::Ref<const Eigen::RowVectorXd>& y_train,
                          const Eigen::Ref<const Eigen::MatrixXd>& X_val, const Eigen::Ref<const Eigen::RowVectorXd>& y_val,
                          std::uint64_t seed, unsigned threads = 1, TrainingTrace* trace = nullptr,
                          const std::vector<int>& log_features = {},
                          TargetTransform target_transform = TargetTransform::identity);

/// Inputs and targets of one block on one split. Classifier targets are 0/1;
/// the stable classifier and both regressors see excited rows only.
struct BlockData {
  Eigen::MatrixXd X;  // 11 x n
  Eigen::RowVectorXd y;
};

BlockData block_data(const TrainingDataset& data, Split split, int mode, Task task);

struct BlockConfig {
  std::vector<int> hidden{32, 32};
  Activation activation = Activation::tanh;
  TrainHyper hyper;
  bool log_scale_inputs = true;  // take logs of kLogScaledFeatures
  TargetTransform target_transform = TargetTransform::identity;
};

struct TrainingConfig {
  std::array<BlockConfig, 4> tasks{BlockConfig{}, BlockConfig{}, BlockConfig{},
                                   BlockConfig{{32, 32}, Activation::tanh, {}, true, TargetTransform::asinh}};  // indexed by Task
  unsigned threads = 1;
};

struct ModelMetadata {
  std::string config_digest;
  std::string dataset_digest;
  std::uint64_t seed = 0;
  std::string created;  // ISO 8601 UTC
  FeatureRanges ranges;
  double threshold = 0.5;

  bool operator==(const ModelMetadata& o) const;
};

struct SurrogateModel {
  std::array<std::array<EnsembleBlock, 4>, 4> blocks;  // [mode][task]
  ModelMetadata metadata;

  ModeResults predict(const FeatureVector& f) const;
  /// Batched; row i of the result belongs to features[i].
  std::vector<ModeResults> predict(const std::vector<FeatureVector>& features) const;

  bool operator==(const SurrogateModel&) const = default;
};

/// Gate: excited below the threshold drops every downstream output.
ModeStabilityResult predict_mode(const std::array<EnsembleBlock, 4>& pipeline, ModeId mode,
                                 const FeatureVector::Vector& x, double threshold = 0.5,
                                 std::array<BlockPrediction, 4>* detail = nullptr);

using TrainProgress = std::function<void(int mode, Task task)>;

SurrogateModel train_surrogate(const TrainingDataset& data, const TrainingConfig& config, std::uint64_t seed,
                               const TrainProgress& progress = {});

/// Canonical JSON of a training config, the input of config_digest.
std::string training_config_json(const TrainingConfig& config);
TrainingConfig training_config_from_json(std::string_view text);

inline constexpr std::uint32_t kModelFormatVersion = 1;

/// Binary container: "GRSM", u32 version, 32-byte SHA-256 of the payload,
/// u64 payload size, payload. The payload holds the metadata JSON and the 16
/// blocks (task, spec, normalizer, target scaling, 6 weight sets in layer
/// order). All numbers little-endian; doubles as IEEE-754 binary64.
std::string serialize_model(const SurrogateModel& model);
SurrogateModel deserialize_model(std::string_view bytes);
void save_model(const SurrogateModel& model, const std::string& path);
SurrogateModel load_model(const std::string& path);

/// Surrogate counterpart of evaluate_oracle: shared losses and load proxy,
/// stability from the networks.
PointEvaluation evaluate_surrogate(const Design& design, const FluidRegistry& fluids, const SurrogateModel& model,
                                   int grid_n = kDefaultGridN);

}  // namespace gasrotor

namespace gasrotor {

/// Per-mode scores of a model against oracle labels on one split. The
/// classifiers are scored block by block: the stable classifier and both
/// regressors on rows the oracle marks excited, without the gate.
struct ModeMetrics {
  std::size_t rows = 0, excited_rows = 0;
  double excited_accuracy = 0.0;
  double excited_balanced_accuracy = 0.0;  // mean recall over the classes present
  double stable_accuracy = 0.0;
  double stable_balanced_accuracy = 0.0;
  double wsr_r2 = 0.0, wsr_mae = 0.0;
  double logdec_r2 = 0.0, logdec_mae = 0.0;
  double gated_agreement = 0.0;  // predict_mode excited flag vs oracle
};

struct ModelMetrics {
  Split split = Split::test;
  std::array<ModeMetrics, 4> modes;
};

ModelMetrics evaluate_model(const SurrogateModel& model, const TrainingDataset& data, Split split = Split::test);

double balanced_accuracy(const std::vector<bool>& truth, const std::vector<bool>& predicted);
double r_squared(const Eigen::Ref<const Eigen::RowVectorXd>& truth, const Eigen::Ref<const Eigen::RowVectorXd>& predicted);

}  // namespace gasrotor
