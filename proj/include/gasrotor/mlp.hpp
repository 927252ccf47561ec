#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include <Eigen/Dense>

namespace gasrotor {

enum class Activation : std::uint8_t { tanh = 0, relu = 1 };
/// logistic heads are trained on cross-entropy, identity heads on squared error.
enum class Head : std::uint8_t { logistic = 0, identity = 1 };

struct MLPSpec {
  std::vector<int> widths;  // input, hidden..., output (= 1)
  Activation activation = Activation::tanh;
  Head head = Head::identity;

  int inputs() const { return widths.front(); }
  int hidden_layers() const { return static_cast<int>(widths.size()) - 2; }
  Eigen::Index parameter_count() const;

  bool operator==(const MLPSpec&) const = default;
};

/// Throws invalid_argument unless there is >= 1 hidden layer, every width is
/// >= 1 and the output width is 1.
void validate(const MLPSpec& spec);

/// Fully connected network; W[l] maps layer l (widths[l]) to layer l + 1.
struct MLP {
  MLPSpec spec;
  std::vector<Eigen::MatrixXd> W;
  std::vector<Eigen::VectorXd> b;

  static MLP zeros(const MLPSpec& spec);
  /// Glorot-uniform weights, zero biases.
  static MLP random(const MLPSpec& spec, std::mt19937_64& rng);

  /// Weights then bias per layer, W column-major.
  Eigen::VectorXd parameters() const;
  void set_parameters(const Eigen::Ref<const Eigen::VectorXd>& theta);

  /// Pre-head output for a batch; columns of X are samples.
  Eigen::RowVectorXd logits(const Eigen::Ref<const Eigen::MatrixXd>& X) const;
  Eigen::RowVectorXd forward(const Eigen::Ref<const Eigen::MatrixXd>& X) const;
  double forward_one(const Eigen::Ref<const Eigen::VectorXd>& x) const;

  bool operator==(const MLP&) const = default;
};

double logistic(double z);

/// Weighted mean loss over the batch (weights may be empty = uniform). The
/// head fixes the loss: cross-entropy on logits or squared error.
double loss(const MLP& net, const Eigen::Ref<const Eigen::MatrixXd>& X, const Eigen::Ref<const Eigen::RowVectorXd>& y,
            const Eigen::Ref<const Eigen::RowVectorXd>& weights);

/// Same loss; `grad` receives d loss / d parameters in parameters() order.
double loss_and_gradient(const MLP& net, const Eigen::Ref<const Eigen::MatrixXd>& X,
                         const Eigen::Ref<const Eigen::RowVectorXd>& y,
                         const Eigen::Ref<const Eigen::RowVectorXd>& weights, Eigen::VectorXd& grad);

struct Adam {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void step(Eigen::VectorXd& theta, const Eigen::VectorXd& grad);

 private:
  Eigen::VectorXd m_, v_;
  long t_ = 0;
};

/// Per-feature z-score. Zero-variance features pass through centred.
struct Normalizer {
  Eigen::VectorXd mean;
  Eigen::VectorXd stddev;

  static Normalizer fit(const Eigen::Ref<const Eigen::MatrixXd>& X);
  Eigen::MatrixXd apply(const Eigen::Ref<const Eigen::MatrixXd>& X) const;

  bool operator==(const Normalizer&) const = default;
};

/// Portable draws (the std distributions are implementation-defined).
double uniform01(std::mt19937_64& rng);
std::size_t uniform_index(std::mt19937_64& rng, std::size_t n);
void shuffle(std::vector<Eigen::Index>& v, std::mt19937_64& rng);
/// splitmix64 mixing of a seed with stream identifiers.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0);

}  // namespace gasrotor
