#include "gasrotor/mlp.hpp"

#include <cmath>

#include "gasrotor/error.hpp"

namespace gasrotor {

namespace {

// tanh through exp is within a few ulp of std::tanh at well under half the
// cost. Scalar code, so a value does not depend on its position in the batch.
double fast_tanh(double v) { return 1.0 - 2.0 / (std::exp(2.0 * v) + 1.0); }

Eigen::MatrixXd activate(Activation a, const Eigen::MatrixXd& Z) {
  return a == Activation::tanh ? Eigen::MatrixXd(Z.unaryExpr(&fast_tanh)) : Eigen::MatrixXd(Z.cwiseMax(0.0));
}

// Derivative expressed through the activation output A.
Eigen::MatrixXd activate_prime(Activation a, const Eigen::MatrixXd& A) {
  if (a == Activation::tanh) return (1.0 - A.array().square()).matrix();
  return (A.array() > 0.0).cast<double>().matrix();
}

double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

}  // namespace

Eigen::Index MLPSpec::parameter_count() const {
  Eigen::Index n = 0;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) n += Eigen::Index(widths[l + 1]) * (widths[l] + 1);
  return n;
}

void validate(const MLPSpec& spec) {
  if (spec.widths.size() < 3) throw Error(errc::invalid_argument, "MLP needs at least one hidden layer", "widths");
  for (int w : spec.widths)
    if (w < 1) throw Error(errc::invalid_argument, "MLP widths must be >= 1", "widths");
  if (spec.widths.back() != 1) throw Error(errc::invalid_argument, "MLP output width must be 1", "widths");
}

MLP MLP::zeros(const MLPSpec& spec) {
  validate(spec);
  MLP net;
  net.spec = spec;
  for (std::size_t l = 0; l + 1 < spec.widths.size(); ++l) {
    net.W.push_back(Eigen::MatrixXd::Zero(spec.widths[l + 1], spec.widths[l]));
    net.b.push_back(Eigen::VectorXd::Zero(spec.widths[l + 1]));
  }
  return net;
}

MLP MLP::random(const MLPSpec& spec, std::mt19937_64& rng) {
  MLP net = zeros(spec);
  for (auto& W : net.W) {
    const double a = std::sqrt(6.0 / static_cast<double>(W.rows() + W.cols()));
    for (Eigen::Index j = 0; j < W.cols(); ++j)
      for (Eigen::Index i = 0; i < W.rows(); ++i) W(i, j) = a * (2.0 * uniform01(rng) - 1.0);
  }
  return net;
}

Eigen::VectorXd MLP::parameters() const {
  Eigen::VectorXd theta(spec.parameter_count());
  Eigen::Index k = 0;
  for (std::size_t l = 0; l < W.size(); ++l) {
    theta.segment(k, W[l].size()) = W[l].reshaped();
    k += W[l].size();
    theta.segment(k, b[l].size()) = b[l];
    k += b[l].size();
  }
  return theta;
}

void MLP::set_parameters(const Eigen::Ref<const Eigen::VectorXd>& theta) {
  if (theta.size() != spec.parameter_count())
    throw Error(errc::invalid_argument, "parameter vector size does not match the network");
  Eigen::Index k = 0;
  for (std::size_t l = 0; l < W.size(); ++l) {
    W[l].reshaped() = theta.segment(k, W[l].size());
    k += W[l].size();
    b[l] = theta.segment(k, b[l].size());
    k += b[l].size();
  }
}

Eigen::RowVectorXd MLP::logits(const Eigen::Ref<const Eigen::MatrixXd>& X) const {
  if (X.rows() != spec.inputs()) throw Error(errc::invalid_argument, "input dimension mismatch");
  // One matrix-vector product per column: a column's value does not depend on
  // the batch it arrives in, and it beats a coefficient-wise matrix product.
  Eigen::RowVectorXd z(X.cols());
  Eigen::VectorXd a, h;
  for (Eigen::Index j = 0; j < X.cols(); ++j) {
    a = X.col(j);
    for (std::size_t l = 0; l + 1 < W.size(); ++l) {
      h.noalias() = W[l] * a;
      h += b[l];
      a = spec.activation == Activation::tanh ? Eigen::VectorXd(h.unaryExpr(&fast_tanh)) : Eigen::VectorXd(h.cwiseMax(0.0));
    }
    z(j) = W.back().row(0).dot(a) + b.back()(0);
  }
  return z;
}

Eigen::RowVectorXd MLP::forward(const Eigen::Ref<const Eigen::MatrixXd>& X) const {
  Eigen::RowVectorXd z = logits(X);
  if (spec.head == Head::logistic) z = z.unaryExpr([](double v) { return logistic(v); });
  return z;
}

double MLP::forward_one(const Eigen::Ref<const Eigen::VectorXd>& x) const { return forward(Eigen::MatrixXd(x))(0); }

double logistic(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double loss(const MLP& net, const Eigen::Ref<const Eigen::MatrixXd>& X, const Eigen::Ref<const Eigen::RowVectorXd>& y,
            const Eigen::Ref<const Eigen::RowVectorXd>& weights) {
  const Eigen::RowVectorXd z = net.logits(X);
  const Eigen::Index n = z.size();
  double total = 0.0, wsum = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double w = weights.size() ? weights[i] : 1.0;
    const double l = net.spec.head == Head::logistic ? softplus(z[i]) - y[i] * z[i] : (z[i] - y[i]) * (z[i] - y[i]);
    total += w * l;
    wsum += w;
  }
  return total / wsum;
}

double loss_and_gradient(const MLP& net, const Eigen::Ref<const Eigen::MatrixXd>& X,
                         const Eigen::Ref<const Eigen::RowVectorXd>& y,
                         const Eigen::Ref<const Eigen::RowVectorXd>& weights, Eigen::VectorXd& grad) {
  if (X.rows() != net.spec.inputs() || X.cols() != y.size())
    throw Error(errc::invalid_argument, "batch dimension mismatch");
  const std::size_t L = net.W.size();
  std::vector<Eigen::MatrixXd> act(L);  // act[l] is the input of layer l
  act[0] = X;
  for (std::size_t l = 0; l + 1 < L; ++l)
    act[l + 1] = activate(net.spec.activation, (net.W[l] * act[l]).colwise() + net.b[l]);
  const Eigen::RowVectorXd z = ((net.W.back() * act.back()).colwise() + net.b.back()).row(0);

  const Eigen::Index n = z.size();
  const bool ce = net.spec.head == Head::logistic;
  Eigen::RowVectorXd w = weights.size() ? Eigen::RowVectorXd(weights) : Eigen::RowVectorXd::Ones(n);
  const double wsum = w.sum();
  double total = 0.0;
  Eigen::MatrixXd delta(1, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double r = z[i] - y[i];
    total += w[i] * (ce ? softplus(z[i]) - y[i] * z[i] : r * r);
    delta(0, i) = w[i] * (ce ? logistic(z[i]) - y[i] : 2.0 * r) / wsum;
  }

  grad.resize(net.spec.parameter_count());
  std::vector<Eigen::Index> offset(L);
  Eigen::Index k = 0;
  for (std::size_t l = 0; l < L; ++l) {
    offset[l] = k;
    k += net.W[l].size() + net.b[l].size();
  }
  for (std::size_t l = L; l-- > 0;) {
    const Eigen::MatrixXd gW = delta * act[l].transpose();
    grad.segment(offset[l], gW.size()) = gW.reshaped();
    grad.segment(offset[l] + gW.size(), net.b[l].size()) = delta.rowwise().sum();
    if (l > 0) delta = (net.W[l].transpose() * delta).cwiseProduct(activate_prime(net.spec.activation, act[l]));
  }
  return total / wsum;
}

void Adam::step(Eigen::VectorXd& theta, const Eigen::VectorXd& grad) {
  if (m_.size() != theta.size()) {
    m_ = Eigen::VectorXd::Zero(theta.size());
    v_ = Eigen::VectorXd::Zero(theta.size());
    t_ = 0;
  }
  ++t_;
  m_ = beta1 * m_ + (1.0 - beta1) * grad;
  v_ = beta2 * v_ + (1.0 - beta2) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t_));
  theta.array() -= learning_rate * (m_.array() / c1) / ((v_.array() / c2).sqrt() + epsilon);
}

Normalizer Normalizer::fit(const Eigen::Ref<const Eigen::MatrixXd>& X) {
  if (X.cols() == 0) throw Error(errc::invalid_argument, "cannot fit a normalizer on an empty set");
  Normalizer n;
  n.mean = X.rowwise().mean();
  n.stddev = ((X.colwise() - n.mean).array().square().rowwise().mean()).sqrt();
  for (auto& s : n.stddev)
    if (!(s > 0.0)) s = 1.0;
  return n;
}

Eigen::MatrixXd Normalizer::apply(const Eigen::Ref<const Eigen::MatrixXd>& X) const {
  return (X.colwise() - mean).array().colwise() / stddev.array();
}

double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

std::size_t uniform_index(std::mt19937_64& rng, std::size_t n) {
  return static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n)) % n;
}

void shuffle(std::vector<Eigen::Index>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[uniform_index(rng, i)]);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return mix(mix(mix(mix(seed) ^ a) ^ b) ^ c);
}

}  // namespace gasrotor
