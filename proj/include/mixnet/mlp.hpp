#pragma once

// Fully-connected network: ReLU hidden layers, sigmoid (or linear) output,
// hand-written reverse mode. Batches are row-major in the math sense: one
// sample per row.

#include <mixnet/core.hpp>

#include <algorithm>
#include <limits>
#include <vector>

namespace mixnet {

enum class OutputActivation { Sigmoid, Linear };

struct MlpSpec {
  /// Input size, hidden sizes..., output size.
  std::vector<Index> layer_sizes;
  OutputActivation output = OutputActivation::Sigmoid;

  Index input_size() const { return layer_sizes.front(); }
  Index output_size() const { return layer_sizes.back(); }
  std::size_t num_layers() const { return layer_sizes.size() - 1; }

  void validate() const {
    if (layer_sizes.size() < 2)
      throw std::invalid_argument("MlpSpec: need at least an input and an output size");
    for (Index s : layer_sizes)
      if (s < 1) throw std::invalid_argument("MlpSpec: layer sizes must be >= 1");
  }

  bool operator==(const MlpSpec&) const = default;
};

template <typename Scalar>
struct Mlp {
  MlpSpec spec;
  std::vector<MatrixX<Scalar>> weights;  // layer l: out x in
  std::vector<VectorX<Scalar>> biases;

  std::size_t num_layers() const { return weights.size(); }
};

/// Same shapes as the network parameters.
template <typename Scalar>
struct Gradients {
  std::vector<MatrixX<Scalar>> weights;
  std::vector<VectorX<Scalar>> biases;
};

/// Activations kept from a forward pass for the backward pass.
/// post[0] is the input batch, post[l + 1] the output of layer l.
template <typename Scalar>
struct ForwardTrace {
  std::vector<MatrixX<Scalar>> pre;
  std::vector<MatrixX<Scalar>> post;

  const MatrixX<Scalar>& output() const { return post.back(); }
};

using MlpNetwork = Mlp<double>;
using GradientSet = Gradients<double>;

namespace detail {

template <typename Scalar>
Scalar sigmoid(Scalar x) {
  // Clamped so outputs stay strictly inside (0, 1).
  constexpr Scalar hi = Scalar(1) - std::numeric_limits<Scalar>::epsilon() / 2;
  constexpr Scalar lo = std::numeric_limits<Scalar>::min();
  Scalar y;
  if (x >= 0) {
    y = Scalar(1) / (Scalar(1) + std::exp(-x));
  } else {
    const Scalar e = std::exp(x);
    y = e / (Scalar(1) + e);
  }
  return std::clamp(y, lo, hi);
}

template <typename Scalar>
void check_same_shape(const Mlp<Scalar>& net, const Gradients<Scalar>& g) {
  if (g.weights.size() != net.weights.size() || g.biases.size() != net.biases.size())
    throw std::invalid_argument("gradient layer count does not match network");
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    if (g.weights[l].rows() != net.weights[l].rows() || g.weights[l].cols() != net.weights[l].cols() ||
        g.biases[l].size() != net.biases[l].size())
      throw std::invalid_argument("gradient shape does not match network");
  }
}

}  // namespace detail

/// Uniform Glorot init in [-a, a], a = sqrt(6 / (fan_in + fan_out)); zero biases.
template <typename Scalar = double>
Mlp<Scalar> init_network(const MlpSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng = make_rng(seed, 0x1a1);
  Mlp<Scalar> net;
  net.spec = spec;
  for (std::size_t l = 0; l < spec.num_layers(); ++l) {
    const Index fan_in = spec.layer_sizes[l];
    const Index fan_out = spec.layer_sizes[l + 1];
    const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    MatrixX<Scalar> w(fan_out, fan_in);
    // Row-by-row fill so the draw order does not depend on storage order.
    for (Index r = 0; r < fan_out; ++r)
      for (Index c = 0; c < fan_in; ++c) w(r, c) = static_cast<Scalar>(uniform(rng, -a, a));
    net.weights.push_back(std::move(w));
    net.biases.push_back(VectorX<Scalar>::Zero(fan_out));
  }
  return net;
}

template <typename Scalar>
Mlp<Scalar> zero_network(const MlpSpec& spec) {
  spec.validate();
  Mlp<Scalar> net;
  net.spec = spec;
  for (std::size_t l = 0; l < spec.num_layers(); ++l) {
    net.weights.push_back(MatrixX<Scalar>::Zero(spec.layer_sizes[l + 1], spec.layer_sizes[l]));
    net.biases.push_back(VectorX<Scalar>::Zero(spec.layer_sizes[l + 1]));
  }
  return net;
}

template <typename Scalar>
Gradients<Scalar> zero_gradients(const Mlp<Scalar>& net) {
  Gradients<Scalar> g;
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    g.weights.push_back(MatrixX<Scalar>::Zero(net.weights[l].rows(), net.weights[l].cols()));
    g.biases.push_back(VectorX<Scalar>::Zero(net.biases[l].size()));
  }
  return g;
}

template <typename Scalar, typename Derived>
ForwardTrace<Scalar> forward_trace(const Mlp<Scalar>& net, const Eigen::MatrixBase<Derived>& z) {
  if (z.cols() != net.spec.input_size())
    throw std::invalid_argument("forward: input has " + std::to_string(z.cols()) +
                                " columns, network expects " + std::to_string(net.spec.input_size()));
  ForwardTrace<Scalar> trace;
  trace.post.emplace_back(z);
  const std::size_t L = net.num_layers();
  for (std::size_t l = 0; l < L; ++l) {
    MatrixX<Scalar> a = trace.post.back() * net.weights[l].transpose();
    a.rowwise() += net.biases[l].transpose();
    MatrixX<Scalar> h;
    if (l + 1 < L)
      h = a.cwiseMax(Scalar(0));
    else if (net.spec.output == OutputActivation::Sigmoid)
      h = a.unaryExpr([](Scalar v) { return detail::sigmoid(v); });
    else
      h = a;
    trace.pre.push_back(std::move(a));
    trace.post.push_back(std::move(h));
  }
  return trace;
}

template <typename Scalar, typename Derived>
MatrixX<Scalar> forward(const Mlp<Scalar>& net, const Eigen::MatrixBase<Derived>& z) {
  return std::move(forward_trace(net, z).post.back());
}

/// Gradient of a batch cost with respect to every parameter, summed over the
/// batch rows. `grad_output` is dC/dy for the traced batch. When `grad_input`
/// is given it receives dC/dz.
template <typename Scalar, typename Derived>
Gradients<Scalar> backward(const Mlp<Scalar>& net, const ForwardTrace<Scalar>& trace,
                           const Eigen::MatrixBase<Derived>& grad_output,
                           MatrixX<Scalar>* grad_input = nullptr) {
  const MatrixX<Scalar>& y = trace.output();
  if (grad_output.rows() != y.rows() || grad_output.cols() != y.cols())
    throw std::invalid_argument("backward: grad_output shape does not match network output");
  if (!grad_output.allFinite()) throw NumericError("backward: non-finite grad_output");

  const std::size_t L = net.num_layers();
  Gradients<Scalar> g;
  g.weights.resize(L);
  g.biases.resize(L);

  MatrixX<Scalar> delta;
  if (net.spec.output == OutputActivation::Sigmoid)
    delta = grad_output.cwiseProduct(y.cwiseProduct((Scalar(1) - y.array()).matrix()));
  else
    delta = grad_output;

  for (std::size_t l = L; l-- > 0;) {
    g.weights[l].noalias() = delta.transpose() * trace.post[l];
    g.biases[l] = delta.colwise().sum().transpose();
    if (l > 0) {
      MatrixX<Scalar> up = delta * net.weights[l];
      // ReLU'(0) taken as 0.
      delta = (trace.pre[l - 1].array() > Scalar(0)).select(up, Scalar(0));
    } else if (grad_input) {
      *grad_input = delta * net.weights[0];
    }
  }
  return g;
}

template <typename Scalar, typename DerivedZ, typename DerivedG>
Gradients<Scalar> backward(const Mlp<Scalar>& net, const Eigen::MatrixBase<DerivedZ>& z,
                           const Eigen::MatrixBase<DerivedG>& grad_output) {
  return backward(net, forward_trace(net, z), grad_output);
}

/// w <- (1 - lr * decay) w - lr * g on weights; biases get no decay.
template <typename Scalar>
void sgd_step(Mlp<Scalar>& net, const Gradients<Scalar>& grads, Scalar effective_lr,
              Scalar weight_decay) {
  detail::check_same_shape(net, grads);
  if (!std::isfinite(effective_lr) || !std::isfinite(weight_decay))
    throw NumericError("sgd_step: non-finite learning rate or decay");
  if (effective_lr < 0) throw std::invalid_argument("sgd_step: negative learning rate");
  if (effective_lr == Scalar(0)) return;
  const Scalar shrink = Scalar(1) - effective_lr * weight_decay;
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    if (!grads.weights[l].allFinite() || !grads.biases[l].allFinite())
      throw NumericError("sgd_step: non-finite gradient");
    if (weight_decay != Scalar(0)) net.weights[l] *= shrink;
    net.weights[l] -= effective_lr * grads.weights[l];
    net.biases[l] -= effective_lr * grads.biases[l];
  }
}

/// count x p matrix of i.i.d. U[-1, 1] latents, drawn row by row.
template <typename Scalar = double>
MatrixX<Scalar> sample_latent(Index p, Index count, Rng& rng) {
  if (p < 1 || count < 1) throw std::invalid_argument("sample_latent: sizes must be >= 1");
  MatrixX<Scalar> z(count, p);
  for (Index r = 0; r < count; ++r)
    for (Index c = 0; c < p; ++c) z(r, c) = static_cast<Scalar>(uniform(rng, -1.0, 1.0));
  return z;
}

}  // namespace mixnet
