#include <mixnet/autoencoder.hpp>

#include <algorithm>
#include <numeric>

namespace mixnet {

Autoencoder make_autoencoder(Index data_dim, Index code_dim, const std::vector<Index>& hidden,
                             std::uint64_t seed) {
  if (data_dim < 1 || code_dim < 1) throw std::invalid_argument("autoencoder: sizes must be >= 1");
  if (code_dim >= data_dim)
    throw std::invalid_argument("autoencoder: code_dim must be smaller than the data dimension");
  std::vector<Index> h = hidden;
  if (h.empty()) h.push_back(std::max<Index>(2 * code_dim, 128));

  MlpSpec enc{{data_dim}, OutputActivation::Linear};
  enc.layer_sizes.insert(enc.layer_sizes.end(), h.begin(), h.end());
  enc.layer_sizes.push_back(code_dim);

  MlpSpec dec{{code_dim}, OutputActivation::Sigmoid};
  dec.layer_sizes.insert(dec.layer_sizes.end(), h.rbegin(), h.rend());
  dec.layer_sizes.push_back(data_dim);

  return Autoencoder{init_network(enc, seed), init_network(dec, seed + 1)};
}

Matrix encode(const Autoencoder& ae, const Matrix& x) { return forward(ae.encoder, x); }

Matrix decode(const Autoencoder& ae, const Matrix& codes) { return forward(ae.decoder, codes); }

double reconstruction_error(const Autoencoder& ae, const Matrix& x) {
  if (x.rows() == 0) return 0.0;
  return (decode(ae, encode(ae, x)) - x).rowwise().squaredNorm().mean();
}

AutoencoderFit train_autoencoder(const Matrix& x, Index code_dim, const AutoencoderConfig& cfg) {
  if (x.rows() < 2) throw std::invalid_argument("train_autoencoder: need at least 2 rows");
  if (cfg.epochs < 0 || cfg.batch_size < 1 || !(cfg.learning_rate > 0))
    throw std::invalid_argument("train_autoencoder: invalid training configuration");

  AutoencoderFit fit;
  fit.autoencoder = make_autoencoder(x.cols(), code_dim, cfg.hidden, cfg.seed);
  Autoencoder& ae = fit.autoencoder;

  Rng rng = make_rng(cfg.seed, 0xae);
  std::vector<Index> order(static_cast<std::size_t>(x.rows()));
  std::iota(order.begin(), order.end(), Index{0});
  std::shuffle(order.begin(), order.end(), rng);
  auto n_val = static_cast<Index>(cfg.validation_fraction * static_cast<double>(x.rows()));
  n_val = std::clamp<Index>(n_val, 0, x.rows() - 1);
  const Matrix val = x(std::vector<Index>(order.begin(), order.begin() + n_val), Eigen::all);
  std::vector<Index> train(order.begin() + n_val, order.end());
  const auto n_train = static_cast<Index>(train.size());
  const Index bs = std::min(cfg.batch_size, n_train);

  Autoencoder best = ae;
  double best_val = std::numeric_limits<double>::infinity();
  int stall = 0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(train.begin(), train.end(), rng);
    double epoch_loss = 0;
    for (Index start = 0; start + bs <= n_train; start += bs) {
      const Matrix batch = x(std::vector<Index>(train.begin() + start, train.begin() + start + bs), Eigen::all);
      const auto enc = forward_trace(ae.encoder, batch);
      const auto dec = forward_trace(ae.decoder, enc.output());
      const Matrix diff = dec.output() - batch;
      epoch_loss += diff.rowwise().squaredNorm().sum();
      // Loss is the batch mean of |r - x|^2.
      const Matrix g_out = (2.0 / static_cast<double>(bs)) * diff;
      Matrix g_code;
      const auto g_dec = backward(ae.decoder, dec, g_out, &g_code);
      const auto g_enc = backward(ae.encoder, enc, g_code);
      sgd_step(ae.decoder, g_dec, cfg.learning_rate, cfg.weight_decay);
      sgd_step(ae.encoder, g_enc, cfg.learning_rate, cfg.weight_decay);
    }
    const Index used = (n_train / bs) * bs;
    const double train_loss = epoch_loss / static_cast<double>(used);
    if (!std::isfinite(train_loss)) throw NumericError("train_autoencoder: non-finite loss");
    fit.train_loss.push_back(train_loss);

    const double v = n_val > 0 ? reconstruction_error(ae, val) : train_loss;
    fit.validation_loss.push_back(v);
    if (v < best_val) {
      best_val = v;
      best = ae;
      stall = 0;
    } else if (++stall >= cfg.patience) {
      break;
    }
  }
  if (!fit.train_loss.empty()) ae = best;
  return fit;
}

}  // namespace mixnet
