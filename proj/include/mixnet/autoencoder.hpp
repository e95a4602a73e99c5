#pragma once

#include <mixnet/mlp.hpp>

#include <vector>

namespace mixnet {

/// Encoder D -> code (ReLU hidden, linear code layer) and decoder
/// code -> D (ReLU hidden, sigmoid output).
struct Autoencoder {
  MlpNetwork encoder;
  MlpNetwork decoder;

  Index data_dim() const { return encoder.spec.input_size(); }
  Index code_dim() const { return encoder.spec.output_size(); }
};

struct AutoencoderConfig {
  /// Empty means a single hidden layer of max(2 * code_dim, 128) units.
  std::vector<Index> hidden;
  int epochs = 100;
  Index batch_size = 100;
  double learning_rate = 0.05;
  double weight_decay = 0.0;
  double validation_fraction = 0.1;
  /// Stop when validation error has not improved for this many epochs.
  int patience = 10;
  std::uint64_t seed = 1;
};

struct AutoencoderFit {
  Autoencoder autoencoder;
  std::vector<double> train_loss;       // mean |r - x|^2 per epoch
  std::vector<double> validation_loss;  // same, on the held-out rows
};

Autoencoder make_autoencoder(Index data_dim, Index code_dim, const std::vector<Index>& hidden,
                             std::uint64_t seed);

/// Mini-batch SGD on mean squared reconstruction error; keeps the parameters
/// with the best validation error.
AutoencoderFit train_autoencoder(const Matrix& x, Index code_dim, const AutoencoderConfig& cfg);

Matrix encode(const Autoencoder& ae, const Matrix& x);
Matrix decode(const Autoencoder& ae, const Matrix& codes);

/// Mean over rows of |decode(encode(x)) - x|^2.
double reconstruction_error(const Autoencoder& ae, const Matrix& x);

}  // namespace mixnet
