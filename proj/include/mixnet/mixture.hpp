#pragma once

// Mixture of generator networks trained by an EM-like procedure.
//
// Step 1 trains network j on hard cluster j alone. Step 2 alternates between
// kernel likelihoods of every training point under every network's samples
// (the N x K matrix L), posterior memberships, and membership-weighted SGD on
// mini-batches sliced from the argmax-sorted rows of L.

#include <mixnet/autoencoder.hpp>
#include <mixnet/kernel.hpp>
#include <mixnet/mlp.hpp>

#include <functional>
#include <optional>
#include <span>
#include <vector>

namespace mixnet {

inline constexpr double kLikelihoodFloor = 1e-300;

struct TrainConfig {
  int k = 2;
  int t1 = 30;
  int t2 = 200;
  Index batch_size = 100;
  double alpha = 2.0;  // Step 1 learning rate
  double beta = 4.0;   // Step 2 learning rate, scaled by batch membership
  Index samples_s = 500;
  double batch_threshold = 0.001;
  double weight_decay = 0.0;
  Index latent_dim = 2;
  std::vector<Index> hidden{32, 128, 32};
  /// Step 2 stops once the validation log-likelihood has not improved by a
  /// relative `saturation_tol` for `saturation_patience` iterations.
  double saturation_tol = 1e-3;
  int saturation_patience = 50;
  std::uint64_t seed = 1;

  void validate() const;
  MlpSpec generator_spec(Index output_dim) const;
};

/// Per-coordinate affine map between the generators' (0, 1) output range and
/// autoencoder code space. Empty means identity.
struct CodeRange {
  Vector lo;
  Vector hi;

  bool empty() const { return lo.size() == 0; }
  static CodeRange fit(const Matrix& codes);
  Matrix to_unit(const Matrix& codes) const;
  Matrix to_code(const Matrix& unit) const;
  bool operator==(const CodeRange& o) const { return lo == o.lo && hi == o.hi; }
};

struct MixtureModel {
  std::vector<MlpNetwork> networks;
  Vector priors;
  KernelConfig kernel;
  std::optional<Autoencoder> autoencoder;
  CodeRange code_range;

  int num_components() const { return static_cast<int>(networks.size()); }
  Index latent_dim() const { return networks.front().spec.input_size(); }
  /// Dimension the generators emit (code space with an autoencoder).
  Index target_dim() const { return networks.front().spec.output_size(); }
  Index data_dim() const { return autoencoder ? autoencoder->data_dim() : target_dim(); }

  void validate() const;
};

struct MixtureState {
  Matrix likelihoods;  // N x K, entries >= kLikelihoodFloor
  Matrix memberships;  // N x K, rows sum to 1
  Vector priors;       // K
  std::vector<Index> order;        // permutation of [0, N)
  std::vector<Index> block_sizes;  // K counts, sum N
};

// ---- Step 1 --------------------------------------------------------------

/// The networks Step 1 starts from (deterministic in cfg.seed).
std::vector<MlpNetwork> initial_networks(const MlpSpec& spec, int k, std::uint64_t seed);

/// Called once per (component, epoch) with the mean batch MMD^2.
using Step1Observer = std::function<void(int component, int epoch, double mean_mmd2)>;

std::vector<MlpNetwork> run_step1(const std::vector<Matrix>& clusters, const MlpSpec& spec,
                                  const TrainConfig& cfg, const KernelConfig& kernel,
                                  const Step1Observer& observer = {});

// ---- likelihoods and memberships ----------------------------------------

Matrix generate_samples(const MlpNetwork& net, Index count, Rng& rng);

/// l_ij = mean over network j's samples y of k(x_i, y), floored.
Matrix likelihoods_from_samples(const Matrix& x, const std::vector<Matrix>& samples,
                                const KernelConfig& kernel);

/// Draws `samples_s` fresh samples per network, then likelihoods_from_samples.
Matrix compute_likelihood_matrix(const Matrix& x, const std::vector<MlpNetwork>& networks,
                                 const KernelConfig& kernel, Index samples_s, Rng& rng);

/// m_ij = l_ij pi_j / sum_k l_ik pi_k, normalized in log space.
Matrix compute_memberships(const Matrix& likelihoods, const Vector& priors);

/// Posterior of a whole mini-batch: pi_j prod_r l_rj, normalized in log space.
Vector batch_membership(std::span<const Index> rows, const Matrix& likelihoods, const Vector& priors);

/// Stable sort of rows by argmax likelihood column (ties to lowest column).
void rearrange(MixtureState& state);

/// pi_j = mean_i m_ij.
Vector update_priors(const Matrix& memberships);

/// Mean over rows of log sum_j pi_j l_ij.
double average_log_likelihood(const Matrix& likelihoods, const Vector& priors);

// ---- Step 2 --------------------------------------------------------------

struct IterationRecord {
  int iteration = 0;
  double validation_ll = 0.0;
  Vector priors;
  std::vector<int> batches_used;     // per component
  std::vector<int> batches_skipped;  // per component
};

/// What an observer sees after each Step 2 iteration.
struct Step2Snapshot {
  const IterationRecord& record;
  /// State the iteration trained from: L, memberships and priors from the
  /// previous refresh, rows rearranged.
  const MixtureState& arranged;
  /// Batch memberships (one K-vector per batch) derived from `arranged`.
  const std::vector<Vector>& batch_memberships;
  /// State after the likelihood and prior refresh.
  const MixtureState& refreshed;
};

using Step2Observer = std::function<void(const Step2Snapshot&)>;

struct Step2Result {
  std::vector<MlpNetwork> networks;
  Vector priors;
  MixtureState state;
  std::vector<IterationRecord> history;
  bool saturated = false;
};

/// `assignments` is the Step 1 hard clustering of the rows of `x`;
/// `validation` (optional, may be empty) drives the saturation test.
Step2Result run_step2(const Matrix& x, std::vector<MlpNetwork> networks,
                      const std::vector<int>& assignments, const TrainConfig& cfg,
                      const KernelConfig& kernel, const Matrix& validation = Matrix(),
                      const Step2Observer& observer = {});

// ---- using a trained model ----------------------------------------------

/// Samples in generator target space (codes mapped to (0,1) when an
/// autoencoder is present). `components`, if given, receives the network used
/// for each row.
Matrix generate_targets(const MixtureModel& model, Index n, std::optional<int> component, Rng& rng,
                        std::vector<int>* components = nullptr);

/// Target space -> normalized data space (undo code range, decode).
Matrix to_data_space(const MixtureModel& model, const Matrix& targets);
/// Normalized data space -> target space (encode, apply code range).
Matrix to_target_space(const MixtureModel& model, const Matrix& data);

/// Samples in normalized data space.
Matrix generate(const MixtureModel& model, Index n, std::optional<int> component, Rng& rng,
                std::vector<int>* components = nullptr);

/// Memberships of arbitrary target-space points under the model.
Matrix model_memberships(const MixtureModel& model, const Matrix& targets, Index samples_s, Rng& rng);

/// argmax membership per row.
std::vector<int> hard_assignments(const Matrix& memberships);

}  // namespace mixnet
