#pragma once

// End-to-end training: split -> optional autoencoder -> k-means (or knee)
// -> Step 1 -> Step 2 -> checkpoint.

#include <mixnet/clustering.hpp>
#include <mixnet/io.hpp>
#include <mixnet/mixture.hpp>

#include <iosfwd>

namespace mixnet {

struct PipelineConfig {
  TrainConfig train;
  /// Pick K with knee_select_k over 1..min(k_max_auto, ceil(sqrt(N))).
  bool auto_k = false;
  int k_max_auto = 20;
  /// 0 disables the autoencoder.
  Index ae_code_dim = 0;
  AutoencoderConfig ae;
  /// Run k-means on autoencoder codes rather than on the data itself.
  bool cluster_on_codes = true;
  /// > 0 replaces the median-distance bandwidth rule with a single sigma.
  double sigma = 0.0;
  /// Bandwidths are these multiples of the median pairwise distance.
  std::vector<double> bandwidth_multipliers{0.0625, 0.125, 0.25};
  Index bandwidth_subsample = 1000;
  double validation_fraction = 0.1;
  int kmeans_max_iter = 300;
};

struct PipelineResult {
  ModelCheckpoint checkpoint;
  std::vector<Index> train_rows;
  std::vector<Index> validation_rows;
  /// Hard clustering of the training rows that seeded Step 1.
  HardClustering initial;
  Step2Result step2;
};

/// Everything is a function of (data, cfg); `metrics` receives one
/// key=value line per event.
PipelineResult train_pipeline(const Dataset& data, const PipelineConfig& cfg, std::ostream* metrics = nullptr,
                              const Step2Observer& observer = {});

/// argmax-membership clusters for normalized data rows.
std::vector<int> cluster_rows(const MixtureModel& model, const Matrix& data, Index samples_s, std::uint64_t seed);

}  // namespace mixnet
