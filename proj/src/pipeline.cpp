#include <mixnet/pipeline.hpp>

#include <algorithm>
#include <numeric>
#include <ostream>

namespace mixnet {

namespace {

enum Stream : std::uint64_t { kSplit = 1, kAutoencoder, kKmeans, kBandwidth, kCluster };

std::uint64_t derived_seed(std::uint64_t seed, Stream s) { return make_rng(seed, 0x9900 + s)(); }

}  // namespace

PipelineResult train_pipeline(const Dataset& data, const PipelineConfig& cfg, std::ostream* metrics,
                              const Step2Observer& observer) {
  TrainConfig tc = cfg.train;
  if (!cfg.auto_k) tc.validate();
  if (!(cfg.validation_fraction >= 0 && cfg.validation_fraction < 1))
    throw std::invalid_argument("validation fraction must lie in [0, 1)");
  if (data.size() < 4) throw std::invalid_argument("training needs at least 4 rows");

  auto emit = [metrics](const MetricsLine& line) {
    if (metrics) *metrics << line;
  };
  const bool labelled = data.labels.has_value();
  PipelineResult res;

  // Train / validation split.
  std::vector<Index> perm(static_cast<std::size_t>(data.size()));
  std::iota(perm.begin(), perm.end(), Index{0});
  Rng split_rng = make_rng(derived_seed(tc.seed, kSplit));
  std::shuffle(perm.begin(), perm.end(), split_rng);
  const auto n_val = static_cast<Index>(cfg.validation_fraction * static_cast<double>(data.size()));
  res.validation_rows.assign(perm.begin(), perm.begin() + n_val);
  res.train_rows.assign(perm.begin() + n_val, perm.end());
  // Training rows stay in shuffled order: Step 2 slices contiguous batches
  // from a stable sort of this order.
  const Dataset train = data.subset(res.train_rows);
  const Matrix val = data.data(res.validation_rows, Eigen::all);
  emit(MetricsLine("split").add("train", static_cast<long long>(train.size())).add("validation", static_cast<long long>(n_val)));

  MixtureModel& model = res.checkpoint.model;
  Matrix target = train.data;
  Matrix val_target = val;
  if (cfg.ae_code_dim > 0) {
    AutoencoderConfig ac = cfg.ae;
    ac.seed = derived_seed(tc.seed, kAutoencoder);
    AutoencoderFit fit = train_autoencoder(train.data, cfg.ae_code_dim, ac);
    emit(MetricsLine("autoencoder")
             .add("epochs", static_cast<long long>(fit.train_loss.size()))
             .add("train_mse", fit.train_loss.empty() ? 0.0 : fit.train_loss.back())
             .add("validation_mse", fit.validation_loss.empty() ? 0.0
                                                                : *std::min_element(fit.validation_loss.begin(),
                                                                                    fit.validation_loss.end())));
    model.autoencoder = std::move(fit.autoencoder);
    const Matrix codes = encode(*model.autoencoder, train.data);
    model.code_range = CodeRange::fit(codes);
    target = model.code_range.to_unit(codes);
    if (val.rows() > 0) val_target = model.code_range.to_unit(encode(*model.autoencoder, val));
  }

  // Hard clustering.
  const Matrix& cluster_space = (cfg.ae_code_dim > 0 && cfg.cluster_on_codes) ? target : train.data;
  const std::uint64_t km_seed = derived_seed(tc.seed, kKmeans);
  if (cfg.auto_k) {
    const int cap = std::min<int>(cfg.k_max_auto, static_cast<int>(std::ceil(std::sqrt(static_cast<double>(train.size())))));
    std::vector<double> curve;
    tc.k = knee_select_k(cluster_space, 1, std::max(1, cap), km_seed, &curve);
    emit(MetricsLine("knee").add("k", tc.k).add("inertia", Vector(Eigen::Map<const Vector>(curve.data(), static_cast<Index>(curve.size())))));
    tc.validate();
  }
  res.initial = kmeans(cluster_space, tc.k, km_seed, cfg.kmeans_max_iter);
  {
    MetricsLine line("kmeans");
    line.add("k", tc.k).add("inertia", res.initial.inertia);
    if (labelled) line.add("purity", clustering_purity(res.initial.assignments, *train.labels));
    emit(line);
  }

  // Kernel bandwidths.
  if (cfg.sigma > 0) {
    model.kernel = KernelConfig::single(cfg.sigma);
  } else {
    Rng bw_rng = make_rng(derived_seed(tc.seed, kBandwidth));
    const double s = median_pairwise_distance(target, cfg.bandwidth_subsample, bw_rng);
    if (!(s > 0)) throw NumericError("median pairwise distance is zero; pass an explicit sigma");
    model.kernel.bandwidths.clear();
    for (double f : cfg.bandwidth_multipliers) model.kernel.bandwidths.push_back(f * s);
    model.kernel.validate();
  }
  emit(MetricsLine("kernel").add("bandwidths", Vector(Eigen::Map<const Vector>(model.kernel.bandwidths.data(),
                                                                              static_cast<Index>(model.kernel.bandwidths.size())))));

  // Step 1.
  std::vector<Matrix> clusters;
  for (int j = 0; j < tc.k; ++j) {
    std::vector<Index> rows;
    for (Index i = 0; i < target.rows(); ++i)
      if (res.initial.assignments[static_cast<std::size_t>(i)] == j) rows.push_back(i);
    clusters.push_back(target(rows, Eigen::all));
  }
  const MlpSpec spec = tc.generator_spec(target.cols());
  std::vector<MlpNetwork> nets = run_step1(clusters, spec, tc, model.kernel, [&](int j, int epoch, double mmd2) {
    emit(MetricsLine("step1").add("component", j).add("epoch", epoch + 1).add("mmd2", mmd2));
  });

  // Step 2.
  res.step2 = run_step2(target, std::move(nets), res.initial.assignments, tc, model.kernel, val_target,
                        [&](const Step2Snapshot& s) {
                          MetricsLine line("step2");
                          line.add("iter", s.record.iteration)
                              .add("validation_ll", s.record.validation_ll)
                              .add("priors", s.record.priors)
                              .add("used", s.record.batches_used)
                              .add("skipped", s.record.batches_skipped);
                          if (labelled)
                            line.add("purity", clustering_purity(hard_assignments(s.refreshed.memberships), *train.labels));
                          emit(line);
                          if (observer) observer(s);
                        });
  model.networks = res.step2.networks;
  model.priors = res.step2.priors;
  res.checkpoint.normalization = data.normalization;
  res.checkpoint.seeds = {tc.seed};
  emit(MetricsLine("done")
           .add("iterations", static_cast<long long>(res.step2.history.size()))
           .add("saturated", res.step2.saturated ? 1 : 0)
           .add("priors", model.priors));
  return res;
}

std::vector<int> cluster_rows(const MixtureModel& model, const Matrix& data, Index samples_s, std::uint64_t seed) {
  Rng rng = make_rng(derived_seed(seed, kCluster));
  return hard_assignments(model_memberships(model, to_target_space(model, data), samples_s, rng));
}

}  // namespace mixnet
