#include <mixnet/mixture.hpp>

#include <algorithm>
#include <limits>
#include <numeric>

namespace mixnet {

namespace {

// RNG stream ids; one independent stream per purpose and component.
constexpr std::uint64_t kStep1Stream = 0x51000;
constexpr std::uint64_t kStep2Stream = 0x52000;
constexpr std::uint64_t kRefreshStream = 0x53000;
constexpr std::uint64_t kInitStream = 0x54000;

double logsumexp(const Vector& v) {
  const double m = v.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((v.array() - m).exp().sum());
}

Vector normalize_log(const Vector& logp) {
  Vector p = (logp.array() - logsumexp(logp)).exp();
  return p / p.sum();
}

Vector log_priors(const Vector& priors) {
  return priors.unaryExpr([](double p) {
    return p > 0 ? std::log(p) : -std::numeric_limits<double>::infinity();
  });
}

int argmax_row(const Matrix& m, Index i) {
  Index best = 0;
  for (Index j = 1; j < m.cols(); ++j)
    if (m(i, j) > m(i, best)) best = j;
  return static_cast<int>(best);
}

void check_priors(const Vector& priors, Index k) {
  if (priors.size() != k) throw std::invalid_argument("priors: length does not match K");
  if ((priors.array() < 0).any() || !priors.allFinite())
    throw std::invalid_argument("priors: entries must be finite and non-negative");
  if (std::abs(priors.sum() - 1.0) > 1e-9) throw std::invalid_argument("priors: must sum to 1");
}

void train_on_batch(MlpNetwork& net, const Matrix& batch, const KernelConfig& kernel, double lr,
                    double weight_decay, Rng& rng, double* mmd2_out) {
  const Matrix z = sample_latent(net.spec.input_size(), batch.rows(), rng);
  const auto trace = forward_trace(net, z);
  Matrix g_y;
  const double c = mmd2_unbiased(batch, trace.output(), kernel, &g_y);
  if (!std::isfinite(c)) throw NumericError("MMD cost is not finite");
  const auto grads = backward(net, trace, g_y);
  sgd_step(net, grads, lr, weight_decay);
  if (mmd2_out) *mmd2_out = c;
}

}  // namespace

// ---- config / model ------------------------------------------------------

void TrainConfig::validate() const {
  if (k < 1) throw std::invalid_argument("k must be >= 1");
  if (t1 < 0 || t2 < 0) throw std::invalid_argument("t1/t2 must be >= 0");
  if (batch_size < 2) throw std::invalid_argument("batch size must be >= 2 for MMD");
  if (!(alpha > 0) || !(beta > 0)) throw std::invalid_argument("alpha/beta must be > 0");
  if (samples_s < 1) throw std::invalid_argument("samples-s must be >= 1");
  if (!(batch_threshold >= 0 && batch_threshold <= 1))
    throw std::invalid_argument("threshold must lie in [0, 1]");
  if (weight_decay < 0) throw std::invalid_argument("weight decay must be >= 0");
  if (latent_dim < 1) throw std::invalid_argument("latent dim must be >= 1");
  for (Index h : hidden)
    if (h < 1) throw std::invalid_argument("hidden sizes must be >= 1");
  if (saturation_patience < 1) throw std::invalid_argument("saturation patience must be >= 1");
}

MlpSpec TrainConfig::generator_spec(Index output_dim) const {
  MlpSpec spec{{latent_dim}, OutputActivation::Sigmoid};
  spec.layer_sizes.insert(spec.layer_sizes.end(), hidden.begin(), hidden.end());
  spec.layer_sizes.push_back(output_dim);
  return spec;
}

CodeRange CodeRange::fit(const Matrix& codes) {
  CodeRange r;
  r.lo = codes.colwise().minCoeff().transpose();
  r.hi = codes.colwise().maxCoeff().transpose();
  for (Index j = 0; j < r.lo.size(); ++j)
    if (!(r.hi(j) > r.lo(j))) r.hi(j) = r.lo(j) + 1.0;
  return r;
}

Matrix CodeRange::to_unit(const Matrix& codes) const {
  if (empty()) return codes;
  if (codes.cols() != lo.size()) throw std::invalid_argument("CodeRange: dimension mismatch");
  const RowVector scale = (hi - lo).cwiseInverse().transpose();
  return ((codes.rowwise() - lo.transpose()).array().rowwise() * scale.array()).matrix();
}

Matrix CodeRange::to_code(const Matrix& unit) const {
  if (empty()) return unit;
  if (unit.cols() != lo.size()) throw std::invalid_argument("CodeRange: dimension mismatch");
  const RowVector scale = (hi - lo).transpose();
  Matrix out = (unit.array().rowwise() * scale.array()).matrix();
  out.rowwise() += lo.transpose();
  return out;
}

void MixtureModel::validate() const {
  if (networks.empty()) throw std::invalid_argument("model has no networks");
  for (const auto& n : networks)
    if (!(n.spec == networks.front().spec))
      throw std::invalid_argument("model networks do not share one architecture");
  check_priors(priors, num_components());
  if (std::abs(priors.sum() - 1.0) > 1e-12) throw std::invalid_argument("model priors must sum to 1");
  kernel.validate();
  if (!code_range.empty() && code_range.lo.size() != target_dim())
    throw std::invalid_argument("code range dimension does not match generators");
  if (autoencoder && autoencoder->code_dim() != target_dim())
    throw std::invalid_argument("autoencoder code size does not match generators");
}

// ---- Step 1 --------------------------------------------------------------

std::vector<MlpNetwork> initial_networks(const MlpSpec& spec, int k, std::uint64_t seed) {
  std::vector<MlpNetwork> nets;
  for (int j = 0; j < k; ++j) {
    Rng r = make_rng(seed, kInitStream + static_cast<std::uint64_t>(j));
    nets.push_back(init_network(spec, r()));
  }
  return nets;
}

std::vector<MlpNetwork> run_step1(const std::vector<Matrix>& clusters, const MlpSpec& spec,
                                  const TrainConfig& cfg, const KernelConfig& kernel,
                                  const Step1Observer& observer) {
  cfg.validate();
  kernel.validate();
  if (clusters.empty()) throw std::invalid_argument("run_step1: no clusters");
  for (const auto& c : clusters) {
    if (c.rows() < 2) throw std::invalid_argument("run_step1: every cluster needs at least 2 points");
    if (c.cols() != spec.output_size())
      throw std::invalid_argument("run_step1: cluster dimension does not match network output");
  }

  const int k = static_cast<int>(clusters.size());
  std::vector<MlpNetwork> nets = initial_networks(spec, k, cfg.seed);
  for (int j = 0; j < k; ++j) {
    const Matrix& data = clusters[static_cast<std::size_t>(j)];
    MlpNetwork& net = nets[static_cast<std::size_t>(j)];
    Rng rng = make_rng(cfg.seed, kStep1Stream + static_cast<std::uint64_t>(j));
    const Index n = data.rows();
    const Index bs = std::min(cfg.batch_size, n);
    const Index num_batches = n / bs;
    std::vector<Index> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), Index{0});

    for (int epoch = 0; epoch < cfg.t1; ++epoch) {
      std::shuffle(perm.begin(), perm.end(), rng);
      double total = 0;
      for (Index b = 0; b < num_batches; ++b) {
        const std::vector<Index> rows(perm.begin() + b * bs, perm.begin() + (b + 1) * bs);
        double c = 0;
        train_on_batch(net, data(rows, Eigen::all), kernel, cfg.alpha, cfg.weight_decay, rng, &c);
        total += c;
      }
      if (observer) observer(j, epoch, total / static_cast<double>(num_batches));
    }
  }
  return nets;
}

// ---- likelihoods and memberships ----------------------------------------

Matrix generate_samples(const MlpNetwork& net, Index count, Rng& rng) {
  return forward(net, sample_latent(net.spec.input_size(), count, rng));
}

Matrix likelihoods_from_samples(const Matrix& x, const std::vector<Matrix>& samples,
                                const KernelConfig& kernel) {
  kernel.validate();
  Matrix l(x.rows(), static_cast<Index>(samples.size()));
  for (std::size_t j = 0; j < samples.size(); ++j) {
    if (samples[j].rows() < 1) throw std::invalid_argument("likelihoods: empty sample set");
    l.col(static_cast<Index>(j)) = kernel_matrix(x, samples[j], kernel).rowwise().mean();
  }
  return l.cwiseMax(kLikelihoodFloor);
}

Matrix compute_likelihood_matrix(const Matrix& x, const std::vector<MlpNetwork>& networks,
                                 const KernelConfig& kernel, Index samples_s, Rng& rng) {
  if (samples_s < 1) throw std::invalid_argument("compute_likelihood_matrix: S must be >= 1");
  std::vector<Matrix> samples;
  for (const auto& net : networks) samples.push_back(generate_samples(net, samples_s, rng));
  return likelihoods_from_samples(x, samples, kernel);
}

Matrix compute_memberships(const Matrix& likelihoods, const Vector& priors) {
  check_priors(priors, likelihoods.cols());
  const Vector lp = log_priors(priors);
  Matrix m(likelihoods.rows(), likelihoods.cols());
  for (Index i = 0; i < likelihoods.rows(); ++i) {
    const Vector logp = likelihoods.row(i).transpose().array().log().matrix() + lp;
    if (!std::isfinite(logp.maxCoeff())) throw NumericError("membership row has no support");
    m.row(i) = normalize_log(logp).transpose();
  }
  return m;
}

Vector batch_membership(std::span<const Index> rows, const Matrix& likelihoods, const Vector& priors) {
  if (rows.empty()) throw std::invalid_argument("batch_membership: empty batch");
  check_priors(priors, likelihoods.cols());
  Vector logp = log_priors(priors);
  for (Index r : rows) logp += likelihoods.row(r).transpose().array().log().matrix();
  return normalize_log(logp);
}

void rearrange(MixtureState& state) {
  const Index n = state.likelihoods.rows();
  const Index k = state.likelihoods.cols();
  std::vector<int> best(static_cast<std::size_t>(n));
  state.block_sizes.assign(static_cast<std::size_t>(k), 0);
  for (Index i = 0; i < n; ++i) {
    best[static_cast<std::size_t>(i)] = argmax_row(state.likelihoods, i);
    ++state.block_sizes[static_cast<std::size_t>(best[static_cast<std::size_t>(i)])];
  }
  state.order.resize(static_cast<std::size_t>(n));
  std::iota(state.order.begin(), state.order.end(), Index{0});
  std::stable_sort(state.order.begin(), state.order.end(), [&best](Index a, Index b) {
    return best[static_cast<std::size_t>(a)] < best[static_cast<std::size_t>(b)];
  });
}

Vector update_priors(const Matrix& memberships) {
  Vector p = memberships.colwise().mean().transpose();
  return p / p.sum();
}

double average_log_likelihood(const Matrix& likelihoods, const Vector& priors) {
  return (likelihoods * priors).array().log().mean();
}

// ---- Step 2 --------------------------------------------------------------

Step2Result run_step2(const Matrix& x, std::vector<MlpNetwork> networks,
                      const std::vector<int>& assignments, const TrainConfig& cfg,
                      const KernelConfig& kernel, const Matrix& validation,
                      const Step2Observer& observer) {
  cfg.validate();
  kernel.validate();
  const Index n = x.rows();
  const auto k = static_cast<Index>(networks.size());
  if (k < 1) throw std::invalid_argument("run_step2: no networks");
  if (static_cast<Index>(assignments.size()) != n)
    throw std::invalid_argument("run_step2: assignments length does not match data");
  const bool has_val = validation.rows() > 0;

  Step2Result res;
  MixtureState& st = res.state;

  Vector counts = Vector::Zero(k);
  for (int a : assignments) {
    if (a < 0 || a >= k) throw std::invalid_argument("run_step2: assignment out of range");
    counts(a) += 1;
  }
  st.priors = counts / static_cast<double>(n);

  Rng refresh_rng = make_rng(cfg.seed, kRefreshStream);
  std::vector<Rng> net_rng;
  for (Index j = 0; j < k; ++j) net_rng.push_back(make_rng(cfg.seed, kStep2Stream + static_cast<std::uint64_t>(j)));

  st.likelihoods = compute_likelihood_matrix(x, networks, kernel, cfg.samples_s, refresh_rng);
  st.memberships = compute_memberships(st.likelihoods, st.priors);
  rearrange(st);

  const Index bs = std::min(cfg.batch_size, n);
  const Index num_batches = n / bs;
  double best_ll = -std::numeric_limits<double>::infinity();
  int stall = 0;

  for (int t = 1; t <= cfg.t2; ++t) {
    rearrange(st);
    std::vector<Vector> mb;
    mb.reserve(static_cast<std::size_t>(num_batches));
    for (Index b = 0; b < num_batches; ++b)
      mb.push_back(batch_membership(std::span<const Index>(st.order).subspan(
                                        static_cast<std::size_t>(b * bs), static_cast<std::size_t>(bs)),
                                    st.likelihoods, st.priors));

    IterationRecord rec;
    rec.iteration = t;
    rec.batches_used.assign(static_cast<std::size_t>(k), 0);
    rec.batches_skipped.assign(static_cast<std::size_t>(k), 0);

    for (Index j = 0; j < k; ++j) {
      for (Index b = 0; b < num_batches; ++b) {
        const double m = mb[static_cast<std::size_t>(b)](j);
        if (!(m > cfg.batch_threshold)) {
          ++rec.batches_skipped[static_cast<std::size_t>(j)];
          continue;
        }
        ++rec.batches_used[static_cast<std::size_t>(j)];
        const std::vector<Index> rows(st.order.begin() + b * bs, st.order.begin() + (b + 1) * bs);
        train_on_batch(networks[static_cast<std::size_t>(j)], x(rows, Eigen::all), kernel, m * cfg.beta,
                       cfg.weight_decay, net_rng[static_cast<std::size_t>(j)], nullptr);
      }
    }

    // Refresh L with fresh samples, then the priors.
    MixtureState next;
    std::vector<Matrix> samples;
    for (const auto& net : networks) samples.push_back(generate_samples(net, cfg.samples_s, refresh_rng));
    next.likelihoods = likelihoods_from_samples(x, samples, kernel);
    next.memberships = compute_memberships(next.likelihoods, st.priors);
    next.priors = update_priors(next.memberships);
    next.memberships = compute_memberships(next.likelihoods, next.priors);
    next.order = st.order;
    next.block_sizes = st.block_sizes;

    rec.validation_ll = has_val
                            ? average_log_likelihood(likelihoods_from_samples(validation, samples, kernel), next.priors)
                            : average_log_likelihood(next.likelihoods, next.priors);
    if (!std::isfinite(rec.validation_ll)) throw NumericError("validation log-likelihood is not finite");
    rec.priors = next.priors;

    if (observer) observer(Step2Snapshot{rec, st, mb, next});
    res.history.push_back(rec);
    st = std::move(next);

    if (rec.validation_ll > best_ll + cfg.saturation_tol * std::abs(best_ll) ||
        !std::isfinite(best_ll)) {
      best_ll = rec.validation_ll;
      stall = 0;
    } else if (++stall >= cfg.saturation_patience) {
      res.saturated = true;
      break;
    }
  }

  res.networks = std::move(networks);
  res.priors = st.priors;
  return res;
}

// ---- using a trained model ----------------------------------------------

Matrix generate_targets(const MixtureModel& model, Index n, std::optional<int> component, Rng& rng,
                        std::vector<int>* components) {
  if (n < 1) throw std::invalid_argument("generate: n must be >= 1");
  const int k = model.num_components();
  if (component && (*component < 0 || *component >= k))
    throw std::invalid_argument("generate: component index out of range");

  if (component) {
    if (components) components->assign(static_cast<std::size_t>(n), *component);
    return generate_samples(model.networks[static_cast<std::size_t>(*component)], n, rng);
  }

  std::vector<int> comp(static_cast<std::size_t>(n));
  for (auto& c : comp) {
    double u = uniform01(rng);
    c = k - 1;
    for (int j = 0; j < k; ++j) {
      if (u < model.priors(j)) {
        c = j;
        break;
      }
      u -= model.priors(j);
    }
    // Never pick a zero-prior component through rounding at the tail.
    while (model.priors(c) <= 0 && c > 0) --c;
  }
  const Matrix z = sample_latent(model.latent_dim(), n, rng);
  Matrix out(n, model.target_dim());
  for (int j = 0; j < k; ++j) {
    std::vector<Index> rows;
    for (Index i = 0; i < n; ++i)
      if (comp[static_cast<std::size_t>(i)] == j) rows.push_back(i);
    if (rows.empty()) continue;
    out(rows, Eigen::all) = forward(model.networks[static_cast<std::size_t>(j)], z(rows, Eigen::all));
  }
  if (components) *components = std::move(comp);
  return out;
}

Matrix to_data_space(const MixtureModel& model, const Matrix& targets) {
  Matrix codes = model.code_range.to_code(targets);
  if (model.autoencoder) return decode(*model.autoencoder, codes);
  return codes;
}

Matrix to_target_space(const MixtureModel& model, const Matrix& data) {
  if (data.cols() != model.data_dim()) throw std::invalid_argument("data dimension does not match model");
  if (model.autoencoder) return model.code_range.to_unit(encode(*model.autoencoder, data));
  return model.code_range.to_unit(data);
}

Matrix generate(const MixtureModel& model, Index n, std::optional<int> component, Rng& rng,
                std::vector<int>* components) {
  return to_data_space(model, generate_targets(model, n, component, rng, components));
}

Matrix model_memberships(const MixtureModel& model, const Matrix& targets, Index samples_s, Rng& rng) {
  const Matrix l = compute_likelihood_matrix(targets, model.networks, model.kernel, samples_s, rng);
  return compute_memberships(l, model.priors);
}

std::vector<int> hard_assignments(const Matrix& memberships) {
  std::vector<int> a(static_cast<std::size_t>(memberships.rows()));
  for (Index i = 0; i < memberships.rows(); ++i) a[static_cast<std::size_t>(i)] = argmax_row(memberships, i);
  return a;
}

}  // namespace mixnet
