#include <mixnet/cli.hpp>
#include <mixnet/eval.hpp>
#include <mixnet/pipeline.hpp>

#include <CLI11.hpp>

#include <charconv>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>

namespace mixnet {

namespace {

class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct DataArgs {
  std::string csv;
  bool labels = false;
  std::string idx_images;
  std::string idx_labels;

  void add_to(CLI::App& app) {
    app.add_option("--data", csv, "CSV file, one row per sample");
    app.add_flag("--labels", labels, "last CSV column is an integer label");
    app.add_option("--idx-images", idx_images, "IDX image file (magic 0x00000803)");
    app.add_option("--idx-labels", idx_labels, "IDX label file (magic 0x00000801)");
  }

  Dataset load() const {
    if (csv.empty() == idx_images.empty()) throw UsageError("give exactly one of --data or --idx-images");
    if (!idx_labels.empty() && idx_images.empty()) throw UsageError("--idx-labels needs --idx-images");
    if (!csv.empty()) return load_csv(csv, labels);
    std::optional<std::filesystem::path> lp;
    if (!idx_labels.empty()) lp = idx_labels;
    return load_idx(idx_images, lp);
  }
};

/// Dataset rows re-expressed in the checkpoint's normalized coordinates.
Matrix in_model_units(const Dataset& d, const ModelCheckpoint& ck) {
  if (d.dim() != ck.normalization.feature_min.size())
    throw FormatError("data has " + std::to_string(d.dim()) + " columns, model expects " +
                      std::to_string(ck.normalization.feature_min.size()));
  return ck.normalization.normalize(d.normalization.denormalize(d.data));
}

/// Writes to `path`, or to `out` when the path is empty or "-".
void emit_output(const std::string& path, const std::string& text, std::ostream& out) {
  if (path.empty() || path == "-")
    out << text;
  else
    write_file_atomic(path, text);
}

std::string csv_text(const Matrix& rows, const std::vector<int>* labels = nullptr) {
  std::ostringstream ss;
  write_csv(ss, rows, labels);
  return ss.str();
}

int parse_k(const std::string& text, bool& automatic) {
  automatic = text == "auto";
  if (automatic) return 0;
  int k = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), k);
  if (ec != std::errc() || ptr != text.data() + text.size() || k < 1)
    throw UsageError("--k: expected a positive integer or 'auto', got '" + text + "'");
  return k;
}

template <class T>
void require_positive(const char* flag, T v) {
  if (!(v > 0)) throw UsageError(std::string(flag) + ": must be > 0");
}

// ---- gen-toy ---------------------------------------------------------------

struct GenToyArgs {
  std::string kind = "two_moon";
  Index n = 4000;
  double noise = 0.08;
  std::uint64_t seed = 1;
  std::string out;
};

int cmd_gen_toy(const GenToyArgs& a, std::ostream& out) {
  const ToyKind kind = [&] {
    try {
      return parse_toy_kind(a.kind);
    } catch (const std::invalid_argument& e) {
      throw UsageError(std::string("--kind: ") + e.what());
    }
  }();
  if (a.n < 2) throw UsageError("--n: must be >= 2");
  if (!(a.noise >= 0)) throw UsageError("--noise: must be >= 0");
  const ToyPoints p = toy_points(kind, a.n, a.noise, a.seed);
  emit_output(a.out, csv_text(p.points, &p.labels), out);
  return kExitOk;
}

// ---- train ----------------------------------------------------------------

struct TrainArgs {
  DataArgs data;
  std::string k = "2";
  PipelineConfig cfg;
  std::string model;
  std::string metrics;
};

int cmd_train(TrainArgs a, std::ostream& out) {
  PipelineConfig& cfg = a.cfg;
  bool automatic = false;
  const int k = parse_k(a.k, automatic);
  cfg.auto_k = automatic;
  if (!automatic) cfg.train.k = k;
  require_positive("--batch", cfg.train.batch_size);
  require_positive("--alpha", cfg.train.alpha);
  require_positive("--beta", cfg.train.beta);
  require_positive("--samples-s", cfg.train.samples_s);
  require_positive("--latent-dim", cfg.train.latent_dim);
  require_positive("--patience", cfg.train.saturation_patience);
  if (cfg.train.batch_size < 2) throw UsageError("--batch: must be >= 2");
  if (cfg.train.t1 < 0) throw UsageError("--t1: must be >= 0");
  if (cfg.train.t2 < 0) throw UsageError("--t2: must be >= 0");
  if (!(cfg.train.batch_threshold >= 0 && cfg.train.batch_threshold <= 1))
    throw UsageError("--threshold: must lie in [0, 1]");
  if (!(cfg.train.weight_decay >= 0)) throw UsageError("--weight-decay: must be >= 0");
  if (!(cfg.train.saturation_tol >= 0)) throw UsageError("--saturation-tol: must be >= 0");
  for (Index h : cfg.train.hidden) require_positive("--hidden", h);
  if (!(cfg.sigma >= 0)) throw UsageError("--sigma: must be >= 0");
  if (cfg.bandwidth_multipliers.empty()) throw UsageError("--bandwidths: need at least one multiplier");
  for (double f : cfg.bandwidth_multipliers) require_positive("--bandwidths", f);
  if (!(cfg.validation_fraction >= 0 && cfg.validation_fraction < 1))
    throw UsageError("--validation-fraction: must lie in [0, 1)");
  if (cfg.ae_code_dim < 0) throw UsageError("--ae-code-dim: must be >= 0");
  require_positive("--ae-epochs", cfg.ae.epochs);
  require_positive("--ae-lr", cfg.ae.learning_rate);
  if (a.model.empty()) throw UsageError("--model: output path required");

  const Dataset data = a.data.load();
  if (cfg.ae_code_dim > 0 && cfg.ae_code_dim >= data.dim())
    throw UsageError("--ae-code-dim: must be smaller than the data dimension " + std::to_string(data.dim()));

  std::ostringstream buffered;
  std::ostream& metrics = a.metrics.empty() ? out : static_cast<std::ostream&>(buffered);
  PipelineResult r = train_pipeline(data, cfg, &metrics);
  if (data.labels) {
    const std::vector<int> assign = cluster_rows(r.checkpoint.model, data.data, cfg.train.samples_s, cfg.train.seed);
    metrics << MetricsLine("cluster").add("rows", static_cast<long long>(data.size()))
                   .add("purity", clustering_purity(assign, *data.labels));
  }
  save_model(r.checkpoint, a.model);
  if (!a.metrics.empty()) write_file_atomic(a.metrics, buffered.str());
  return kExitOk;
}

// ---- generate ---------------------------------------------------------------

struct GenerateArgs {
  std::string model;
  Index n = 1000;
  int component = 0;
  bool tag = false;
  std::uint64_t seed = 1;
  std::string out;
};

int cmd_generate(const GenerateArgs& a, std::ostream& out) {
  require_positive("--n", a.n);
  const ModelCheckpoint ck = load_model(a.model);
  const int k = ck.model.num_components();
  if (a.component < 0 || a.component > k)
    throw UsageError("--component: must lie in 1.." + std::to_string(k) + " (0 samples the mixture)");
  std::optional<int> comp;
  if (a.component > 0) comp = a.component - 1;
  Rng rng = make_rng(a.seed);
  std::vector<int> used;
  const Matrix rows = ck.normalization.denormalize(generate(ck.model, a.n, comp, rng, &used));
  for (int& c : used) ++c;
  emit_output(a.out, csv_text(rows, a.tag ? &used : nullptr), out);
  return kExitOk;
}

// ---- cluster-eval -------------------------------------------------------------

struct ClusterArgs {
  std::string model;
  DataArgs data;
  Index samples_s = 500;
  std::uint64_t seed = 1;
  std::string out;
  std::string metrics;
};

int cmd_cluster_eval(const ClusterArgs& a, std::ostream& out) {
  require_positive("--samples-s", a.samples_s);
  const ModelCheckpoint ck = load_model(a.model);
  const Dataset d = a.data.load();
  const Matrix x = in_model_units(d, ck);
  const std::vector<int> assign = cluster_rows(ck.model, x, a.samples_s, a.seed);

  std::vector<int> sizes(static_cast<std::size_t>(ck.model.num_components()), 0);
  for (int c : assign) ++sizes[static_cast<std::size_t>(c)];
  MetricsLine line("cluster");
  line.add("rows", static_cast<long long>(d.size())).add("sizes", sizes);
  if (d.labels) line.add("purity", clustering_purity(assign, *d.labels));

  if (!a.out.empty()) {
    std::ostringstream ss;
    for (int c : assign) ss << c + 1 << '\n';
    write_file_atomic(a.out, ss.str());
  }
  emit_output(a.metrics, line.str() + "\n", out);
  return kExitOk;
}

// ---- parzen-eval ------------------------------------------------------------

struct ParzenArgs {
  std::string model;
  std::string test;
  std::string validation;
  bool labels = false;
  Index n = 10000;
  double sigma = 0.0;
  std::vector<double> sigma_grid;
  std::uint64_t seed = 1;
  std::string audit_train;
  std::string audit_space = "auto";
  std::string audit_out;
  std::string metrics;
};

int cmd_parzen_eval(const ParzenArgs& a, std::ostream& out) {
  require_positive("--n", a.n);
  if ((a.sigma > 0) == !a.sigma_grid.empty()) throw UsageError("give exactly one of --sigma or --sigma-grid");
  if (!(a.sigma >= 0)) throw UsageError("--sigma: must be > 0");
  for (double s : a.sigma_grid) require_positive("--sigma-grid", s);
  if (!a.sigma_grid.empty() && a.validation.empty()) throw UsageError("--sigma-grid needs --validation");
  if (a.audit_space != "auto" && a.audit_space != "code" && a.audit_space != "data")
    throw UsageError("--audit-space: expected auto, code or data");
  if (!a.audit_out.empty() && a.audit_train.empty()) throw UsageError("--audit-out needs --audit-train");

  const ModelCheckpoint ck = load_model(a.model);
  const Matrix test = in_model_units(load_csv(a.test, a.labels), ck);
  Rng rng = make_rng(a.seed);
  const Matrix gen = generate(ck.model, a.n, std::nullopt, rng);

  double sigma = a.sigma;
  if (sigma <= 0) {
    const Matrix val = in_model_units(load_csv(a.validation, a.labels), ck);
    sigma = select_parzen_sigma(gen, val, a.sigma_grid);
  }
  const ParzenEstimate est = parzen_log_likelihood(gen, test, sigma);
  std::string text = (MetricsLine("parzen")
                          .add("samples", static_cast<long long>(a.n))
                          .add("test_rows", static_cast<long long>(test.rows()))
                          .add("sigma", est.sigma)
                          .add("mean_ll", est.mean_ll)
                          .add("std_err", est.std_err))
                         .str() +
                     "\n";

  if (!a.audit_train.empty()) {
    const Matrix train = in_model_units(load_csv(a.audit_train, a.labels), ck);
    const bool code = a.audit_space == "code" || (a.audit_space == "auto" && ck.model.autoencoder.has_value());
    if (code && !ck.model.autoencoder) throw UsageError("--audit-space code: model has no autoencoder");
    const std::vector<Neighbor> nn = code ? nearest_neighbor_audit(encode(*ck.model.autoencoder, gen),
                                                                   encode(*ck.model.autoencoder, train))
                                          : nearest_neighbor_audit(gen, train);
    double total = 0.0;
    std::ostringstream ss;
    for (const Neighbor& nb : nn) {
      total += nb.distance;
      ss << nb.index << ',' << format_double(nb.distance) << '\n';
    }
    text += MetricsLine("audit")
                .add("space", std::string(code ? "code" : "data"))
                .add("mean_distance", total / static_cast<double>(nn.size()))
                .str() +
            "\n";
    if (!a.audit_out.empty()) write_file_atomic(a.audit_out, ss.str());
  }
  emit_output(a.metrics, text, out);
  return kExitOk;
}

// ---- grid -------------------------------------------------------------------

struct GridArgs {
  std::string model;
  Index resolution = 100;
  Index samples_s = 500;
  std::vector<double> bounds{0.0, 1.0, 0.0, 1.0};
  std::uint64_t seed = 1;
  std::string out;
};

int cmd_grid(const GridArgs& a, std::ostream& out) {
  if (a.resolution < 2) throw UsageError("--resolution: must be >= 2");
  require_positive("--samples-s", a.samples_s);
  if (a.bounds.size() != 4) throw UsageError("--bounds: expected x_min,x_max,y_min,y_max");
  const GridBounds b{a.bounds[0], a.bounds[1], a.bounds[2], a.bounds[3]};
  if (!(b.x_max > b.x_min && b.y_max > b.y_min)) throw UsageError("--bounds: empty box");
  const ModelCheckpoint ck = load_model(a.model);
  Rng rng = make_rng(a.seed);
  std::ostringstream ss;
  export_grid(ss, ck.model, b, a.resolution, a.samples_s, rng);
  emit_output(a.out, ss.str(), out);
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Mixture of generator networks trained with an MMD cost"};
  app.name("mixnet");
  app.require_subcommand(1);

  GenToyArgs toy;
  CLI::App* gen_toy = app.add_subcommand("gen-toy", "Write a toy 2-D dataset as CSV (x,y,label)");
  gen_toy->add_option("--kind", toy.kind, "two_moon, moon_circle or two_circle")->capture_default_str();
  gen_toy->add_option("--n", toy.n, "number of points")->capture_default_str();
  gen_toy->add_option("--noise", toy.noise, "Gaussian noise standard deviation")->capture_default_str();
  gen_toy->add_option("--seed", toy.seed)->capture_default_str();
  gen_toy->add_option("--out", toy.out, "output CSV (default stdout)");

  TrainArgs tr;
  TrainConfig& tc = tr.cfg.train;
  CLI::App* train = app.add_subcommand("train", "Fit a mixture model and write a checkpoint");
  tr.data.add_to(*train);
  train->add_option("--k", tr.k, "number of networks, or 'auto'")->capture_default_str();
  train->add_option("--k-max", tr.cfg.k_max_auto, "upper bound for --k auto")->capture_default_str();
  train->add_option("--t1", tc.t1, "step 1 epochs")->capture_default_str();
  train->add_option("--t2", tc.t2, "step 2 iterations")->capture_default_str();
  train->add_option("--batch", tc.batch_size, "mini-batch size")->capture_default_str();
  train->add_option("--alpha", tc.alpha, "step 1 learning rate")->capture_default_str();
  train->add_option("--beta", tc.beta, "step 2 learning rate")->capture_default_str();
  train->add_option("--samples-s", tc.samples_s, "generated samples per network for likelihoods")->capture_default_str();
  train->add_option("--threshold", tc.batch_threshold, "minimum batch membership to train on")->capture_default_str();
  train->add_option("--weight-decay", tc.weight_decay)->capture_default_str();
  train->add_option("--latent-dim", tc.latent_dim)->capture_default_str();
  train->add_option("--hidden", tc.hidden, "generator hidden sizes")->delimiter(',')->capture_default_str();
  train->add_option("--patience", tc.saturation_patience, "step 2 iterations without improvement before stopping")
      ->capture_default_str();
  train->add_option("--saturation-tol", tc.saturation_tol, "relative validation improvement that counts")
      ->capture_default_str();
  train->add_option("--sigma", tr.cfg.sigma, "single kernel bandwidth (0: median rule)")->capture_default_str();
  train->add_option("--bandwidths", tr.cfg.bandwidth_multipliers, "multiples of the median pairwise distance")
      ->delimiter(',')
      ->capture_default_str();
  train->add_option("--validation-fraction", tr.cfg.validation_fraction)->capture_default_str();
  train->add_option("--kmeans-max-iter", tr.cfg.kmeans_max_iter)->capture_default_str();
  train->add_option("--ae-code-dim", tr.cfg.ae_code_dim, "autoencoder code size (0: none)")->capture_default_str();
  train->add_option("--ae-epochs", tr.cfg.ae.epochs)->capture_default_str();
  train->add_option("--ae-lr", tr.cfg.ae.learning_rate)->capture_default_str();
  train->add_option("--ae-hidden", tr.cfg.ae.hidden)->delimiter(',');
  train->add_flag("!--cluster-on-data", tr.cfg.cluster_on_codes, "run k-means on data instead of codes");
  train->add_option("--seed", tc.seed)->capture_default_str();
  train->add_option("--model", tr.model, "output checkpoint")->required();
  train->add_option("--metrics", tr.metrics, "metrics file (default stdout)");

  GenerateArgs ge;
  CLI::App* generate_cmd = app.add_subcommand("generate", "Sample from a trained model (original units)");
  generate_cmd->add_option("--model", ge.model)->required();
  generate_cmd->add_option("--n", ge.n)->capture_default_str();
  generate_cmd->add_option("--component", ge.component, "1..K samples one network; 0 the mixture")
      ->capture_default_str();
  generate_cmd->add_flag("--tag", ge.tag, "append the generating component as a last column");
  generate_cmd->add_option("--seed", ge.seed)->capture_default_str();
  generate_cmd->add_option("--out", ge.out, "output CSV (default stdout)");

  ClusterArgs ce;
  CLI::App* cluster = app.add_subcommand("cluster-eval", "Assign rows to networks and report purity");
  cluster->add_option("--model", ce.model)->required();
  ce.data.add_to(*cluster);
  cluster->add_option("--samples-s", ce.samples_s)->capture_default_str();
  cluster->add_option("--seed", ce.seed)->capture_default_str();
  cluster->add_option("--out", ce.out, "write one 1-based cluster id per row");
  cluster->add_option("--metrics", ce.metrics, "metrics file (default stdout)");

  ParzenArgs pe;
  CLI::App* parzen = app.add_subcommand("parzen-eval", "Parzen-window log-likelihood of test rows");
  parzen->add_option("--model", pe.model)->required();
  parzen->add_option("--test", pe.test)->required();
  parzen->add_option("--validation", pe.validation, "rows used to pick sigma from --sigma-grid");
  parzen->add_flag("--labels", pe.labels, "last CSV column is a label (ignored)");
  parzen->add_option("--n", pe.n, "generated samples")->capture_default_str();
  parzen->add_option("--sigma", pe.sigma);
  parzen->add_option("--sigma-grid", pe.sigma_grid)->delimiter(',');
  parzen->add_option("--seed", pe.seed)->capture_default_str();
  parzen->add_option("--audit-train", pe.audit_train, "training rows for the nearest-neighbour audit");
  parzen->add_option("--audit-space", pe.audit_space, "auto, code or data")->capture_default_str();
  parzen->add_option("--audit-out", pe.audit_out, "write index,distance per generated row");
  parzen->add_option("--metrics", pe.metrics, "metrics file (default stdout)");

  GridArgs gr;
  CLI::App* grid = app.add_subcommand("grid", "Membership contour grid for a 2-D model");
  grid->add_option("--model", gr.model)->required();
  grid->add_option("--resolution", gr.resolution)->capture_default_str();
  grid->add_option("--samples-s", gr.samples_s)->capture_default_str();
  grid->add_option("--bounds", gr.bounds, "x_min,x_max,y_min,y_max in generator space")->delimiter(',');
  grid->add_option("--seed", gr.seed)->capture_default_str();
  grid->add_option("--out", gr.out, "output CSV (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    if (*gen_toy) return cmd_gen_toy(toy, out);
    if (*train) return cmd_train(tr, out);
    if (*generate_cmd) return cmd_generate(ge, out);
    if (*cluster) return cmd_cluster_eval(ce, out);
    if (*parzen) return cmd_parzen_eval(pe, out);
    if (*grid) return cmd_grid(gr, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitUsage;
}

}  // namespace mixnet
