#pragma once

#include "ssdml/data.hpp"
#include "ssdml/gradcheck.hpp"
#include "ssdml/trainer.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

namespace ssdml::cli {

namespace detail {

// Either stdout ("-" or empty) or a file.
class Output {
 public:
  explicit Output(const std::string& path) {
    if (path.empty() || path == "-") return;
    file_ = std::make_unique<std::ofstream>(path);
    if (!*file_) throw DataError("cannot write " + path);
  }
  std::ostream& stream() { return file_ ? *file_ : std::cout; }

 private:
  std::unique_ptr<std::ofstream> file_;
};

struct DataArgs {
  std::string data;
  std::string label_column = "label";
  std::string images_idx;
  std::string labels_idx;

  void add_to(CLI::App& app) {
    app.add_option("--data", data, "CSV dataset (header row, optional label column)");
    app.add_option("--label-column", label_column, "Name of the label column in --data");
    app.add_option("--images-idx", images_idx, "IDX image file (use with --labels-idx)");
    app.add_option("--labels-idx", labels_idx, "IDX label file (use with --images-idx)");
  }

  Dataset load() const {
    if (!data.empty()) {
      if (!images_idx.empty() || !labels_idx.empty())
        throw ConfigError("give either --data or --images-idx/--labels-idx, not both");
      return load_csv(data, label_column);
    }
    if (images_idx.empty() || labels_idx.empty())
      throw ConfigError("a dataset is required: --data, or both --images-idx and --labels-idx");
    return parse_idx(images_idx, labels_idx);
  }
};

struct GraphArgs {
  int k = 10;
  double gamma = 0.99;
  int partition_size = 9000;
  std::uint64_t seed = 0;
  std::string solver = "auto";
  unsigned threads = 1;

  void add_to(CLI::App& app) {
    app.add_option("--k", k, "Neighbors per node in the kNN graph (even)");
    app.add_option("--gamma", gamma, "Propagation weight in [0, 1)");
    app.add_option("--partition-size", partition_size, "Unlabeled rows per partition (0 = all)");
    app.add_option("--seed", seed, "Random seed");
    app.add_option("--solver", solver, "Propagation solver: auto, direct or iterative")
        ->check(CLI::IsMember({"auto", "direct", "iterative"}));
    app.add_option("--threads", threads, "Worker threads for the kNN search")->check(CLI::PositiveNumber);
  }
};

struct PartitionGraph {
  Dataset part;
  NeighborGraph graph;
  AffinityMatrix affinity;
};

inline PartitionGraph partition_graph(const Dataset& ds, const GraphArgs& ga) {
  const Index n_unl = ds.unlabeled_indices().size();
  const Index n_p = ga.partition_size == 0 ? n_unl : std::min<Index>(n_unl, static_cast<Index>(ga.partition_size));
  const auto partition = sample_partition(ds, n_p, ga.seed);
  PartitionGraph pg;
  pg.part = ds.subset(partition.nodes());
  pg.graph = build_knn(normalize_rows(pg.part.features), static_cast<Index>(ga.k), ga.threads);
  PropagationOptions opt;
  opt.gamma = ga.gamma;
  opt.solver = ga.solver == "direct" ? Solver::Direct : ga.solver == "iterative" ? Solver::Iterative : Solver::Auto;
  pg.affinity = propagate(pg.graph, seed_affinity(pg.part.labels), opt);
  return pg;
}

inline std::vector<int> parse_ks(const std::string& s) {
  std::vector<int> ks;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    const auto v = ssdml::detail::parse_nonneg_int(ssdml::detail::trim(tok));
    if (!v || *v < 1) throw ConfigError("--recall-ks: bad value '" + tok + "'");
    ks.push_back(static_cast<int>(*v));
  }
  if (ks.empty()) throw ConfigError("--recall-ks: empty list");
  return ks;
}

}  // namespace detail

/// Entry point shared by the executable and the tests. Returns 0 on
/// success, 1 on usage errors, 2 on data or numeric failures.
inline int run(int argc, const char* const* argv, std::ostream& err = std::cerr) {
  CLI::App app{"Semi-supervised metric learning with propagated affinities and Stiefel optimization", "ssdml"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();

  // blobs
  auto* blobs = app.add_subcommand("blobs", "Write a synthetic blob dataset as CSV");
  int b_classes = 10, b_per_class = 200, b_signal = 5, b_noise = 45, b_labeled = -1;
  double b_sep = 6.0, b_sigma = 4.0;
  std::uint64_t b_seed = 0;
  std::string b_out = "-";
  blobs->add_option("--classes", b_classes, "Number of classes");
  blobs->add_option("--per-class", b_per_class, "Rows per class");
  blobs->add_option("--signal-dims", b_signal, "Class-informative dimensions");
  blobs->add_option("--noise-dims", b_noise, "Nuisance dimensions");
  blobs->add_option("--sep", b_sep, "Distance of class means from the origin");
  blobs->add_option("--noise-sigma", b_sigma, "Standard deviation of nuisance dimensions");
  blobs->add_option("--labeled-per-class", b_labeled, "Keep this many labels per class (-1 = all)");
  blobs->add_option("--seed", b_seed, "Random seed");
  blobs->add_option("--out", b_out, "Output CSV path ('-' = stdout)");

  // train
  auto* train_cmd = app.add_subcommand("train", "Train a metric; writes the model and emits history as JSON lines");
  detail::DataArgs t_data;
  t_data.add_to(*train_cmd);
  TrainConfig tc;
  std::string t_method = "ours", t_model = "model.ssdml", t_out = "-";
  train_cmd->add_option("--method", t_method, "ours, seraph or lrml")->check(CLI::IsMember({"ours", "seraph", "lrml"}));
  train_cmd->add_option("--gamma", tc.gamma, "Propagation weight in [0, 1)");
  train_cmd->add_option("--k", tc.k, "Neighbors per node in the kNN graph (even)");
  train_cmd->add_option("--alpha-deg", tc.alpha_deg, "Angle of the angular loss in degrees");
  train_cmd->add_option("--embed-dim", tc.embed_dim, "Columns of L (0 = half the representation dim)");
  train_cmd->add_option("--encoder-dim", tc.encoder_dim, "Encoder output dim (0 = input dim)");
  train_cmd->add_option("--lr", tc.lr, "Encoder SGD learning rate");
  train_cmd->add_option("--batch-triplets", tc.batch_triplets, "Constraints per mini-batch");
  train_cmd->add_option("--partition-size", tc.partition_size, "Unlabeled rows per partition (0 = all)");
  train_cmd->add_option("--epochs-per-partition", tc.epochs_per_partition, "Epochs per sampled partition");
  train_cmd->add_option("--max-epochs", tc.max_epochs, "Total epochs");
  train_cmd->add_option("--inner-l-iters", tc.inner_L_iters, "Metric optimizer iterations per mini-batch");
  train_cmd->add_option("--validation-fraction", tc.validation_fraction, "Labeled fraction per class held out");
  train_cmd->add_option("--seed", tc.seed, "Random seed");
  train_cmd->add_flag("--orth,!--no-orth", tc.orth, "Keep L orthonormal (Stiefel constraint; default on)");
  train_cmd->add_flag("--encoder,!--no-encoder", tc.encoder, "Train an affine + l2 encoder before L (default on)");
  train_cmd->add_option("--seraph-eta", tc.seraph.eta, "SERAPH distance threshold");
  train_cmd->add_option("--seraph-mu", tc.seraph.mu, "SERAPH unlabeled weight");
  train_cmd->add_option("--seraph-lambda", tc.seraph.lambda, "SERAPH trace weight");
  train_cmd->add_option("--lrml-gamma-s", tc.lrml.gamma_s, "LRML similar-pair weight");
  train_cmd->add_option("--lrml-gamma-d", tc.lrml.gamma_d, "LRML dissimilar-pair weight");
  train_cmd->add_option("--threads", tc.threads, "Worker threads for the kNN search")->check(CLI::PositiveNumber);
  train_cmd->add_option("--model", t_model, "Output model path");
  train_cmd->add_option("--out", t_out, "History JSON lines path ('-' = stdout)");

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a model on a labeled dataset; prints one JSON line");
  detail::DataArgs e_data;
  e_data.add_to(*eval_cmd);
  std::string e_model, e_ks = "1,2,4,8", e_out = "-";
  std::uint64_t e_seed = 0;
  int e_restarts = 10;
  eval_cmd->add_option("--model", e_model, "Model path")->required();
  eval_cmd->add_option("--recall-ks", e_ks, "Comma-separated K values for Recall@K");
  eval_cmd->add_option("--seed", e_seed, "Seed for k-means");
  eval_cmd->add_option("--kmeans-restarts", e_restarts, "k-means restarts (best inertia kept)");
  eval_cmd->add_option("--out", e_out, "Output path ('-' = stdout)");

  // propagate / mine
  auto* prop_cmd = app.add_subcommand("propagate", "Dump the propagated, symmetrized affinity matrix as CSV");
  detail::DataArgs p_data;
  p_data.add_to(*prop_cmd);
  detail::GraphArgs p_graph;
  p_graph.add_to(*prop_cmd);
  std::string p_out = "-";
  prop_cmd->add_option("--out", p_out, "Output CSV path ('-' = stdout)");

  auto* mine_cmd = app.add_subcommand("mine", "Dump mined triplets as CSV rows anchor,positive,negative (dataset row ids)");
  detail::DataArgs m_data;
  m_data.add_to(*mine_cmd);
  detail::GraphArgs m_graph;
  m_graph.add_to(*mine_cmd);
  std::string m_out = "-";
  mine_cmd->add_option("--out", m_out, "Output CSV path ('-' = stdout)");

  // gradcheck
  auto* gc_cmd = app.add_subcommand("gradcheck", "Finite-difference checks of every analytic gradient");
  std::uint64_t g_seed = 0;
  int g_instances = 100;
  double g_tol = 1e-4;
  gc_cmd->add_option("--seed", g_seed, "Random seed");
  gc_cmd->add_option("--instances", g_instances, "Random instances per suite")->check(CLI::PositiveNumber);
  gc_cmd->add_option("--tol", g_tol, "Maximum accepted relative error");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, std::cout, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, std::cout, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, std::cout, err);
    return 1;
  }

  try {
    if (*blobs) {
      Dataset ds = make_blobs(b_classes, b_per_class, b_signal, b_noise, b_sep, b_sigma, b_seed);
      if (b_labeled >= 0) ds = mask_labels(ds, b_labeled, mix_seed(b_seed, 7));
      detail::Output out(b_out);
      write_csv(out.stream(), ds);
    } else if (*train_cmd) {
      tc.method = parse_method(t_method);
      const Dataset ds = t_data.load();
      detail::Output out(t_out);
      TrainObserver obs;
      obs.on_epoch = [&](const HistoryRecord& h) { out.stream() << to_json(h).dump() << std::endl; };
      obs.on_warning = [&](const std::string& msg) { err << "warning: " << msg << '\n'; };
      const Model model = train(ds, tc, obs);
      save_model(t_model, model);
    } else if (*eval_cmd) {
      const Dataset ds = e_data.load();
      const Model model = load_model(e_model);
      const auto ks = detail::parse_ks(e_ks);
      const auto rep = evaluate_checkpoint(model, ds, ks, e_seed, e_restarts);
      detail::Output out(e_out);
      out.stream() << to_json(rep).dump() << '\n';
    } else if (*prop_cmd) {
      const auto pg = detail::partition_graph(p_data.load(), p_graph);
      detail::Output out(p_out);
      const Matrix& w = pg.affinity.values;
      for (Eigen::Index i = 0; i < w.rows(); ++i) {
        for (Eigen::Index j = 0; j < w.cols(); ++j) out.stream() << (j ? "," : "") << ssdml::detail::format_double(w(i, j));
        out.stream() << '\n';
      }
    } else if (*mine_cmd) {
      const auto pg = detail::partition_graph(m_data.load(), m_graph);
      const auto triplets = mine_triplets(pg.affinity.values, pg.graph);
      detail::Output out(m_out);
      out.stream() << "anchor,positive,negative\n";
      for (const auto& t : triplets)
        out.stream() << pg.part.ids[t.anchor] << ',' << pg.part.ids[t.positive] << ',' << pg.part.ids[t.negative] << '\n';
    } else if (*gc_cmd) {
      const auto worst = gradcheck::run_all(g_seed, g_instances);
      nlohmann::ordered_json j;
      bool ok = true;
      for (const auto& [name, v] : worst) {
        j[name] = v;
        ok = ok && v <= g_tol;
      }
      j["pass"] = ok;
      std::cout << j.dump() << '\n';
      return ok ? 0 : 2;
    }
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}

}  // namespace ssdml::cli
