#pragma once

// Gradient-boosted regression trees with a logistic link.
//
// Training is histogram based (quantile bins per feature), grows each tree
// leaf-wise up to num_leaves, and fits Newton steps on the binary
// cross-entropy. Row and feature subsampling draw from a counter-based hash of
// (seed, round, index), so a given dataset and config always produce the same
// trees, byte for byte.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "cotstop/errors.hpp"
#include "cotstop/features.hpp"
#include "cotstop/format.hpp"
#include "cotstop/metrics.hpp"
#include "cotstop/rng.hpp"

namespace cotstop {

struct TrainConfig {
  int n_estimators = 400;
  int num_leaves = 63;
  double learning_rate = 0.07;
  double subsample = 0.9;
  double colsample = 0.9;
  int min_samples_leaf = 20;
  double lambda_l2 = 0.0;
  double min_sum_hessian = 1e-3;
  int max_bins = 255;
  std::uint64_t seed = 0;
  std::string corpus_id;

  void validate() const {
    if (n_estimators < 0) throw ValidationError("n_estimators", "must be >= 0");
    if (num_leaves < 2) throw ValidationError("num_leaves", "must be >= 2");
    if (!(learning_rate > 0)) throw ValidationError("learning_rate", "must be > 0");
    if (!(subsample > 0 && subsample <= 1)) throw ValidationError("subsample", "must lie in (0,1]");
    if (!(colsample > 0 && colsample <= 1)) throw ValidationError("colsample", "must lie in (0,1]");
    if (min_samples_leaf < 1) throw ValidationError("min_samples_leaf", "must be >= 1");
    if (lambda_l2 < 0) throw ValidationError("lambda_l2", "must be >= 0");
    if (max_bins < 2 || max_bins > 256) throw ValidationError("max_bins", "must lie in [2,256]");
  }

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;  // x <= threshold goes left
  int left = -1;
  int right = -1;
  double value = 0.0;  // leaf output (before learning-rate shrinkage)

  bool is_leaf() const noexcept { return feature < 0; }
  friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

struct RegressionTree {
  std::vector<TreeNode> nodes;

  double predict(std::span<const double> x) const {
    int i = 0;
    while (!nodes[static_cast<std::size_t>(i)].is_leaf()) {
      const auto& n = nodes[static_cast<std::size_t>(i)];
      i = x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right;
    }
    return nodes[static_cast<std::size_t>(i)].value;
  }

  std::size_t leaf_count() const {
    return static_cast<std::size_t>(std::count_if(nodes.begin(), nodes.end(), [](const TreeNode& n) { return n.is_leaf(); }));
  }

  friend bool operator==(const RegressionTree&, const RegressionTree&) = default;
};

struct ModelMetadata {
  TrainConfig config;
  std::size_t n_rows = 0;
  std::size_t n_positive = 0;
  friend bool operator==(const ModelMetadata&, const ModelMetadata&) = default;
};

inline constexpr std::string_view kModelFormat = "cotstop-stop-model";
inline constexpr int kModelVersion = 1;

class StopModel {
 public:
  std::vector<RegressionTree> trees;
  double learning_rate = 0.1;
  double base_score = 0.0;  // log-odds prior
  std::vector<std::string> feature_schema;
  ModelMetadata metadata;

  double raw_score(std::span<const double> x) const {
    double sum = 0.0;
    for (const auto& tree : trees) sum += tree.predict(x);
    return base_score + learning_rate * sum;
  }

  /// ρ = sigmoid(base + lr·Σ tree outputs), kept strictly inside (0, 1).
  double predict(std::span<const double> x) const {
    if (!feature_schema.empty() && x.size() != feature_schema.size())
      throw ModelError("feature vector has " + std::to_string(x.size()) + " entries, model schema expects " +
                       std::to_string(feature_schema.size()));
    const double p = sigmoid(raw_score(x));
    return std::clamp(p, std::nextafter(0.0, 1.0), std::nextafter(1.0, 0.0));
  }

  double predict(const FeatureVector& phi) const { return predict(std::span<const double>(phi.values)); }

  /// Number of splits per schema feature.
  std::vector<int> split_counts() const {
    std::vector<int> counts(feature_schema.size(), 0);
    for (const auto& tree : trees)
      for (const auto& n : tree.nodes)
        if (!n.is_leaf() && static_cast<std::size_t>(n.feature) < counts.size()) ++counts[static_cast<std::size_t>(n.feature)];
    return counts;
  }

  std::string save() const;
  static StopModel load(std::string_view bytes);

  friend bool operator==(const StopModel&, const StopModel&) = default;
};

// ---------------------------------------------------------------------------
// Training data
// ---------------------------------------------------------------------------

/// Dense row-major design matrix with binary labels.
struct Dataset {
  std::vector<std::string> feature_names;
  std::vector<double> values;  // n_rows × n_features
  std::vector<int> labels;

  std::size_t n_rows() const noexcept { return labels.size(); }
  std::size_t n_features() const noexcept { return feature_names.size(); }
  std::span<const double> row(std::size_t i) const {
    return std::span<const double>(values).subspan(i * n_features(), n_features());
  }

  void add_row(std::span<const double> x, int label) {
    if (x.size() != n_features())
      throw ValidationError("features", "row " + std::to_string(n_rows()) + " has " + std::to_string(x.size()) +
                                            " features, schema has " + std::to_string(n_features()));
    values.insert(values.end(), x.begin(), x.end());
    labels.push_back(label);
  }

  static Dataset from_rows(const std::vector<LabeledStep>& rows, std::vector<std::string> names) {
    Dataset d;
    d.feature_names = std::move(names);
    d.values.reserve(rows.size() * d.n_features());
    d.labels.reserve(rows.size());
    for (const auto& r : rows) d.add_row(r.features.values, r.label);
    return d;
  }
};

struct TrainLog {
  std::vector<double> loss_per_round;  // training-set log loss after each round
};

namespace gbdt {

struct Bins {
  std::vector<std::vector<double>> thresholds;  // per feature, ascending
  std::vector<std::uint8_t> codes;              // column-major n_features × n_rows
};

inline double midpoint(double a, double b) {
  double m = a + (b - a) / 2.0;
  if (!(m < b)) m = a;
  return m;
}

inline Bins build_bins(const Dataset& data, int max_bins) {
  const std::size_t n = data.n_rows();
  const std::size_t nf = data.n_features();
  Bins bins;
  bins.thresholds.resize(nf);
  bins.codes.resize(n * nf);
  std::vector<double> column(n);
  for (std::size_t f = 0; f < nf; ++f) {
    for (std::size_t i = 0; i < n; ++i) column[i] = data.values[i * nf + f];
    std::vector<double> sorted = column;
    std::sort(sorted.begin(), sorted.end());
    std::vector<double> distinct;
    std::vector<std::size_t> counts;
    for (double v : sorted) {
      if (distinct.empty() || v != distinct.back()) {
        distinct.push_back(v);
        counts.push_back(1);
      } else {
        ++counts.back();
      }
    }
    auto& th = bins.thresholds[f];
    if (distinct.size() <= static_cast<std::size_t>(max_bins)) {
      for (std::size_t k = 0; k + 1 < distinct.size(); ++k) th.push_back(midpoint(distinct[k], distinct[k + 1]));
    } else {
      // Equal-frequency cuts on the distinct values.
      std::size_t cumulative = 0;
      std::size_t next_cut = 1;
      const auto B = static_cast<std::size_t>(max_bins);
      for (std::size_t k = 0; k + 1 < distinct.size() && next_cut < B; ++k) {
        cumulative += counts[k];
        if (cumulative * B >= next_cut * n) {
          th.push_back(midpoint(distinct[k], distinct[k + 1]));
          while (next_cut < B && cumulative * B >= next_cut * n) ++next_cut;
        }
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      const auto code = std::lower_bound(th.begin(), th.end(), column[i]) - th.begin();
      bins.codes[f * n + i] = static_cast<std::uint8_t>(code);
    }
  }
  return bins;
}

struct HistBin {
  double g = 0.0;
  double h = 0.0;
  std::uint32_t n = 0;
};

struct Split {
  double gain = 0.0;
  int feature = -1;
  int bin = -1;
  double g_left = 0.0, h_left = 0.0;
  std::uint32_t n_left = 0;
  bool valid() const noexcept { return feature >= 0; }
};

struct Leaf {
  int node = 0;
  std::size_t begin = 0, end = 0;  // slice of the row-index buffer
  double g = 0.0, h = 0.0;
  std::vector<HistBin> hist;  // n_features × 256
  Split best;
};

class TreeBuilder {
 public:
  TreeBuilder(const Bins& bins, std::size_t n_rows, std::size_t n_features, const TrainConfig& cfg)
      : bins_(bins), n_rows_(n_rows), n_features_(n_features), cfg_(cfg) {}

  /// Split bin per node of the last built tree (-1 for leaves).
  const std::vector<int>& node_bins() const noexcept { return node_bins_; }

  RegressionTree build(std::vector<std::uint32_t>& rows, std::span<const double> grad, std::span<const double> hess,
                       const std::vector<int>& features) {
    node_bins_.assign(1, -1);
    grad_ = grad;
    hess_ = hess;
    features_ = &features;
    RegressionTree tree;
    tree.nodes.emplace_back();
    std::vector<Leaf> leaves;
    Leaf root;
    root.node = 0;
    root.begin = 0;
    root.end = rows.size();
    for (auto r : rows) {
      root.g += grad[r];
      root.h += hess[r];
    }
    root.hist = histogram(rows, root.begin, root.end);
    root.best = best_split(root);
    leaves.push_back(std::move(root));

    while (static_cast<int>(leaves.size()) < cfg_.num_leaves) {
      int pick = -1;
      for (std::size_t i = 0; i < leaves.size(); ++i) {
        if (!leaves[i].best.valid()) continue;
        if (pick < 0 || leaves[i].best.gain > leaves[static_cast<std::size_t>(pick)].best.gain) pick = static_cast<int>(i);
      }
      if (pick < 0) break;
      split_leaf(tree, leaves, static_cast<std::size_t>(pick), rows);
    }
    for (const auto& leaf : leaves)
      tree.nodes[static_cast<std::size_t>(leaf.node)].value = -leaf.g / (leaf.h + cfg_.lambda_l2);
    return tree;
  }

 private:
  static constexpr std::size_t kBinSlots = 256;

  std::vector<HistBin> histogram(const std::vector<std::uint32_t>& rows, std::size_t begin, std::size_t end) const {
    std::vector<HistBin> hist(n_features_ * kBinSlots);
    for (int f : *features_) {
      const std::uint8_t* codes = bins_.codes.data() + static_cast<std::size_t>(f) * n_rows_;
      HistBin* hf = hist.data() + static_cast<std::size_t>(f) * kBinSlots;
      for (std::size_t k = begin; k < end; ++k) {
        const auto r = rows[k];
        HistBin& b = hf[codes[r]];
        b.g += grad_[r];
        b.h += hess_[r];
        ++b.n;
      }
    }
    return hist;
  }

  double score(double g, double h) const { return g * g / (h + cfg_.lambda_l2); }

  Split best_split(const Leaf& leaf) const {
    Split best;
    const auto count = static_cast<std::uint32_t>(leaf.end - leaf.begin);
    if (count < 2 * static_cast<std::uint32_t>(cfg_.min_samples_leaf)) return best;
    const double parent = score(leaf.g, leaf.h);
    for (int f : *features_) {
      const auto n_thresholds = bins_.thresholds[static_cast<std::size_t>(f)].size();
      const HistBin* hf = leaf.hist.data() + static_cast<std::size_t>(f) * kBinSlots;
      double gl = 0.0, hl = 0.0;
      std::uint32_t nl = 0;
      for (std::size_t b = 0; b < n_thresholds; ++b) {
        gl += hf[b].g;
        hl += hf[b].h;
        nl += hf[b].n;
        const std::uint32_t nr = count - nl;
        if (nl < static_cast<std::uint32_t>(cfg_.min_samples_leaf)) continue;
        if (nr < static_cast<std::uint32_t>(cfg_.min_samples_leaf)) break;
        const double gr = leaf.g - gl;
        const double hr = leaf.h - hl;
        if (hl < cfg_.min_sum_hessian || hr < cfg_.min_sum_hessian) continue;
        const double gain = score(gl, hl) + score(gr, hr) - parent;
        if (gain > 1e-12 && gain > best.gain) {
          best = {gain, f, static_cast<int>(b), gl, hl, nl};
        }
      }
    }
    return best;
  }

  void split_leaf(RegressionTree& tree, std::vector<Leaf>& leaves, std::size_t index, std::vector<std::uint32_t>& rows) {
    Leaf parent = std::move(leaves[index]);
    const Split s = parent.best;
    const std::uint8_t* codes = bins_.codes.data() + static_cast<std::size_t>(s.feature) * n_rows_;
    auto mid = std::stable_partition(rows.begin() + static_cast<std::ptrdiff_t>(parent.begin),
                                     rows.begin() + static_cast<std::ptrdiff_t>(parent.end),
                                     [&](std::uint32_t r) { return codes[r] <= s.bin; });
    const std::size_t split_at = static_cast<std::size_t>(mid - rows.begin());

    const int left_node = static_cast<int>(tree.nodes.size());
    const int right_node = left_node + 1;
    auto& node = tree.nodes[static_cast<std::size_t>(parent.node)];
    node.feature = s.feature;
    node.threshold = bins_.thresholds[static_cast<std::size_t>(s.feature)][static_cast<std::size_t>(s.bin)];
    node.left = left_node;
    node.right = right_node;
    tree.nodes.emplace_back();
    tree.nodes.emplace_back();
    node_bins_[static_cast<std::size_t>(parent.node)] = s.bin;
    node_bins_.push_back(-1);
    node_bins_.push_back(-1);

    Leaf left, right;
    left.node = left_node;
    left.begin = parent.begin;
    left.end = split_at;
    left.g = s.g_left;
    left.h = s.h_left;
    right.node = right_node;
    right.begin = split_at;
    right.end = parent.end;
    right.g = parent.g - s.g_left;
    right.h = parent.h - s.h_left;

    // Histogram the smaller child; the sibling is parent minus child.
    Leaf& small = (left.end - left.begin) <= (right.end - right.begin) ? left : right;
    Leaf& large = (&small == &left) ? right : left;
    small.hist = histogram(rows, small.begin, small.end);
    large.hist = std::move(parent.hist);
    for (int f : *features_) {
      const std::size_t base = static_cast<std::size_t>(f) * kBinSlots;
      for (std::size_t b = 0; b < kBinSlots; ++b) {
        large.hist[base + b].g -= small.hist[base + b].g;
        large.hist[base + b].h -= small.hist[base + b].h;
        large.hist[base + b].n -= small.hist[base + b].n;
      }
    }
    left.best = best_split(left);
    right.best = best_split(right);
    leaves[index] = std::move(left);
    leaves.push_back(std::move(right));
  }

  const Bins& bins_;
  std::size_t n_rows_;
  std::size_t n_features_;
  const TrainConfig& cfg_;
  std::span<const double> grad_;
  std::span<const double> hess_;
  const std::vector<int>* features_ = nullptr;
  std::vector<int> node_bins_;
};

// Routing by bin code is equivalent to x <= threshold because thresholds are
// the bin edges themselves.
inline double tree_predict_binned(const RegressionTree& tree, const std::vector<int>& node_bins, const Bins& bins,
                                  std::size_t n_rows, std::size_t row) {
  int i = 0;
  while (!tree.nodes[static_cast<std::size_t>(i)].is_leaf()) {
    const auto& n = tree.nodes[static_cast<std::size_t>(i)];
    const auto f = static_cast<std::size_t>(n.feature);
    i = bins.codes[f * n_rows + row] <= node_bins[static_cast<std::size_t>(i)] ? n.left : n.right;
  }
  return tree.nodes[static_cast<std::size_t>(i)].value;
}

}  // namespace gbdt

inline StopModel train(const Dataset& data, const TrainConfig& cfg, TrainLog* log = nullptr) {
  cfg.validate();
  const std::size_t n = data.n_rows();
  const std::size_t nf = data.n_features();
  if (nf == 0) throw ValidationError("features", "dataset has no features");
  if (data.values.size() != n * nf) throw ValidationError("features", "design matrix size does not match rows × features");
  std::size_t positives = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const int y = data.labels[i];
    if (y != 0 && y != 1) throw ValidationError("label", "row " + std::to_string(i) + " has label outside {0,1}");
    positives += static_cast<std::size_t>(y);
    for (std::size_t f = 0; f < nf; ++f)
      if (!std::isfinite(data.values[i * nf + f]))
        throw ValidationError(data.feature_names[f], "row " + std::to_string(i) + " is NaN or infinite");
  }
  if (positives == 0 || positives == n) throw ValidationError("label", "degenerate labels: dataset has a single class");

  StopModel model;
  model.feature_schema = data.feature_names;
  model.learning_rate = cfg.learning_rate;
  const double prior = static_cast<double>(positives) / static_cast<double>(n);
  model.base_score = std::log(prior / (1.0 - prior));
  model.metadata = {cfg, n, positives};

  const gbdt::Bins bins = gbdt::build_bins(data, cfg.max_bins);
  std::vector<double> raw(n, model.base_score);
  std::vector<double> grad(n), hess(n);
  std::vector<std::uint32_t> rows;
  rows.reserve(n);
  const auto n_selected = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::floor(cfg.colsample * static_cast<double>(nf) + 0.5)));
  gbdt::TreeBuilder builder(bins, n, nf, cfg);

  for (int round = 0; round < cfg.n_estimators; ++round) {
    const auto r = static_cast<std::uint64_t>(round);
    for (std::size_t i = 0; i < n; ++i) {
      const double p = sigmoid(raw[i]);
      grad[i] = p - static_cast<double>(data.labels[i]);
      hess[i] = std::max(p * (1.0 - p), 1e-16);
    }
    rows.clear();
    for (std::size_t i = 0; i < n; ++i) {
      if (cfg.subsample >= 1.0 || rng::to_unit(rng::hash(cfg.seed, 2 * r, i)) < cfg.subsample)
        rows.push_back(static_cast<std::uint32_t>(i));
    }
    if (rows.empty())
      for (std::size_t i = 0; i < n; ++i) rows.push_back(static_cast<std::uint32_t>(i));

    std::vector<int> features(nf);
    std::iota(features.begin(), features.end(), 0);
    if (n_selected < nf) {
      std::vector<std::pair<std::uint64_t, int>> keyed;
      for (int f : features) keyed.emplace_back(rng::hash(cfg.seed, 2 * r + 1, static_cast<std::uint64_t>(f)), f);
      std::sort(keyed.begin(), keyed.end());
      features.clear();
      for (std::size_t k = 0; k < n_selected; ++k) features.push_back(keyed[k].second);
      std::sort(features.begin(), features.end());
    }

    RegressionTree tree = builder.build(rows, grad, hess, features);
    for (std::size_t i = 0; i < n; ++i) raw[i] += cfg.learning_rate * gbdt::tree_predict_binned(tree, builder.node_bins(), bins, n, i);
    model.trees.push_back(std::move(tree));
    if (log) log->loss_per_round.push_back(log_loss(raw, data.labels));
  }
  return model;
}

inline StopModel train(const std::vector<LabeledStep>& rows, const std::vector<std::string>& schema,
                       const TrainConfig& cfg, TrainLog* log = nullptr) {
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t f = 0; f < rows[i].features.size() && f < schema.size(); ++f)
      if (std::isnan(rows[i].features[f]))
        throw ValidationError(schema[f], "row " + std::to_string(i) + " (" + rows[i].trace_id + ", t=" +
                                             std::to_string(rows[i].t) + ") is NaN");
  return train(Dataset::from_rows(rows, schema), cfg, log);
}

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

namespace detail {

inline nlohmann::json config_to_json(const TrainConfig& c) {
  return {{"n_estimators", c.n_estimators},   {"num_leaves", c.num_leaves},
          {"learning_rate", c.learning_rate}, {"subsample", c.subsample},
          {"colsample", c.colsample},         {"min_samples_leaf", c.min_samples_leaf},
          {"lambda_l2", c.lambda_l2},         {"min_sum_hessian", c.min_sum_hessian},
          {"max_bins", c.max_bins},           {"seed", c.seed},
          {"corpus_id", c.corpus_id}};
}

inline TrainConfig config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.n_estimators = j.at("n_estimators").get<int>();
  c.num_leaves = j.at("num_leaves").get<int>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.subsample = j.at("subsample").get<double>();
  c.colsample = j.at("colsample").get<double>();
  c.min_samples_leaf = j.at("min_samples_leaf").get<int>();
  c.lambda_l2 = j.at("lambda_l2").get<double>();
  c.min_sum_hessian = j.at("min_sum_hessian").get<double>();
  c.max_bins = j.at("max_bins").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.corpus_id = j.at("corpus_id").get<std::string>();
  return c;
}

}  // namespace detail

inline std::string StopModel::save() const {
  using nlohmann::json;
  json trees_json = json::array();
  for (const auto& tree : trees) {
    json feature = json::array(), threshold = json::array(), left = json::array(), right = json::array(),
         value = json::array();
    for (const auto& n : tree.nodes) {
      feature.push_back(n.feature);
      threshold.push_back(n.threshold);
      left.push_back(n.left);
      right.push_back(n.right);
      value.push_back(n.value);
    }
    trees_json.push_back(
        {{"feature", feature}, {"threshold", threshold}, {"left", left}, {"right", right}, {"value", value}});
  }
  json payload = {{"schema", feature_schema},
                  {"base_score", base_score},
                  {"learning_rate", learning_rate},
                  {"config", detail::config_to_json(metadata.config)},
                  {"n_rows", metadata.n_rows},
                  {"n_positive", metadata.n_positive},
                  {"trees", trees_json}};
  const std::string body = payload.dump();
  json header = {{"format", kModelFormat},
                 {"version", kModelVersion},
                 {"checksum", hex64(fnv1a64(body))},
                 {"payload_bytes", body.size()}};
  return header.dump() + "\n" + body + "\n";
}

inline StopModel StopModel::load(std::string_view bytes) {
  using nlohmann::json;
  const auto newline = bytes.find('\n');
  if (newline == std::string_view::npos) throw ModelError("model file is truncated: missing header line");
  const std::string_view header_text = bytes.substr(0, newline);
  std::string_view body = bytes.substr(newline + 1);
  if (body.empty() || body.back() != '\n') throw ModelError("model file is truncated: missing payload terminator");
  body.remove_suffix(1);
  json header, payload;
  try {
    header = json::parse(header_text);
  } catch (const json::parse_error& e) {
    throw ModelError(std::string("model header is malformed: ") + e.what());
  }
  try {
    if (!header.is_object() || header.value("format", "") != kModelFormat)
      throw ModelError("not a stop-model file (format tag missing or wrong)");
    const int version = header.at("version").get<int>();
    if (version != kModelVersion)
      throw ModelError("unsupported model version " + std::to_string(version) + " (expected " +
                       std::to_string(kModelVersion) + ")");
    if (header.at("payload_bytes").get<std::size_t>() != body.size())
      throw ModelError("model payload is truncated: length does not match header");
    if (hex64(fnv1a64(body)) != header.at("checksum").get<std::string>())
      throw ModelError("model checksum mismatch: payload is corrupted");
    try {
      payload = json::parse(body);
    } catch (const json::parse_error& e) {
      throw ModelError(std::string("model payload is malformed: ") + e.what());
    }

    StopModel m;
    m.feature_schema = payload.at("schema").get<std::vector<std::string>>();
    m.base_score = payload.at("base_score").get<double>();
    m.learning_rate = payload.at("learning_rate").get<double>();
    m.metadata.config = detail::config_from_json(payload.at("config"));
    m.metadata.n_rows = payload.at("n_rows").get<std::size_t>();
    m.metadata.n_positive = payload.at("n_positive").get<std::size_t>();
    for (const auto& tj : payload.at("trees")) {
      const auto feature = tj.at("feature").get<std::vector<int>>();
      const auto threshold = tj.at("threshold").get<std::vector<double>>();
      const auto left = tj.at("left").get<std::vector<int>>();
      const auto right = tj.at("right").get<std::vector<int>>();
      const auto value = tj.at("value").get<std::vector<double>>();
      const std::size_t count = feature.size();
      if (count == 0 || threshold.size() != count || left.size() != count || right.size() != count ||
          value.size() != count)
        throw ModelError("tree arrays have inconsistent lengths");
      RegressionTree tree;
      for (std::size_t i = 0; i < count; ++i) {
        TreeNode n{feature[i], threshold[i], left[i], right[i], value[i]};
        if (!n.is_leaf()) {
          if (static_cast<std::size_t>(n.feature) >= m.feature_schema.size())
            throw ModelError("split feature index out of schema range");
          const auto self = static_cast<int>(i);
          if (n.left <= self || n.right <= self || n.left >= static_cast<int>(count) ||
              n.right >= static_cast<int>(count))
            throw ModelError("tree child index out of range");
        }
        tree.nodes.push_back(n);
      }
      m.trees.push_back(std::move(tree));
    }
    return m;
  } catch (const json::exception& e) {
    throw ModelError(std::string("model payload is missing or has mistyped fields: ") + e.what());
  }
}

}  // namespace cotstop
