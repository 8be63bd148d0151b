#pragma once

// Stepwise feature vector φ_t and labeled training rows.

#include <algorithm>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "cotstop/evidence.hpp"
#include "cotstop/format.hpp"
#include "cotstop/kinematics.hpp"
#include "cotstop/trace.hpp"

namespace cotstop {

struct FeatureConfig {
  bool include_quad = false;  // append the sliding-window fit (a, b, c)
  int window = 5;             // W
  int horizon = 3;            // K
  friend bool operator==(const FeatureConfig&, const FeatureConfig&) = default;
};

inline std::vector<std::string> feature_names(const FeatureConfig& cfg = {}) {
  std::vector<std::string> names = {"delta",   "run_len",  "flips",   "changed_prev", "s_es",
                                    "h_es",    "mu",       "sigma2",  "neg_ppl",      "ans_len"};
  if (cfg.include_quad) {
    names.push_back("quad_a");
    names.push_back("quad_b");
    names.push_back("quad_c");
  }
  return names;
}

inline std::size_t feature_count(const FeatureConfig& cfg = {}) { return cfg.include_quad ? 13 : 10; }

/// Ordered φ_t. No entry depends on ℓ or on t/ℓ.
struct FeatureVector {
  std::vector<double> values;

  std::size_t size() const noexcept { return values.size(); }
  double operator[](std::size_t i) const { return values[i]; }
  friend bool operator==(const FeatureVector&, const FeatureVector&) = default;
};

inline FeatureVector assemble_features(const PathState& path, const Kinematics& kin, const TokenStats& stats,
                                       const std::optional<QuadFit>& quad = std::nullopt) {
  FeatureVector phi;
  phi.values = {path.margin,
                static_cast<double>(path.run_len),
                static_cast<double>(path.flips),
                path.changed_prev ? 1.0 : 0.0,
                kin.slope,
                kin.second_diff,
                stats.mean,
                stats.variance,
                stats.neg_ppl,
                static_cast<double>(stats.ans_len)};
  if (quad) {
    phi.values.push_back(quad->a);
    phi.values.push_back(quad->b);
    phi.values.push_back(quad->c);
  }
  return phi;
}

/// Online φ_t: feed steps in order, then ask for features at probe points.
class FeatureTracker {
 public:
  FeatureTracker(const AnswerSet& omega, FeatureConfig cfg = {})
      : cfg_(cfg), evidence_(omega), trajectory_(cfg.window, cfg.horizon) {}

  void observe_step(const StepRecord& step) { evidence_.observe(step); }

  /// Feeds every step with t ≤ `until` starting at `cursor`; returns the new cursor.
  std::size_t advance(const std::vector<StepRecord>& steps, std::size_t cursor, int until) {
    while (cursor < steps.size() && steps[cursor].t <= until) observe_step(steps[cursor++]);
    return cursor;
  }

  /// Records the probe's L^ES and returns φ at the probe step.
  FeatureVector observe_probe(const ProbeRecord& probe) {
    trajectory_.push(probe.t, es_confidence(probe));
    std::optional<QuadFit> quad;
    if (cfg_.include_quad) quad = quad_fit(trajectory_);
    return assemble_features(evidence_.state(), slope_curvature(trajectory_), token_stats(probe), quad);
  }

  const PathState& path() const noexcept { return evidence_.state(); }
  const EsTrajectory& trajectory() const noexcept { return trajectory_; }
  const FeatureConfig& config() const noexcept { return cfg_; }

 private:
  FeatureConfig cfg_;
  EvidenceTracker evidence_;
  EsTrajectory trajectory_;
};

struct LabeledStep {
  FeatureVector features;
  int label = 0;
  std::string trace_id;
  int t = 0;
  friend bool operator==(const LabeledStep&, const LabeledStep&) = default;
};

/// One row per probe: replay steps 1..t, label 1 iff the probe answer equals
/// the trace's final answer.
inline std::vector<LabeledStep> label_steps(const TraceRecord& trace, const FeatureConfig& cfg = {}) {
  std::vector<LabeledStep> rows;
  rows.reserve(trace.probes.size());
  FeatureTracker tracker(trace.answer_set, cfg);
  std::size_t cursor = 0;
  for (const auto& probe : trace.probes) {
    cursor = tracker.advance(trace.steps, cursor, probe.t);
    LabeledStep row;
    row.features = tracker.observe_probe(probe);
    row.label = probe.forced_answer == trace.final_answer ? 1 : 0;
    row.trace_id = trace.trace_id;
    row.t = probe.t;
    rows.push_back(std::move(row));
  }
  return rows;
}

/// Labels a corpus; rows sorted by (trace_id, t).
inline std::vector<LabeledStep> label_corpus(const std::vector<TraceRecord>& corpus, const FeatureConfig& cfg = {}) {
  std::vector<LabeledStep> rows;
  for (const auto& tr : corpus) {
    auto part = label_steps(tr, cfg);
    rows.insert(rows.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
  }
  std::stable_sort(rows.begin(), rows.end(), [](const LabeledStep& a, const LabeledStep& b) {
    return a.trace_id != b.trace_id ? a.trace_id < b.trace_id : a.t < b.t;
  });
  return rows;
}

/// Diagnostic: fraction of traces whose labels are non-decreasing in t.
inline double monotone_label_fraction(const std::vector<TraceRecord>& corpus) {
  if (corpus.empty()) return 0.0;
  std::size_t monotone = 0;
  for (const auto& tr : corpus) {
    bool ok = true;
    int prev = 0;
    for (const auto& p : tr.probes) {
      const int y = p.forced_answer == tr.final_answer ? 1 : 0;
      if (y < prev) ok = false;
      prev = y;
    }
    monotone += ok ? 1 : 0;
  }
  return static_cast<double>(monotone) / static_cast<double>(corpus.size());
}

inline void write_dataset_csv(std::ostream& out, const std::vector<LabeledStep>& rows, const FeatureConfig& cfg = {}) {
  out << "trace_id,t,label";
  for (const auto& name : feature_names(cfg)) out << ',' << name;
  out << '\n';
  for (const auto& r : rows) {
    out << csv_field(r.trace_id) << ',' << r.t << ',' << r.label;
    for (double v : r.features.values) out << ',' << format_real(v);
    out << '\n';
  }
}

struct DatasetTable {
  std::vector<std::string> feature_names;
  std::vector<LabeledStep> rows;
};

inline DatasetTable read_dataset_csv(std::istream& in) {
  DatasetTable table;
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw ParseError("empty dataset: missing header", 1);
  ++line_no;
  auto header = parse_csv_row(line, line_no);
  if (header.size() < 4 || header[0] != "trace_id" || header[1] != "t" || header[2] != "label")
    throw ParseError("header must start with trace_id,t,label and name at least one feature", line_no);
  table.feature_names.assign(header.begin() + 3, header.end());
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    auto cells = parse_csv_row(line, line_no);
    if (cells.size() != header.size())
      throw ParseError("expected " + std::to_string(header.size()) + " columns, got " + std::to_string(cells.size()),
                       line_no);
    LabeledStep row;
    row.trace_id = cells[0];
    row.t = static_cast<int>(parse_real(cells[1], line_no));
    const double label = parse_real(cells[2], line_no);
    if (label != 0.0 && label != 1.0) throw ParseError("label must be 0 or 1", line_no);
    row.label = static_cast<int>(label);
    row.features.values.reserve(cells.size() - 3);
    for (std::size_t i = 3; i < cells.size(); ++i) row.features.values.push_back(parse_real(cells[i], line_no));
    table.rows.push_back(std::move(row));
  }
  return table;
}

}  // namespace cotstop
