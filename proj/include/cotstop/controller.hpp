#pragma once

// Stopping policy over a trace: stride scan (lite) and proposal
// verification, plus corpus-level curves, reports and the decision log.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "cotstop/errors.hpp"
#include "cotstop/features.hpp"
#include "cotstop/format.hpp"
#include "cotstop/metrics.hpp"
#include "cotstop/parallel.hpp"
#include "cotstop/stop_model.hpp"
#include "cotstop/trace.hpp"

namespace cotstop {

struct StopPolicy {
  double threshold = 0.9;  // τ
  int patience = 3;
  int stride = 20;              // lite mode only
  std::optional<int> budget;    // max reasoning tokens
  int proposal_window = 1;      // steps evaluated from each proposal on

  void validate() const {
    if (!std::isfinite(threshold) || threshold < 0) throw ValidationError("threshold", "must be finite and >= 0");
    if (patience < 1) throw ValidationError("patience", "must be >= 1");
    if (stride < 1) throw ValidationError("stride", "must be >= 1");
    if (budget && *budget < 0) throw ValidationError("budget", "must be >= 0");
    if (proposal_window < 1) throw ValidationError("proposal_window", "must be >= 1");
  }
};

enum class StopMode { lite, proposal };

inline std::string_view to_string(StopMode m) { return m == StopMode::lite ? "lite" : "proposal"; }

inline StopMode stop_mode_from_string(std::string_view s) {
  if (s == "lite" || s == "scan") return StopMode::lite;
  if (s == "proposal") return StopMode::proposal;
  throw ValidationError("mode", "unknown mode \"" + std::string(s) + "\" (expected lite or proposal)");
}

struct StopDecision {
  std::string trace_id;
  StopMode mode = StopMode::lite;
  bool stopped = false;
  std::optional<int> stop_step;
  AnswerId answer;
  std::optional<double> rho_at_stop;
  int evaluations = 0;
  int length = 0;  // reasoning tokens consumed
  bool budget_exceeded = false;
  int probe_tokens = 0;              // cost of the probes that were scored
  std::vector<int> skipped_points;  // evaluation points with no usable probe

  friend bool operator==(const StopDecision&, const StopDecision&) = default;
};

// ---------------------------------------------------------------------------
// Scorers
// ---------------------------------------------------------------------------

/// ρ for one evaluation. `phi` is built from the steps up to `probe.t` and
/// the probes scored so far.
class Scorer {
 public:
  virtual ~Scorer() = default;
  virtual double score(const FeatureVector& phi, const ProbeRecord& probe, const TraceRecord& trace) const = 0;
  virtual FeatureConfig feature_config() const { return {}; }
};

class ModelScorer final : public Scorer {
 public:
  ModelScorer(const StopModel& model, FeatureConfig cfg = {}) : model_(&model), cfg_(cfg) {
    const auto expected = feature_names(cfg);
    if (!model.feature_schema.empty() && model.feature_schema != expected) {
      std::string got;
      for (const auto& n : model.feature_schema) got += (got.empty() ? "" : ",") + n;
      throw ModelError("model schema mismatch: model has [" + got + "], feature config produces " +
                       std::to_string(expected.size()) + " features");
    }
  }

  double score(const FeatureVector& phi, const ProbeRecord&, const TraceRecord&) const override {
    return model_->predict(phi);
  }
  FeatureConfig feature_config() const override { return cfg_; }

 private:
  const StopModel* model_;
  FeatureConfig cfg_;
};

/// ρ = 1 when the probe answer equals the trace's final answer, else 0.
class LabelOracle final : public Scorer {
 public:
  double score(const FeatureVector&, const ProbeRecord& probe, const TraceRecord& trace) const override {
    return probe.forced_answer == trace.final_answer ? 1.0 : 0.0;
  }
};

/// Scores a fixed ρ per probe step; anything else gets `fallback`.
class TableScorer final : public Scorer {
 public:
  explicit TableScorer(std::vector<std::pair<int, double>> rho, double fallback = 0.0)
      : rho_(std::move(rho)), fallback_(fallback) {}
  double score(const FeatureVector&, const ProbeRecord& probe, const TraceRecord&) const override {
    for (const auto& [t, r] : rho_)
      if (t == probe.t) return r;
    return fallback_;
  }

 private:
  std::vector<std::pair<int, double>> rho_;
  double fallback_;
};

// ---------------------------------------------------------------------------
// Decisions
// ---------------------------------------------------------------------------

namespace detail {

/// Reasoning horizon under the budget, plus whether the budget cut it.
inline std::pair<int, bool> horizon(const TraceRecord& trace, const StopPolicy& policy) {
  if (policy.budget && trace.cot_length > *policy.budget) return {*policy.budget, true};
  return {trace.cot_length, trace.budget_exhausted};
}

/// Run-to-the-end decision: final answer, or the last probe inside the
/// budget when the budget cut the trace short.
inline void finish_unstopped(StopDecision& d, const TraceRecord& trace, int limit, bool budget_hit) {
  d.stopped = false;
  d.stop_step.reset();
  d.rho_at_stop.reset();
  d.length = limit;
  d.budget_exceeded = budget_hit;
  if (!budget_hit || limit >= trace.cot_length) {
    d.answer = trace.final_answer;
    return;
  }
  d.answer = AnswerId::unknown();
  for (const auto& p : trace.probes)
    if (p.t <= limit) d.answer = p.forced_answer;
}

class Evaluator {
 public:
  Evaluator(const TraceRecord& trace, const Scorer& scorer)
      : trace_(trace), scorer_(scorer), tracker_(trace.answer_set, scorer.feature_config()) {}

  double evaluate(const ProbeRecord& probe) {
    cursor_ = tracker_.advance(trace_.steps, cursor_, probe.t);
    const auto phi = tracker_.observe_probe(probe);
    return scorer_.score(phi, probe, trace_);
  }

 private:
  const TraceRecord& trace_;
  const Scorer& scorer_;
  FeatureTracker tracker_;
  std::size_t cursor_ = 0;
};

}  // namespace detail

/// Stride scan: evaluate at t = stride, 2·stride, … using the nearest unused
/// probe within stride/2 (ties to the earlier one); stop once ρ ≥ τ holds on
/// `patience` consecutive evaluated points. Points without a probe are
/// skipped and neither extend nor break the run.
inline StopDecision scan_decide(const TraceRecord& trace, const Scorer& scorer, const StopPolicy& policy) {
  policy.validate();
  StopDecision d;
  d.trace_id = trace.trace_id;
  d.mode = StopMode::lite;
  const auto [limit, budget_hit] = detail::horizon(trace, policy);
  const auto ts = probe_steps(trace);
  std::vector<int> usable;  // probe steps within the horizon
  for (int t : ts)
    if (t <= limit) usable.push_back(t);
  std::vector<bool> used(usable.size(), false);

  detail::Evaluator eval(trace, scorer);
  int streak = 0;
  int last_probe_t = 0;
  for (int point = policy.stride; point <= limit; point += policy.stride) {
    int pick = -1;
    double best = 0.0;
    for (std::size_t i = 0; i < usable.size(); ++i) {
      if (used[i] || usable[i] <= last_probe_t) continue;
      const double dist = std::abs(static_cast<double>(usable[i] - point));
      if (dist * 2 > policy.stride) continue;
      if (pick < 0 || dist < best) {
        pick = static_cast<int>(i);
        best = dist;
      }
    }
    if (pick < 0) {
      d.skipped_points.push_back(point);
      continue;
    }
    used[static_cast<std::size_t>(pick)] = true;
    const ProbeRecord& probe = *trace.probe_at(usable[static_cast<std::size_t>(pick)]);
    last_probe_t = probe.t;
    const double rho = eval.evaluate(probe);
    ++d.evaluations;
    d.probe_tokens += probe.cost_tokens;
    streak = rho >= policy.threshold ? streak + 1 : 0;
    if (streak >= policy.patience) {
      d.stopped = true;
      d.stop_step = probe.t;
      d.answer = probe.forced_answer;
      d.rho_at_stop = rho;
      d.length = probe.t;
      return d;
    }
  }
  detail::finish_unstopped(d, trace, limit, budget_hit);
  return d;
}

/// Proposal verification: at each proposal p (within the horizon) evaluate
/// the probes at p, p+1, …, p+window-1 and accept once min(patience, window)
/// consecutive evaluations reach τ. Never evaluates between proposals.
inline StopDecision proposal_decide(const TraceRecord& trace, const Scorer& scorer, const StopPolicy& policy) {
  policy.validate();
  StopDecision d;
  d.trace_id = trace.trace_id;
  d.mode = StopMode::proposal;
  const auto [limit, budget_hit] = detail::horizon(trace, policy);
  const int needed = std::min(policy.patience, policy.proposal_window);

  detail::Evaluator eval(trace, scorer);
  int evaluated_through = 0;  // features are causal: never revisit a step
  for (int proposal : trace.stop_proposals) {
    if (proposal > limit) break;
    int streak = 0;
    for (int t = proposal; t < proposal + policy.proposal_window && t <= limit; ++t) {
      if (t <= evaluated_through) continue;
      const ProbeRecord* probe = trace.probe_at(t);
      if (!probe) {
        d.skipped_points.push_back(t);
        streak = 0;
        continue;
      }
      evaluated_through = t;
      const double rho = eval.evaluate(*probe);
      ++d.evaluations;
      d.probe_tokens += probe->cost_tokens;
      streak = rho >= policy.threshold ? streak + 1 : 0;
      if (streak >= needed) {
        d.stopped = true;
        d.stop_step = t;
        d.answer = probe->forced_answer;
        d.rho_at_stop = rho;
        d.length = t;
        return d;
      }
    }
  }
  detail::finish_unstopped(d, trace, limit, budget_hit);
  return d;
}

inline StopDecision decide(const TraceRecord& trace, const Scorer& scorer, const StopPolicy& policy, StopMode mode) {
  return mode == StopMode::lite ? scan_decide(trace, scorer, policy) : proposal_decide(trace, scorer, policy);
}

inline std::vector<StopDecision> decide_all(const std::vector<TraceRecord>& corpus, const Scorer& scorer,
                                            const StopPolicy& policy, StopMode mode, unsigned threads = 0) {
  return parallel_map<StopDecision>(
      corpus.size(), [&](std::size_t i) { return decide(corpus[i], scorer, policy, mode); }, threads);
}

// ---------------------------------------------------------------------------
// Corpus summaries
// ---------------------------------------------------------------------------

struct CurvePoint {
  double fraction = 0.0;
  int n = 0;  // traces with a probe to snap to
  int consistent = 0;
  double consistency = 0.0;
  int n_gold = 0;
  int accurate = 0;
  std::optional<double> accuracy;
  double mean_snap_distance = 0.0;  // |probe.t - f·ℓ| averaged, in tokens
  friend bool operator==(const CurvePoint&, const CurvePoint&) = default;
};

inline std::vector<double> default_curve_grid() {
  std::vector<double> grid;
  for (int k = 1; k <= 10; ++k) grid.push_back(k / 10.0);
  return grid;
}

/// For each fraction f, the share of traces whose probe nearest f·ℓ (ties to
/// the earlier probe) matches the final answer, and the gold answer when known.
inline std::vector<CurvePoint> consistency_curve(const std::vector<TraceRecord>& corpus,
                                                 const std::vector<double>& grid) {
  if (corpus.empty()) throw ValidationError("corpus", "consistency curve needs at least one trace");
  for (double f : grid)
    if (!(f >= 0.0 && f <= 1.0)) throw ValidationError("grid", "fractions must lie in [0,1]");
  std::vector<CurvePoint> out;
  for (double f : grid) {
    CurvePoint pt;
    pt.fraction = f;
    double snap = 0.0;
    for (const auto& tr : corpus) {
      const auto ts = probe_steps(tr);
      const double target = f * tr.cot_length;
      const int idx = nearest_index(ts, target);
      if (idx < 0) continue;
      const auto& probe = tr.probes[static_cast<std::size_t>(idx)];
      ++pt.n;
      snap += std::abs(probe.t - target);
      if (probe.forced_answer == tr.final_answer) ++pt.consistent;
      if (tr.gold_answer) {
        ++pt.n_gold;
        if (probe.forced_answer == *tr.gold_answer) ++pt.accurate;
      }
    }
    if (pt.n > 0) {
      pt.consistency = static_cast<double>(pt.consistent) / pt.n;
      pt.mean_snap_distance = snap / pt.n;
    }
    if (pt.n_gold > 0) pt.accuracy = static_cast<double>(pt.accurate) / pt.n_gold;
    out.push_back(pt);
  }
  return out;
}

inline void write_curve_csv(std::ostream& out, const std::vector<CurvePoint>& curve) {
  out << "fraction,n,consistent,consistency,n_gold,accurate,accuracy,mean_snap_distance\n";
  for (const auto& p : curve) {
    out << format_real(p.fraction) << ',' << p.n << ',' << p.consistent << ',' << format_real(p.consistency) << ','
        << p.n_gold << ',' << p.accurate << ',' << (p.accuracy ? format_real(*p.accuracy) : "") << ','
        << format_real(p.mean_snap_distance) << '\n';
  }
}

struct EvalReport {
  std::size_t n = 0;
  std::size_t n_gold = 0;
  std::optional<double> accuracy;            // decision answer vs gold
  std::optional<double> full_accuracy;       // final answer vs gold
  std::optional<double> relative_accuracy;   // accuracy / full_accuracy
  double mean_length = 0.0;
  double median_length = 0.0;
  double mean_full_length = 0.0;
  double length_ratio = 1.0;  // mean full length / mean stopped length (×)
  double coverage = 0.0;
  double mean_evaluations = 0.0;
  double mean_probe_tokens = 0.0;
};

inline EvalReport eval_report(const std::vector<StopDecision>& decisions, const std::vector<TraceRecord>& corpus) {
  if (decisions.size() != corpus.size())
    throw ValidationError("decisions", "have " + std::to_string(decisions.size()) + " entries for " +
                                           std::to_string(corpus.size()) + " traces");
  EvalReport r;
  r.n = corpus.size();
  if (r.n == 0) return r;
  std::vector<double> lengths;
  double full = 0.0, stopped = 0.0, evals = 0.0, probe_tokens = 0.0;
  std::size_t correct = 0, full_correct = 0, covered = 0;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto& d = decisions[i];
    const auto& tr = corpus[i];
    if (d.trace_id != tr.trace_id)
      throw ValidationError("decisions", "decision " + std::to_string(i) + " is for \"" + d.trace_id +
                                             "\", corpus has \"" + tr.trace_id + "\"");
    lengths.push_back(d.length);
    stopped += d.length;
    full += tr.cot_length;
    evals += d.evaluations;
    probe_tokens += d.probe_tokens;
    covered += d.stopped ? 1 : 0;
    if (tr.gold_answer) {
      ++r.n_gold;
      correct += d.answer == *tr.gold_answer ? 1 : 0;
      full_correct += tr.final_answer == *tr.gold_answer ? 1 : 0;
    }
  }
  const double n = static_cast<double>(r.n);
  if (r.n_gold > 0) {
    r.accuracy = static_cast<double>(correct) / static_cast<double>(r.n_gold);
    r.full_accuracy = static_cast<double>(full_correct) / static_cast<double>(r.n_gold);
    if (*r.full_accuracy > 0) r.relative_accuracy = *r.accuracy / *r.full_accuracy;
  }
  r.mean_length = stopped / n;
  r.median_length = median(lengths);
  r.mean_full_length = full / n;
  r.length_ratio = stopped > 0 ? full / stopped : 1.0;
  r.coverage = static_cast<double>(covered) / n;
  r.mean_evaluations = evals / n;
  r.mean_probe_tokens = probe_tokens / n;
  return r;
}

inline nlohmann::json to_json(const EvalReport& r) {
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  return {{"n", r.n},
          {"n_gold", r.n_gold},
          {"accuracy", opt(r.accuracy)},
          {"full_accuracy", opt(r.full_accuracy)},
          {"relative_accuracy", opt(r.relative_accuracy)},
          {"mean_length", r.mean_length},
          {"median_length", r.median_length},
          {"mean_full_length", r.mean_full_length},
          {"length_ratio", r.length_ratio},
          {"coverage", r.coverage},
          {"mean_evaluations", r.mean_evaluations},
          {"mean_probe_tokens", r.mean_probe_tokens}};
}

struct SweepRow {
  double threshold = 0.0;
  EvalReport report;
};

inline std::vector<double> default_sweep_thresholds() { return {0.99, 0.95, 0.90, 0.85, 0.80}; }

inline std::vector<SweepRow> threshold_sweep(const std::vector<TraceRecord>& corpus, const Scorer& scorer,
                                             StopPolicy policy, const std::vector<double>& thresholds, StopMode mode,
                                             unsigned threads = 0) {
  for (std::size_t i = 0; i < thresholds.size(); ++i) {
    if (!(thresholds[i] > 0 && thresholds[i] <= 1)) throw ValidationError("thresholds", "each τ must lie in (0,1]");
    if (i > 0 && thresholds[i] >= thresholds[i - 1])
      throw ValidationError("thresholds", "must be sorted in strictly descending order");
  }
  std::vector<SweepRow> rows;
  for (double tau : thresholds) {
    policy.threshold = tau;
    rows.push_back({tau, eval_report(decide_all(corpus, scorer, policy, mode, threads), corpus)});
  }
  return rows;
}

inline void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows) {
  out << "tau,n,accuracy,full_accuracy,mean_length,median_length,length_ratio,coverage,mean_evaluations\n";
  auto opt = [](const std::optional<double>& v) { return v ? format_real(*v) : std::string(); };
  for (const auto& row : rows) {
    const auto& r = row.report;
    out << format_real(row.threshold) << ',' << r.n << ',' << opt(r.accuracy) << ',' << opt(r.full_accuracy) << ','
        << format_real(r.mean_length) << ',' << format_real(r.median_length) << ',' << format_real(r.length_ratio)
        << ',' << format_real(r.coverage) << ',' << format_real(r.mean_evaluations) << '\n';
  }
}

// ---------------------------------------------------------------------------
// Decision log
// ---------------------------------------------------------------------------

inline nlohmann::json to_json(const StopDecision& d) {
  using nlohmann::json;
  json j = {{"trace_id", d.trace_id},
            {"mode", std::string(to_string(d.mode))},
            {"stopped", d.stopped},
            {"stop_step", d.stop_step ? json(*d.stop_step) : json(nullptr)},
            {"rho", d.rho_at_stop ? json(*d.rho_at_stop) : json(nullptr)},
            {"answer", d.answer.raw},
            {"evals", d.evaluations},
            {"length", d.length}};
  if (d.budget_exceeded) j["budget_exceeded"] = true;
  if (!d.skipped_points.empty()) j["skipped"] = d.skipped_points;
  if (d.probe_tokens) j["probe_tokens"] = d.probe_tokens;
  return j;
}

/// Appends one JSON line per decision.
inline void append_decision_log(std::ostream& out, const std::vector<StopDecision>& decisions) {
  for (const auto& d : decisions) out << to_json(d).dump() << '\n';
}

}  // namespace cotstop
