#pragma once

// Instantaneous bucket evidence and the cumulative answer path.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "cotstop/canonical.hpp"
#include "cotstop/trace.hpp"

namespace cotstop {

/// log inst_p is floored here so cumulative evidence stays finite.
inline constexpr double kProbabilityFloor = 1e-12;

struct InstantEvidence {
  std::vector<double> scores;  // inst_s: LSE per bucket, -inf when empty
  std::vector<double> probs;   // inst_p: softmax over Ω
  friend bool operator==(const InstantEvidence&, const InstantEvidence&) = default;
};

inline double log_sum_exp(std::span<const double> xs) {
  double hi = -std::numeric_limits<double>::infinity();
  for (double x : xs) hi = std::max(hi, x);
  if (!std::isfinite(hi)) return hi;
  double acc = 0.0;
  for (double x : xs) acc += std::exp(x - hi);
  return hi + std::log(acc);
}

/// nullopt means "no evidence this step": every bucket is empty.
inline std::optional<InstantEvidence> instantaneous_scores(const std::vector<std::vector<double>>& bucketed) {
  InstantEvidence ev;
  ev.scores.reserve(bucketed.size());
  for (const auto& b : bucketed) ev.scores.push_back(log_sum_exp(b));
  const double norm = log_sum_exp(ev.scores);
  if (!std::isfinite(norm)) return std::nullopt;
  ev.probs.reserve(ev.scores.size());
  for (double s : ev.scores) ev.probs.push_back(std::isfinite(s) ? std::exp(s - norm) : 0.0);
  return ev;
}

struct PathState {
  std::vector<double> cumulative;  // C_ω(t)
  int winner = 0;
  double margin = 0.0;  // Δ_t
  int run_len = 0;      // trailing constant-winner run over evidence steps
  int flips = 0;
  bool changed_prev = false;
  int step_count = 0;     // t
  int evidence_steps = 0;  // steps that carried bucket evidence

  PathState() = default;
  explicit PathState(std::size_t n_buckets) : cumulative(n_buckets, 0.0) {}

  friend bool operator==(const PathState&, const PathState&) = default;
};

namespace detail {

inline int argmax_lowest(std::span<const double> v) {
  int best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
  return best;
}

inline double top_gap(std::span<const double> v, int winner) {
  if (v.size() < 2) return 0.0;
  double runner_up = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < v.size(); ++i)
    if (static_cast<int>(i) != winner) runner_up = std::max(runner_up, v[i]);
  return v[static_cast<std::size_t>(winner)] - runner_up;
}

}  // namespace detail

/// Folds one step of instantaneous evidence into the path.
inline PathState update_path(PathState state, const InstantEvidence& inst) {
  if (state.cumulative.empty()) state.cumulative.assign(inst.probs.size(), 0.0);
  for (std::size_t i = 0; i < state.cumulative.size(); ++i)
    state.cumulative[i] += std::log(std::max(inst.probs[i], kProbabilityFloor));

  const int previous = state.winner;
  state.winner = detail::argmax_lowest(state.cumulative);
  state.margin = detail::top_gap(state.cumulative, state.winner);
  if (state.evidence_steps == 0) {
    state.run_len = 1;
    state.changed_prev = false;
  } else {
    state.changed_prev = state.winner != previous;
    if (state.changed_prev) {
      ++state.flips;
      state.run_len = 1;
    } else {
      ++state.run_len;
    }
  }
  ++state.evidence_steps;
  ++state.step_count;
  return state;
}

/// A step without bucket evidence holds inst_p, C and the stability counters;
/// only t advances.
inline PathState skip_step(PathState state) {
  ++state.step_count;
  return state;
}

/// Incremental replay of a step stream into a PathState.
class EvidenceTracker {
 public:
  explicit EvidenceTracker(const AnswerSet& omega) : omega_(&omega), state_(omega.size()) {}

  void observe(const StepRecord& step) {
    auto inst = instantaneous_scores(bucket_topk(step, *omega_));
    if (inst) {
      state_ = update_path(std::move(state_), *inst);
      last_ = std::move(inst);
    } else {
      state_ = skip_step(std::move(state_));
    }
  }

  const PathState& state() const noexcept { return state_; }
  /// Most recent inst_p (carried forward over evidence-free steps).
  const std::optional<InstantEvidence>& last_evidence() const noexcept { return last_; }

 private:
  const AnswerSet* omega_;
  PathState state_;
  std::optional<InstantEvidence> last_;
};

}  // namespace cotstop
