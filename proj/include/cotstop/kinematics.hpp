#pragma once

// Early-stop confidence trajectory (L^ES) kinematics and answer-span token
// statistics.

#include <algorithm>
#include <array>
#include <cmath>
#include <deque>
#include <numeric>

#include "cotstop/errors.hpp"
#include "cotstop/trace.hpp"

namespace cotstop {

/// L^ES for one probe: sum of span log-probs, or avg × length when the span
/// was not exported.
inline double es_confidence(const ProbeRecord& probe) {
  if (probe.answer_span_logprobs) {
    const auto& span = *probe.answer_span_logprobs;
    return std::accumulate(span.begin(), span.end(), 0.0);
  }
  if (!probe.avg_logprob || !probe.answer_len)
    throw ValidationError("probe.answer_span_logprobs", "absent span and no fallback fields");
  return *probe.avg_logprob * static_cast<double>(*probe.answer_len);
}

struct Kinematics {
  double slope = 0.0;        // S_es
  double second_diff = 0.0;  // H_es
  friend bool operator==(const Kinematics&, const Kinematics&) = default;
};

struct QuadFit {
  double a = 0.0, b = 0.0, c = 0.0;
  friend bool operator==(const QuadFit&, const QuadFit&) = default;
};

struct TrajectoryPoint {
  int t = 0;
  double value = 0.0;
};

class EsTrajectory {
 public:
  explicit EsTrajectory(int window = 5, int horizon = 3) : window_(window), horizon_(horizon) {
    if (window < 3) throw ValidationError("window", "quadratic window must be >= 3");
    if (horizon < 2) throw ValidationError("horizon", "horizon must be >= 2");
  }

  void push(int t, double value) {
    if (!history_.empty() && t <= history_.back().t)
      throw ValidationError("trajectory.t", "must be strictly increasing");
    history_.push_back({t, value});
    const auto keep = static_cast<std::size_t>(std::max({window_, horizon_, 3}));
    while (history_.size() > keep) history_.pop_front();
  }

  int window() const noexcept { return window_; }
  int horizon() const noexcept { return horizon_; }
  std::size_t size() const noexcept { return history_.size(); }
  bool empty() const noexcept { return history_.empty(); }
  const std::deque<TrajectoryPoint>& points() const noexcept { return history_; }

 private:
  int window_;
  int horizon_;
  std::deque<TrajectoryPoint> history_;
};

/// Differences over consecutive trajectory entries; zero where the past
/// terms are absent.
inline Kinematics slope_curvature(const EsTrajectory& traj) {
  const auto& h = traj.points();
  const std::size_t n = h.size();
  Kinematics k;
  if (n >= 2) k.slope = h[n - 1].value - h[n - 2].value;
  if (n >= 3) k.second_diff = k.slope - (h[n - 2].value - h[n - 3].value);
  return k;
}

/// Least-squares L ≈ aτ² + bτ + c over the last min(W, n) points with τ
/// re-indexed from 0 at the window start. Fewer than 3 points → (0, 0, last).
inline QuadFit quad_fit(const EsTrajectory& traj) {
  const auto& h = traj.points();
  const std::size_t n = h.size();
  if (n == 0) return {};
  const std::size_t m = std::min<std::size_t>(n, static_cast<std::size_t>(traj.window()));
  if (m < 3) return {0.0, 0.0, h.back().value};

  // Normal equations on the basis (τ², τ, 1).
  std::array<double, 5> s{};  // Σ τ^k, k = 0..4
  std::array<double, 3> r{};  // Σ τ^k L, k = 0..2
  for (std::size_t i = 0; i < m; ++i) {
    const double tau = static_cast<double>(i);
    const double y = h[n - m + i].value;
    double p = 1.0;
    for (int k = 0; k <= 4; ++k) {
      s[static_cast<std::size_t>(k)] += p;
      if (k <= 2) r[static_cast<std::size_t>(k)] += p * y;
      p *= tau;
    }
  }
  std::array<std::array<double, 4>, 3> A = {{{s[4], s[3], s[2], r[2]},
                                             {s[3], s[2], s[1], r[1]},
                                             {s[2], s[1], s[0], r[0]}}};
  for (std::size_t col = 0; col < 3; ++col) {
    std::size_t pivot = col;
    for (std::size_t row = col + 1; row < 3; ++row)
      if (std::abs(A[row][col]) > std::abs(A[pivot][col])) pivot = row;
    std::swap(A[col], A[pivot]);
    for (std::size_t row = 0; row < 3; ++row) {
      if (row == col) continue;
      const double f = A[row][col] / A[col][col];
      for (std::size_t k = col; k < 4; ++k) A[row][k] -= f * A[col][k];
    }
  }
  return {A[0][3] / A[0][0], A[1][3] / A[1][1], A[2][3] / A[2][2]};
}

struct TokenStats {
  double mean = 0.0;      // μ_t
  double variance = 0.0;  // σ²_t, population
  double neg_ppl = 0.0;   // -μ_t
  int ans_len = 0;        // n_t
  friend bool operator==(const TokenStats&, const TokenStats&) = default;
};

inline TokenStats token_stats(const ProbeRecord& probe) {
  TokenStats st;
  if (probe.answer_span_logprobs) {
    const auto& span = *probe.answer_span_logprobs;
    if (span.empty()) throw ValidationError("probe.answer_span_logprobs", "present but empty");
    const double n = static_cast<double>(span.size());
    st.mean = std::accumulate(span.begin(), span.end(), 0.0) / n;
    double ss = 0.0;
    for (double x : span) ss += (x - st.mean) * (x - st.mean);
    st.variance = ss / n;
    st.ans_len = static_cast<int>(span.size());
  } else {
    if (!probe.avg_logprob || !probe.answer_len)
      throw ValidationError("probe.answer_span_logprobs", "absent span and no fallback fields");
    st.mean = *probe.avg_logprob;
    st.variance = 0.0;
    st.ans_len = *probe.answer_len;
  }
  st.neg_ppl = -st.mean;
  return st;
}

}  // namespace cotstop
