#pragma once

// Executable optimal-stopping quantities over answer-posterior paths: tail
// variation, confidence margin, the certified stop rule TV_t <= c·γ_t, and the
// brute-force earliest safe stop.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "cotstop/canonical.hpp"
#include "cotstop/errors.hpp"
#include "cotstop/metrics.hpp"
#include "cotstop/rng.hpp"
#include "cotstop/trace.hpp"

namespace cotstop {

struct PosteriorPath {
  std::vector<std::vector<double>> steps;  // p_1 .. p_ℓ, each on the simplex

  std::size_t length() const noexcept { return steps.size(); }
  const std::vector<double>& at(std::size_t t) const { return steps.at(t - 1); }  // 1-based

  void validate() const {
    for (std::size_t k = 0; k < steps.size(); ++k) {
      double sum = 0.0;
      for (double p : steps[k]) {
        if (!(p >= 0.0)) throw ValidationError("posterior", "negative entry at t=" + std::to_string(k + 1));
        sum += p;
      }
      if (std::abs(sum - 1.0) > 1e-9) throw ValidationError("posterior", "does not sum to 1 at t=" + std::to_string(k + 1));
    }
  }
};

struct CertificateConfig {
  double c = 0.5;
  void validate() const {
    if (!(c > 0)) throw ValidationError("c", "certificate scalar must be > 0");
  }
};

enum class DriftProfile { converging, oscillating, late_flip, random_walk };

inline DriftProfile drift_profile_from_string(std::string_view s) {
  if (s == "converging") return DriftProfile::converging;
  if (s == "oscillating") return DriftProfile::oscillating;
  if (s == "late-flip" || s == "late_flip") return DriftProfile::late_flip;
  if (s == "random-walk" || s == "random_walk") return DriftProfile::random_walk;
  throw ValidationError("drift_profile", "unknown profile \"" + std::string(s) + "\"");
}

namespace detail {

inline std::vector<double> dirichlet(rng::Stream& g, std::size_t k, double concentration) {
  std::vector<double> v(k);
  double sum = 0.0;
  for (auto& x : v) {
    x = g.gamma(concentration);
    sum += x;
  }
  if (sum <= 0.0) {
    std::fill(v.begin(), v.end(), 1.0 / static_cast<double>(k));
    return v;
  }
  for (auto& x : v) x /= sum;
  return v;
}

inline std::vector<double> mix(const std::vector<double>& a, const std::vector<double>& b, double w) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = (1.0 - w) * a[i] + w * b[i];
  return out;
}

inline void renormalize(std::vector<double>& p) {
  double sum = 0.0;
  for (double& x : p) {
    x = std::max(x, 0.0);
    sum += x;
  }
  for (double& x : p) x /= sum;
}

/// One step of the Dirichlet walk: move a fraction `eta` toward a draw
/// centred on the current point.
inline std::vector<double> walk_step(rng::Stream& g, const std::vector<double>& p, double eta, double kappa) {
  std::vector<double> target(p.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    target[i] = g.gamma(kappa * p[i] + 0.05);
    sum += target[i];
  }
  for (auto& x : target) x /= sum;
  auto next = mix(p, target, eta);
  renormalize(next);
  return next;
}

}  // namespace detail

/// Deterministic synthetic posterior path for a given seed.
inline PosteriorPath simulate_posterior_path(std::uint64_t seed, std::size_t n_buckets, std::size_t length,
                                             DriftProfile profile) {
  if (n_buckets < 2) throw ValidationError("n_buckets", "must be >= 2");
  if (length < 1) throw ValidationError("length", "must be >= 1");
  rng::Stream g(seed, 0x5eed);
  PosteriorPath path;
  path.steps.reserve(length);
  const auto start = detail::dirichlet(g, n_buckets, 1.0);
  switch (profile) {
    case DriftProfile::converging: {
      // p_k = target + β^k (p_0 - target): step sizes shrink geometrically.
      const auto target = detail::dirichlet(g, n_buckets, 0.3);
      const double beta = g.uniform(0.6, 0.95);
      double w = 1.0;
      for (std::size_t k = 0; k < length; ++k) {
        auto p = detail::mix(target, start, w);
        detail::renormalize(p);
        path.steps.push_back(std::move(p));
        w *= beta;
      }
      break;
    }
    case DriftProfile::oscillating: {
      const auto other = detail::dirichlet(g, n_buckets, 0.5);
      const double amplitude = g.uniform(0.2, 0.9);
      for (std::size_t k = 0; k < length; ++k) {
        const double swing = 0.5 + 0.5 * amplitude * ((k % 2) ? 1.0 : -1.0) * g.uniform(0.5, 1.0);
        auto p = detail::mix(start, other, swing);
        detail::renormalize(p);
        path.steps.push_back(std::move(p));
      }
      break;
    }
    case DriftProfile::late_flip: {
      const auto first = detail::dirichlet(g, n_buckets, 0.3);
      const auto second = detail::dirichlet(g, n_buckets, 0.3);
      const std::size_t flip_at = length / 2 + static_cast<std::size_t>(g.uniform_int(0, static_cast<std::int64_t>(length - length / 2) - 1));
      auto p = start;
      for (std::size_t k = 0; k < length; ++k) {
        const auto& target = k < flip_at ? first : second;
        p = detail::mix(p, target, k < flip_at ? 0.2 : 0.35);
        p = detail::walk_step(g, p, 0.02, 200.0);
        path.steps.push_back(p);
      }
      break;
    }
    case DriftProfile::random_walk: {
      const double eta = g.uniform(0.02, 0.4);
      const double kappa = g.uniform(5.0, 200.0);
      auto p = start;
      for (std::size_t k = 0; k < length; ++k) {
        path.steps.push_back(p);
        p = detail::walk_step(g, p, eta, kappa);
      }
      break;
    }
  }
  return path;
}

inline double l1_distance(std::span<const double> a, std::span<const double> b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d += std::abs(a[i] - b[i]);
  return d;
}

/// TV_t = Σ_{k=t}^{ℓ-1} ||p_{k+1} - p_k||₁ on the realized path (1-based t).
inline double tail_variation(const PosteriorPath& path, std::size_t t) {
  if (t < 1 || t > path.length()) throw ValidationError("t", "must lie in [1, path length]");
  double tv = 0.0;
  for (std::size_t k = t; k < path.length(); ++k) tv += l1_distance(path.at(k + 1), path.at(k));
  return tv;
}

/// All TV_t in one backward pass; entry t-1 holds TV_t.
inline std::vector<double> tail_variations(const PosteriorPath& path) {
  std::vector<double> tv(path.length(), 0.0);
  for (std::size_t k = path.length(); k-- > 1;) tv[k - 1] = tv[k] + l1_distance(path.steps[k], path.steps[k - 1]);
  return tv;
}

struct Margin {
  int argmax = 0;
  double gamma = 0.0;
};

/// Argmax with lowest-index tie-break and the top-1 minus top-2 gap.
inline Margin margin(std::span<const double> p) {
  Margin m;
  for (std::size_t i = 1; i < p.size(); ++i)
    if (p[i] > p[static_cast<std::size_t>(m.argmax)]) m.argmax = static_cast<int>(i);
  double second = -1.0;
  for (std::size_t i = 0; i < p.size(); ++i)
    if (static_cast<int>(i) != m.argmax) second = std::max(second, p[i]);
  m.gamma = p.size() < 2 ? 0.0 : p[static_cast<std::size_t>(m.argmax)] - second;
  return m;
}

/// τ† = first t with γ_t > 0 and TV_t <= c·γ_t (1-based), nullopt if none.
inline std::optional<std::size_t> certified_stop(const PosteriorPath& path, const CertificateConfig& cfg = {}) {
  cfg.validate();
  const auto tv = tail_variations(path);
  for (std::size_t t = 1; t <= path.length(); ++t) {
    const auto m = margin(path.at(t));
    if (m.gamma > 0.0 && tv[t - 1] <= cfg.c * m.gamma) return t;
  }
  return std::nullopt;
}

/// τ* = min t with forced_answers[t] == final (1-based). The last entry must
/// equal final, since A_ℓ^ES is the final answer by definition.
inline std::size_t earliest_safe_stop(std::span<const AnswerId> forced_answers, const AnswerId& final_answer) {
  if (forced_answers.empty()) throw ValidationError("forced_answers", "must be non-empty");
  if (!(forced_answers.back() == final_answer))
    throw ValidationError("forced_answers", "inconsistent trace: last forced answer differs from the final answer");
  for (std::size_t t = 0; t < forced_answers.size(); ++t)
    if (forced_answers[t] == final_answer) return t + 1;
  return forced_answers.size();
}

/// τ* over a trace's probes, reported as the probe's token index.
inline int earliest_safe_stop(const TraceRecord& trace) {
  std::vector<AnswerId> answers;
  answers.reserve(trace.probes.size());
  for (const auto& p : trace.probes) answers.push_back(p.forced_answer);
  const auto index = earliest_safe_stop(answers, trace.final_answer);
  return trace.probes[index - 1].t;
}

/// Monte-Carlo estimate of E[Σ_{k≥t} ||p_{k+1}-p_k||₁ | p_t] under the
/// random-walk dynamics, re-simulating `samples` suffixes of `remaining`
/// steps. Each branch has its own seed; the mean is order independent.
inline double monte_carlo_tail_variation(std::span<const double> p_t, std::size_t remaining, double eta, double kappa,
                                         std::size_t samples, std::uint64_t seed) {
  if (samples == 0) throw ValidationError("samples", "must be >= 1");
  std::vector<double> totals(samples, 0.0);
  for (std::size_t s = 0; s < samples; ++s) {
    rng::Stream g(seed, s);
    std::vector<double> p(p_t.begin(), p_t.end());
    for (std::size_t k = 0; k < remaining; ++k) {
      auto next = detail::walk_step(g, p, eta, kappa);
      totals[s] += l1_distance(next, p);
      p = std::move(next);
    }
  }
  return mean(totals);
}

/// Pearson correlation between the windowed curvature proxy Σ|S|+Σ|H| (on
/// L_t = log max p_t) and the realized TV_t, pooled over all paths and steps.
inline double curvature_proxy_correlation(const std::vector<PosteriorPath>& paths, std::size_t window = 5) {
  std::vector<double> proxy, tv_all;
  for (const auto& path : paths) {
    const auto tv = tail_variations(path);
    std::vector<double> L(path.length());
    for (std::size_t t = 0; t < path.length(); ++t)
      L[t] = std::log(std::max(*std::max_element(path.steps[t].begin(), path.steps[t].end()), 1e-12));
    for (std::size_t t = 0; t < path.length(); ++t) {
      double acc = 0.0;
      for (std::size_t k = (t + 1 >= window ? t + 1 - window : 0); k <= t; ++k) {
        const double s = k >= 1 ? L[k] - L[k - 1] : 0.0;
        const double s_prev = k >= 2 ? L[k - 1] - L[k - 2] : 0.0;
        const double h = k >= 2 ? s - s_prev : 0.0;
        acc += std::abs(s) + std::abs(h);
      }
      proxy.push_back(acc);
      tv_all.push_back(tv[t]);
    }
  }
  return pearson(proxy, tv_all);
}

}  // namespace cotstop
