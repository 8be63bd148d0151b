#pragma once

// Deterministic synthetic trace corpora with a planted convergence step.
//
// Each trace has a convergence step τ (always a probe position). From τ on,
// every probe answer equals the final answer and the step stream favours the
// final answer strongly; before τ a wrong answer leads and probe confidence
// is low. With noise > 0 some pre-convergence probes happen to match the
// final answer, so labels may flip before τ but never after it.

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "cotstop/canonical.hpp"
#include "cotstop/errors.hpp"
#include "cotstop/rng.hpp"
#include "cotstop/trace.hpp"

namespace cotstop {

enum class ProposalRule { none, near_convergence, sentence_ends };

inline ProposalRule proposal_rule_from_string(std::string_view s) {
  if (s == "none") return ProposalRule::none;
  if (s == "near-convergence" || s == "near_convergence") return ProposalRule::near_convergence;
  if (s == "sentence-ends" || s == "sentence_ends") return ProposalRule::sentence_ends;
  throw ValidationError("proposal_rule", "unknown rule \"" + std::string(s) + "\"");
}

struct FixtureSpec {
  std::uint64_t seed = 0;
  int n_traces = 100;
  int min_length = 40;
  int max_length = 200;
  int n_answers = 4;
  int probe_stride = 1;            // probe every k tokens; ℓ is always probed
  double converge_by_half = 0.71;  // exact share of traces with τ at or before the probe nearest ℓ/2
  double noise = 0.0;              // chance a pre-convergence probe matches the final answer
  double gold_accuracy = 0.8;      // share of traces whose final answer is the gold answer
  int sentence_length = 12;        // tokens per sentence
  double evidence_rate = 0.6;      // chance a step carries answer-bucket evidence in its top-k
  double confidence_overlap = 0.0; // chance a probe's span log-probs come from the other regime
  ProposalRule proposals = ProposalRule::none;
  std::string id_prefix = "syn";

  void validate() const {
    if (n_traces < 0) throw ValidationError("n_traces", "must be >= 0");
    if (n_answers < 2 || n_answers > 26) throw ValidationError("n_answers", "must lie in [2, 26]");
    if (probe_stride < 1) throw ValidationError("probe_stride", "must be >= 1");
    if (min_length < 4 * probe_stride) throw ValidationError("min_length", "must be >= 4 * probe_stride");
    if (max_length < min_length) throw ValidationError("max_length", "must be >= min_length");
    if (!(converge_by_half >= 0 && converge_by_half <= 1)) throw ValidationError("converge_by_half", "must lie in [0,1]");
    if (!(noise >= 0 && noise < 1)) throw ValidationError("noise", "must lie in [0,1)");
    if (!(gold_accuracy >= 0 && gold_accuracy <= 1)) throw ValidationError("gold_accuracy", "must lie in [0,1]");
    if (!(evidence_rate >= 0 && evidence_rate <= 1)) throw ValidationError("evidence_rate", "must lie in [0,1]");
    if (!(confidence_overlap >= 0 && confidence_overlap < 1))
      throw ValidationError("confidence_overlap", "must lie in [0,1)");
    if (sentence_length < 1) throw ValidationError("sentence_length", "must be >= 1");
  }
};

/// Probe positions for a trace of length ℓ: stride multiples plus ℓ.
inline std::vector<int> synth_probe_positions(int length, int stride) {
  std::vector<int> ts;
  for (int t = stride; t <= length; t += stride) ts.push_back(t);
  if (ts.empty() || ts.back() != length) ts.push_back(length);
  return ts;
}

struct SynthTrace {
  TraceRecord trace;
  int planted_tau = 0;
  bool converged_by_half = false;
};

namespace detail {

inline std::string letter(int i) { return std::string(1, static_cast<char>('A' + i)); }

inline SynthTrace synth_one(const FixtureSpec& spec, std::size_t index, bool early_group) {
  rng::Stream g(spec.seed, 1000 + index);
  SynthTrace out;
  TraceRecord& tr = out.trace;
  tr.trace_id = spec.id_prefix + "-" + std::to_string(1000000 + index).substr(1);

  std::vector<std::string> letters;
  for (int i = 0; i < spec.n_answers; ++i) letters.push_back(letter(i));
  tr.answer_set = AnswerSet(TaskKind::closed, letters);
  const int final_id = static_cast<int>(g.uniform_int(0, spec.n_answers - 1));
  tr.final_answer = tr.answer_set.id(final_id);
  int gold_id = final_id;
  if (!g.bernoulli(spec.gold_accuracy)) gold_id = (final_id + static_cast<int>(g.uniform_int(1, spec.n_answers - 1))) % spec.n_answers;
  tr.gold_answer = tr.answer_set.id(gold_id);

  const int length = static_cast<int>(g.uniform_int(spec.min_length, spec.max_length));
  tr.cot_length = length;
  const auto positions = synth_probe_positions(length, spec.probe_stride);
  const int half = nearest_index(positions, 0.5 * length);
  const int last = static_cast<int>(positions.size()) - 1;
  const int tau_index = early_group ? static_cast<int>(g.uniform_int(0, half))
                                    : static_cast<int>(g.uniform_int(half + 1, last));
  const int tau = positions[static_cast<std::size_t>(tau_index)];
  out.planted_tau = tau;
  out.converged_by_half = tau_index <= half;

  // Leading wrong answer per token before τ; switches now and then.
  std::vector<int> wrong(static_cast<std::size_t>(length) + 1, 0);
  int current = (final_id + static_cast<int>(g.uniform_int(1, spec.n_answers - 1))) % spec.n_answers;
  for (int t = 1; t <= length; ++t) {
    if (g.bernoulli(0.03)) current = (final_id + static_cast<int>(g.uniform_int(1, spec.n_answers - 1))) % spec.n_answers;
    wrong[static_cast<std::size_t>(t)] = current;
  }

  std::vector<int> proposals;
  switch (spec.proposals) {
    case ProposalRule::none:
      break;
    case ProposalRule::near_convergence: {
      if (tau > 6 && g.bernoulli(0.5)) proposals.push_back(static_cast<int>(g.uniform_int(1, tau - 3)));
      proposals.push_back(std::min(length, tau + static_cast<int>(g.uniform_int(0, 3))));
      if (proposals.back() + 5 <= length && g.bernoulli(0.5))
        proposals.push_back(static_cast<int>(g.uniform_int(proposals.back() + 1, length)));
      break;
    }
    case ProposalRule::sentence_ends:
      for (int t = spec.sentence_length; t <= length; t += spec.sentence_length) proposals.push_back(t);
      break;
  }
  std::sort(proposals.begin(), proposals.end());
  proposals.erase(std::unique(proposals.begin(), proposals.end()), proposals.end());

  std::size_t next_proposal = 0;
  for (int t = 1; t <= length; ++t) {
    const bool post = t >= tau;
    StepRecord s;
    s.t = t;
    s.sentence_id = (t - 1) / spec.sentence_length;
    s.is_stop_token = next_proposal < proposals.size() && proposals[next_proposal] == t;
    if (s.is_stop_token) ++next_proposal;
    const bool sentence_end = t % spec.sentence_length == 0 || t == length;
    s.token = s.is_stop_token ? "<stop>" : " w" + std::to_string(t) + (sentence_end ? "." : "");
    s.chosen_logprob = -g.uniform(0.02, 0.8);
    s.topk.push_back({s.token, s.chosen_logprob});
    if (g.bernoulli(spec.evidence_rate)) {
      const int leader = post ? final_id : wrong[static_cast<std::size_t>(t)];
      const double lead_lp = post ? -g.uniform(0.3, 1.5) : -g.uniform(1.0, 2.5);
      s.topk.push_back({" " + letter(leader), lead_lp});
      for (int a = 0; a < spec.n_answers; ++a) {
        if (a == leader || (post && !g.bernoulli(0.3))) continue;
        const double gap = post ? g.uniform(3.0, 6.0) : g.uniform(0.0, 1.0);
        s.topk.push_back({letter(a), lead_lp - gap});
      }
    }
    for (int k = 0; k < 2; ++k) s.topk.push_back({" x" + std::to_string(k), -g.uniform(1.0, 6.0)});
    std::stable_sort(s.topk.begin(), s.topk.end(),
                     [](const TopKEntry& a, const TopKEntry& b) { return a.logprob > b.logprob; });
    tr.steps.push_back(std::move(s));
  }

  for (int t : positions) {
    ProbeRecord p;
    p.t = t;
    p.progress_fraction = static_cast<double>(t) / static_cast<double>(length);
    const bool post = t >= tau;
    const bool lucky = !post && spec.noise > 0 && g.bernoulli(spec.noise);
    const int answer = (post || lucky) ? final_id : wrong[static_cast<std::size_t>(t)];
    p.forced_answer = tr.answer_set.id(answer);
    std::vector<double> span(static_cast<std::size_t>(g.uniform_int(1, 3)));
    const bool confident = spec.confidence_overlap > 0 && g.bernoulli(spec.confidence_overlap) ? !post : post;
    for (auto& lp : span) lp = confident ? -g.uniform(0.0, 0.15) : -g.uniform(0.3, 2.0);
    p.answer_span_logprobs = std::move(span);
    tr.probes.push_back(std::move(p));
  }
  tr.stop_proposals = std::move(proposals);
  return out;
}

}  // namespace detail

/// Traces plus their planted convergence steps, in trace_id order.
inline std::vector<SynthTrace> generate_fixture(const FixtureSpec& spec) {
  spec.validate();
  const auto n = static_cast<std::size_t>(spec.n_traces);
  // Exactly round(share · n) traces converge by half; which ones is a seeded shuffle.
  const auto n_early = static_cast<std::size_t>(std::llround(spec.converge_by_half * static_cast<double>(n)));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return rng::hash(spec.seed, 77, a) < rng::hash(spec.seed, 77, b);
  });
  std::vector<bool> early(n, false);
  for (std::size_t k = 0; k < n_early; ++k) early[order[k]] = true;
  std::vector<SynthTrace> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(detail::synth_one(spec, i, early[i]));
  return out;
}

inline std::vector<TraceRecord> generate_corpus(const FixtureSpec& spec) {
  std::vector<TraceRecord> out;
  for (auto& s : generate_fixture(spec)) out.push_back(std::move(s.trace));
  return out;
}

}  // namespace cotstop
