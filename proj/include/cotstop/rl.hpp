#pragma once

// Rollout bookkeeping for stop-aware RL: format check, verify-then-truncate,
// per-proposal rewards and group-relative advantages.

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "cotstop/errors.hpp"
#include "cotstop/sft.hpp"
#include "cotstop/trace.hpp"

namespace cotstop {

struct RewardWeights {
  double format = 0.25;    // λ1
  double stop = 0.25;      // λ2
  double accuracy = 0.5;   // λ3

  void validate() const {
    if (!(format >= 0) || !(stop >= 0) || !(accuracy >= 0)) throw ValidationError("weights", "must be >= 0");
  }
};

struct Rollout {
  std::string rollout_id;
  std::vector<std::string> tokens;  // full generation, markers included
  std::vector<int> proposals;       // P(x), 1-based positions inside the thinking span
  int gen_length = 0;               // ℓ_gen
  AnswerSet answer_set;
  std::optional<AnswerId> gold;
  AnswerId final_answer;

  void validate() const {
    if (gen_length < 0) throw ValidationError("gen_length", "must be >= 0");
    for (std::size_t i = 0; i < proposals.size(); ++i) {
      if (proposals[i] < 1 || proposals[i] > gen_length)
        throw ValidationError("proposals", "proposal " + std::to_string(proposals[i]) + " outside [1, ℓ_gen]");
      if (i > 0 && proposals[i] <= proposals[i - 1]) throw ValidationError("proposals", "must be strictly increasing");
    }
  }
};

/// A rollout from a recorded trace: <think> steps </think>.
inline Rollout rollout_from_trace(const TraceRecord& trace) {
  Rollout r;
  r.rollout_id = trace.trace_id;
  r.tokens.emplace_back(kThinkOpen);
  for (const auto& s : trace.steps) r.tokens.push_back(s.token);
  r.tokens.emplace_back(kThinkClose);
  r.proposals = trace.stop_proposals.empty() ? proposals_from_steps(trace) : trace.stop_proposals;
  r.gen_length = trace.cot_length;
  r.answer_set = trace.answer_set;
  r.gold = trace.gold_answer;
  r.final_answer = trace.final_answer;
  r.validate();
  return r;
}

namespace detail {

inline std::string_view trim_ws(std::string_view s) {
  while (!s.empty() && is_ws(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_ws(s.back())) s.remove_suffix(1);
  return s;
}

}  // namespace detail

/// Exactly one <think>, exactly one </think> after it, and every <stop>
/// strictly between the two. Markers are tokens whose trimmed text is the
/// marker.
inline bool check_format(std::span<const std::string> tokens) {
  int open = 0, close = 0;
  for (const auto& raw : tokens) {
    const auto tok = detail::trim_ws(raw);
    if (tok == kThinkOpen) {
      if (++open > 1 || close > 0) return false;
    } else if (tok == kThinkClose) {
      if (++close > 1 || open == 0) return false;
    } else if (tok == kStopMarker) {
      if (open != 1 || close != 0) return false;
    }
  }
  return open == 1 && close == 1;
}

inline bool check_format(const Rollout& r) { return check_format(r.tokens); }

/// Elicited answer A^ES at proposal t'. May throw; the proposal is then
/// rejected and flagged.
class Verifier {
 public:
  virtual ~Verifier() = default;
  virtual AnswerId elicit(const Rollout& rollout, int t) = 0;
};

/// Answers recorded as probes in the source trace.
class RecordedVerifier final : public Verifier {
 public:
  explicit RecordedVerifier(const TraceRecord& trace) : trace_(trace) {}
  AnswerId elicit(const Rollout&, int t) override {
    if (const auto* p = trace_.probe_at(t)) return p->forced_answer;
    throw ValidationError("probes", "no recorded answer at proposal t=" + std::to_string(t));
  }

 private:
  const TraceRecord& trace_;
};

struct ProposalResult {
  int t = 0;
  AnswerId answer;
  bool accepted = false;
  bool verifier_failed = false;
  std::string error;
};

struct RolloutOutcome {
  std::string rollout_id;
  std::vector<ProposalResult> proposals;
  int t_tilde = 0;
  bool format_ok = false;
  int gen_length = 0;
  std::vector<int> rewarded;  // proposals with t' ≤ t̃
  AnswerId gold;
  AnswerId final_answer;

  bool truncated() const {
    return std::any_of(proposals.begin(), proposals.end(), [](const ProposalResult& p) { return p.accepted; });
  }
  const ProposalResult* proposal(int t) const {
    for (const auto& p : proposals)
      if (p.t == t) return &p;
    return nullptr;
  }
};

/// a_t = 1{A^ES_t = A*}; t̃ = earliest accepted proposal, else ℓ_gen.
inline RolloutOutcome verify_truncate(const Rollout& rollout, Verifier& verifier) {
  rollout.validate();
  if (!rollout.gold || !rollout.gold->known())
    throw ValidationError("gold_answer", "rollout " + rollout.rollout_id + " needs a gold answer for verification");
  RolloutOutcome out;
  out.rollout_id = rollout.rollout_id;
  out.format_ok = check_format(rollout);
  out.gen_length = rollout.gen_length;
  out.gold = *rollout.gold;
  out.final_answer = rollout.final_answer;
  out.t_tilde = rollout.gen_length;
  for (int t : rollout.proposals) {
    ProposalResult p;
    p.t = t;
    try {
      p.answer = verifier.elicit(rollout, t);
      p.accepted = p.answer.known() && p.answer == *rollout.gold;
    } catch (const Error& e) {
      p.verifier_failed = true;
      p.error = e.what();
    }
    if (p.accepted) out.t_tilde = std::min(out.t_tilde, t);
    out.proposals.push_back(std::move(p));
  }
  for (const auto& p : out.proposals)
    if (p.t <= out.t_tilde) out.rewarded.push_back(p.t);
  return out;
}

/// r_stop = 1 - t̃/ℓ_gen.
inline double stop_reward(int t_tilde, int gen_length) {
  return gen_length > 0 ? 1.0 - static_cast<double>(t_tilde) / static_cast<double>(gen_length) : 0.0;
}

/// r(t') = λ1·r_fmt + λ2·r_stop(t') + λ3·r_acc(A^ES_t', A*), with r_stop
/// granted only at t' = t̃.
inline double reward(int t, const RolloutOutcome& outcome, const RewardWeights& w = {}) {
  w.validate();
  const auto* p = outcome.proposal(t);
  if (!p) throw ValidationError("t", "t=" + std::to_string(t) + " is not a proposal of " + outcome.rollout_id);
  if (t > outcome.t_tilde)
    throw ValidationError("t", "proposal t=" + std::to_string(t) + " lies after the truncation point " +
                                   std::to_string(outcome.t_tilde));
  const double r_fmt = outcome.format_ok ? 1.0 : 0.0;
  const double r_stop = t == outcome.t_tilde ? stop_reward(outcome.t_tilde, outcome.gen_length) : 0.0;
  const double r_acc = p->accepted ? 1.0 : 0.0;
  return w.format * r_fmt + w.stop * r_stop + w.accuracy * r_acc;
}

/// Scalar for advantage normalization: the reward at t̃ when a proposal was
/// accepted, else λ1·r_fmt + λ3·r_acc(final answer).
inline double rollout_reward(const RolloutOutcome& outcome, const RewardWeights& w = {}) {
  if (outcome.truncated()) return reward(outcome.t_tilde, outcome, w);
  w.validate();
  const double r_fmt = outcome.format_ok ? 1.0 : 0.0;
  const double r_acc = outcome.final_answer.known() && outcome.final_answer == outcome.gold ? 1.0 : 0.0;
  return w.format * r_fmt + w.accuracy * r_acc;
}

/// (r - mean) / max(std, eps) with the population std.
inline std::vector<double> group_advantages(std::span<const double> rewards, double eps = 1e-8) {
  if (rewards.size() < 2) throw ValidationError("rewards", "a group needs at least 2 rollouts");
  double mean = 0.0;
  for (double r : rewards) mean += r;
  mean /= static_cast<double>(rewards.size());
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  const double sd = std::sqrt(var / static_cast<double>(rewards.size()));
  std::vector<double> out;
  out.reserve(rewards.size());
  for (double r : rewards) out.push_back(sd < eps ? 0.0 : (r - mean) / sd);
  return out;
}

/// Group key: the id up to its last '#', or the whole id.
inline std::string rollout_group(const std::string& rollout_id) {
  const auto hash = rollout_id.rfind('#');
  return hash == std::string::npos ? rollout_id : rollout_id.substr(0, hash);
}

struct ScoredRollout {
  RolloutOutcome outcome;
  std::vector<std::pair<int, double>> rewards;  // (t', r(t')) over rewarded proposals
  double scalar = 0.0;
  double advantage = 0.0;
};

/// Outcomes, rewards and advantages for traces grouped by rollout_group().
inline std::vector<ScoredRollout> score_rollouts(const std::vector<TraceRecord>& traces, const RewardWeights& w = {}) {
  std::vector<ScoredRollout> out;
  std::map<std::string, std::vector<std::size_t>> groups;
  for (const auto& tr : traces) {
    const auto rollout = rollout_from_trace(tr);
    RecordedVerifier verifier(tr);
    ScoredRollout s;
    s.outcome = verify_truncate(rollout, verifier);
    for (int t : s.outcome.rewarded) s.rewards.emplace_back(t, reward(t, s.outcome, w));
    s.scalar = rollout_reward(s.outcome, w);
    groups[rollout_group(tr.trace_id)].push_back(out.size());
    out.push_back(std::move(s));
  }
  for (const auto& [key, members] : groups) {
    if (members.size() < 2)
      throw ValidationError("rollouts", "group \"" + key + "\" has a single rollout (ids are grouped by the text before '#')");
    std::vector<double> r;
    for (auto i : members) r.push_back(out[i].scalar);
    const auto adv = group_advantages(r);
    for (std::size_t k = 0; k < members.size(); ++k) out[members[k]].advantage = adv[k];
  }
  return out;
}

inline nlohmann::json to_json(const ScoredRollout& s) {
  using nlohmann::json;
  json proposals = json::array();
  for (const auto& p : s.outcome.proposals) {
    json j = {{"t", p.t}, {"answer", p.answer.raw}, {"accepted", p.accepted}};
    if (p.verifier_failed) j["verifier_failed"] = true;
    proposals.push_back(std::move(j));
  }
  json rewards = json::array();
  for (const auto& [t, r] : s.rewards) rewards.push_back({{"t", t}, {"reward", r}});
  return {{"rollout_id", s.outcome.rollout_id},
          {"proposals", proposals},
          {"t_tilde", s.outcome.t_tilde},
          {"gen_length", s.outcome.gen_length},
          {"format_ok", s.outcome.format_ok},
          {"rewards", rewards},
          {"reward", s.scalar},
          {"advantage", s.advantage}};
}

}  // namespace cotstop
