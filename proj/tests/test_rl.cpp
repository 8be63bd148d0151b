#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>

#include "cotstop/rl.hpp"
#include "cotstop/synth.hpp"

using namespace cotstop;

namespace {

/// Verifier answering from a table; missing entries throw.
class TableVerifier final : public Verifier {
 public:
  explicit TableVerifier(std::map<int, std::string> answers) : answers_(std::move(answers)) {}
  AnswerId elicit(const Rollout& r, int t) override {
    auto it = answers_.find(t);
    if (it == answers_.end()) throw TransportError("no answer");
    return r.answer_set.lookup(it->second);
  }

 private:
  std::map<int, std::string> answers_;
};

Rollout make_rollout(std::vector<int> proposals, int gen_length, bool well_formed = true) {
  Rollout r;
  r.rollout_id = "q#0";
  r.answer_set = AnswerSet(TaskKind::closed, {"A", "B"});
  r.gold = r.answer_set.lookup("A");
  r.final_answer = r.answer_set.lookup("A");
  r.gen_length = gen_length;
  r.proposals = std::move(proposals);
  if (well_formed) r.tokens.emplace_back("<think>");
  for (int t = 1; t <= gen_length; ++t)
    r.tokens.push_back(std::count(r.proposals.begin(), r.proposals.end(), t) ? "<stop>" : "w");
  r.tokens.emplace_back("</think>");
  if (!well_formed) r.tokens.emplace_back("</think>");
  return r;
}

double hand_std(const std::vector<double>& v) {
  double m = 0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  double s = 0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size()));
}

}  // namespace

TEST(Format, Examples) {
  const std::vector<std::string> ok = {"<think>", "a", "<stop>", "b", "</think>", "ans"};
  EXPECT_TRUE(check_format(ok));
  const std::vector<std::string> stop_first = {"<stop>", "<think>", "a", "</think>"};
  EXPECT_FALSE(check_format(stop_first));
  const std::vector<std::string> two_close = {"<think>", "a", "</think>", "</think>"};
  EXPECT_FALSE(check_format(two_close));
  const std::vector<std::string> stop_after = {"<think>", "a", "</think>", "<stop>"};
  EXPECT_FALSE(check_format(stop_after));
  const std::vector<std::string> no_close = {"<think>", "a"};
  EXPECT_FALSE(check_format(no_close));
  const std::vector<std::string> spaced = {" <think>", "a", " <stop> ", "</think>\n"};
  EXPECT_TRUE(check_format(spaced));
}

TEST(VerifyTruncate, Examples) {
  const auto r = make_rollout({5, 9, 14}, 20);
  TableVerifier only9({{5, "B"}, {9, "A"}, {14, "A"}});
  auto out = verify_truncate(r, only9);
  EXPECT_EQ(out.t_tilde, 9);
  EXPECT_EQ(out.rewarded, (std::vector<int>{5, 9}));
  EXPECT_THROW(reward(14, out, {}), ValidationError);

  TableVerifier none({{5, "B"}, {9, "B"}, {14, "B"}});
  out = verify_truncate(r, none);
  EXPECT_EQ(out.t_tilde, 20);
  EXPECT_EQ(out.rewarded, (std::vector<int>{5, 9, 14}));
  for (const auto& p : out.proposals) EXPECT_FALSE(p.accepted);

  const auto empty = make_rollout({}, 20);
  TableVerifier any({});
  out = verify_truncate(empty, any);
  EXPECT_EQ(out.t_tilde, 20);
  EXPECT_TRUE(out.rewarded.empty());
  EXPECT_EQ(rollout_reward(out), 0.25 + 0.5);
}

TEST(VerifyTruncate, VerifierFailureRejectsAndFlags) {
  const auto r = make_rollout({3, 6}, 10);
  TableVerifier partial({{6, "A"}});
  const auto out = verify_truncate(r, partial);
  EXPECT_TRUE(out.proposals[0].verifier_failed);
  EXPECT_FALSE(out.proposals[0].accepted);
  EXPECT_EQ(out.t_tilde, 6);
  auto no_gold = r;
  no_gold.gold.reset();
  EXPECT_THROW(verify_truncate(no_gold, partial), ValidationError);
  auto unsorted = r;
  unsorted.proposals = {6, 3};
  EXPECT_THROW(verify_truncate(unsorted, partial), ValidationError);
}

TEST(Reward, HandEvaluated) {
  const auto r = make_rollout({2, 4}, 20);
  TableVerifier v({{2, "B"}, {4, "A"}});
  const auto out = verify_truncate(r, v);
  ASSERT_EQ(out.t_tilde, 4);  // t̃/ℓ = 0.2
  EXPECT_NEAR(reward(4, out), 0.25 * 1 + 0.25 * 0.8 + 0.5 * 1, 1e-12);
  EXPECT_NEAR(reward(4, out), 0.95, 1e-12);
  EXPECT_NEAR(reward(2, out), 0.25, 1e-12);
  EXPECT_THROW(reward(3, out), ValidationError);

  const auto broken = make_rollout({2}, 10, false);
  TableVerifier wrong({{2, "B"}});
  const auto bad = verify_truncate(broken, wrong);
  EXPECT_FALSE(bad.format_ok);
  EXPECT_EQ(reward(2, bad), 0.0);
}

TEST(Reward, ExhaustivePatterns) {
  const RewardWeights w;
  const int len = 12;
  // Every set of up to 4 proposals drawn from {1..len} placements (spread
  // over a fixed grid) and every acceptance pattern over it.
  const std::vector<std::vector<int>> placements = {
      {}, {12}, {1}, {3, 7}, {1, 12}, {2, 5, 9}, {4, 5, 6}, {1, 4, 8, 12}, {2, 3, 10, 11}, {6, 7, 8, 9}};
  int checked = 0;
  for (const auto& P : placements) {
    const auto r = make_rollout(P, len);
    for (unsigned mask = 0; mask < (1u << P.size()); ++mask) {
      std::map<int, std::string> table;
      for (std::size_t i = 0; i < P.size(); ++i) table[P[i]] = (mask >> i) & 1u ? "A" : "B";
      TableVerifier v(table);
      const auto out = verify_truncate(r, v);
      int expected = len;
      for (std::size_t i = 0; i < P.size(); ++i)
        if ((mask >> i) & 1u) {
          expected = P[i];
          break;
        }
      ASSERT_EQ(out.t_tilde, expected);
      std::vector<int> eligible;
      for (int t : P)
        if (t <= expected) eligible.push_back(t);
      ASSERT_EQ(out.rewarded, eligible);
      for (std::size_t i = 0; i < P.size(); ++i) {
        if (P[i] > expected) continue;
        const bool acc = (mask >> i) & 1u;
        const double by_hand = 0.25 + (P[i] == expected ? 0.25 * (1.0 - expected / 12.0) : 0.0) + (acc ? 0.5 : 0.0);
        ASSERT_NEAR(reward(P[i], out, w), by_hand, 1e-12);
        ASSERT_GE(reward(P[i], out, w), 0.0);
        ASSERT_LE(reward(P[i], out, w), 1.0);
      }
      // Order independence: the verifier sees the same table in any order.
      auto again = verify_truncate(r, v);
      ASSERT_EQ(again.t_tilde, out.t_tilde);
      ++checked;
    }
  }
  EXPECT_EQ(checked, 1 + 2 + 2 + 4 + 4 + 8 + 8 + 16 + 16 + 16);
}

TEST(Reward, StopTermStrictlyDecreasing) {
  double prev = 2.0;
  for (int t = 1; t <= 50; ++t) {
    const double r = stop_reward(t, 50);
    EXPECT_LT(r, prev);
    prev = r;
  }
}

TEST(Advantages, Examples) {
  EXPECT_EQ(group_advantages(std::vector<double>{0.4, 0.4, 0.4}), (std::vector<double>{0, 0, 0}));
  const auto a = group_advantages(std::vector<double>{1, 0});
  EXPECT_NEAR(a[0], 1.0, 1e-12);
  EXPECT_NEAR(a[1], -1.0, 1e-12);
  const std::vector<double> r = {0.95, 0.25, 0.0, 0.0};
  const auto adv = group_advantages(r);
  const double sd = hand_std(r);
  for (std::size_t i = 0; i < r.size(); ++i) EXPECT_NEAR(adv[i], (r[i] - 0.3) / sd, 1e-9);
  EXPECT_NEAR(adv[0], 0.65 / std::sqrt(0.15125), 1e-9);
  EXPECT_THROW(group_advantages(std::vector<double>{1.0}), ValidationError);
}

TEST(Rollouts, ScoreFromTraces) {
  FixtureSpec spec;
  spec.seed = 2;
  spec.n_traces = 8;
  spec.proposals = ProposalRule::near_convergence;
  auto corpus = generate_corpus(spec);
  for (std::size_t i = 0; i < corpus.size(); ++i) corpus[i].trace_id = "q" + std::to_string(i / 4) + "#" + std::to_string(i % 4);
  const auto scored = score_rollouts(corpus);
  ASSERT_EQ(scored.size(), 8u);
  double sum = 0.0;
  for (std::size_t i = 0; i < 4; ++i) sum += scored[i].advantage;
  EXPECT_NEAR(sum, 0.0, 1e-9);
  for (const auto& s : scored) {
    EXPECT_TRUE(s.outcome.format_ok);
    for (const auto& [t, r] : s.rewards) EXPECT_LE(t, s.outcome.t_tilde);
    const auto j = to_json(s);
    EXPECT_TRUE(j.contains("advantage"));
  }
  corpus.pop_back();
  corpus.pop_back();
  corpus.pop_back();
  EXPECT_THROW(score_rollouts(corpus), ValidationError);
  EXPECT_EQ(rollout_group("abc#12"), "abc");
  EXPECT_EQ(rollout_group("abc"), "abc");
}
