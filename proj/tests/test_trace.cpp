#include <gtest/gtest.h>

#include <sstream>

#include "cotstop/canonical.hpp"
#include "cotstop/trace.hpp"

using namespace cotstop;

namespace {

const char* kThreeSteps =
    R"({"kind":"meta","trace_id":"q1","answer_set":["A","B"],"gold_answer":"A","final_answer":"A","cot_length":3}
{"kind":"step","t":1,"token":"The","chosen_logprob":-0.5,"topk":[["The",-0.5],["A",-2.0]],"is_stop_token":false,"sentence_id":0}
{"kind":"step","t":2,"token":" answer","chosen_logprob":-0.1,"topk":[[" answer",-0.1],["B",-3.0]],"is_stop_token":false,"sentence_id":0}
{"kind":"step","t":3,"token":" A","chosen_logprob":-0.2,"topk":[[" A",-0.2],["b",-1.9]],"is_stop_token":true,"sentence_id":0}
{"kind":"probe","t":3,"forced_answer":"A","answer_span_logprobs":[-0.3,-0.1],"progress_fraction":1.0}
)";

}  // namespace

TEST(Canonical, ClosedLetterMap) {
  EXPECT_EQ(canonical_form(" (B) ", TaskKind::closed), "B");
  EXPECT_EQ(canonical_form("c.", TaskKind::closed), "C");
  EXPECT_EQ(canonical_form("Bee", TaskKind::closed), std::nullopt);
  EXPECT_EQ(canonical_form("", TaskKind::closed), std::nullopt);
  EXPECT_EQ(canonical_form("7", TaskKind::closed), std::nullopt);
}

TEST(Canonical, OpenNumericTable) {
  struct Row {
    const char* in;
    const char* out;
  };
  const Row rows[] = {{"007", "7"},     {"+5", "5"},     {"-0", "0"},       {"  12  ", "12"}, {"3.50", "3.5"},
                      {"-0.0", "0"},    {".5", "0.5"},   {"4/8", "1/2"},    {"6/3", "2"},     {"-2/4", "-1/2"},
                      {"2/-4", "-1/2"}, {"0/9", "0"},    {"x  +  1", "x + 1"}, {"010.010", "10.01"}};
  for (const auto& r : rows) EXPECT_EQ(canonical_form(r.in, TaskKind::open), r.out) << r.in;
  EXPECT_EQ(canonical_form("   ", TaskKind::open), std::nullopt);
  EXPECT_EQ(canonical_form("1/0", TaskKind::open), "1/0");  // not numeric, kept as text
}

TEST(Canonical, Idempotent) {
  const char* inputs[] = {" (B) ", "007", "4/8", "3.50", "x   y", "-0", "hello  world", "a"};
  for (auto kind : {TaskKind::closed, TaskKind::open}) {
    for (const char* in : inputs) {
      auto once = canonical_form(in, kind);
      if (!once) continue;
      EXPECT_EQ(canonical_form(*once, kind), once) << in;
    }
  }
}

TEST(Canonical, AnswerSetLookupAndSentinel) {
  AnswerSet omega(TaskKind::closed, {"A", "B", "C"});
  EXPECT_EQ(omega.lookup("(c)").id, 2);
  EXPECT_FALSE(omega.lookup("").known());
  EXPECT_FALSE(omega.lookup("D").known());
  EXPECT_EQ(AnswerId::unknown().id, -1);
  EXPECT_THROW(AnswerSet(TaskKind::closed, {"A", "a"}), ValidationError);
  EXPECT_THROW(AnswerSet(TaskKind::closed, {"AB"}), ValidationError);

  AnswerSet open(TaskKind::open);
  EXPECT_EQ(open.intern("007").id, 0);
  EXPECT_EQ(open.intern("7").id, 0);
  EXPECT_EQ(open.intern("3/6").raw, "1/2");
  EXPECT_EQ(open.size(), 2u);
}

TEST(BucketTopk, CaseFold) {
  AnswerSet omega(TaskKind::closed, {"A", "B"});
  StepRecord s;
  s.topk = {{"B", -0.1}, {"b", -2.0}};
  auto b = bucket_topk(s, omega);
  EXPECT_TRUE(b[0].empty());
  EXPECT_EQ(b[1], (std::vector<double>{-0.1, -2.0}));
}

TEST(BucketTopk, NoAnswerTokensAndUnmappable) {
  AnswerSet omega(TaskKind::closed, {"A", "B"});
  StepRecord s;
  s.topk = {{"the", -0.1}, {"so", -2.0}};
  for (const auto& b : bucket_topk(s, omega)) EXPECT_TRUE(b.empty());
  s.topk = {{"A", -1}, {"B", -1}, {"Bee", -3}};
  auto b = bucket_topk(s, omega);
  EXPECT_EQ(b[0], std::vector<double>{-1});
  EXPECT_EQ(b[1], std::vector<double>{-1});
}

TEST(BucketTopk, PartitionsMappableSubset) {
  AnswerSet omega(TaskKind::closed, {"A", "B", "C", "D"});
  StepRecord s;
  s.topk = {{"A", -0.1}, {"x", -0.2}, {" c", -0.3}, {"(d)", -0.4}, {"a", -0.5}, {"zz", -0.6}};
  std::size_t mappable = 0;
  for (const auto& e : s.topk) mappable += omega.lookup(e.token).known();
  std::size_t bucketed = 0;
  for (const auto& b : bucket_topk(s, omega)) bucketed += b.size();
  EXPECT_EQ(bucketed, mappable);
}

TEST(TraceParse, EmptyStream) {
  EXPECT_TRUE(parse_trace_string("").empty());
  EXPECT_TRUE(parse_trace_string("\n\n").empty());
}

TEST(TraceParse, ThreeStepGroup) {
  auto traces = parse_trace_string(kThreeSteps);
  ASSERT_EQ(traces.size(), 1u);
  const auto& tr = traces[0];
  EXPECT_EQ(tr.cot_length, 3);
  EXPECT_EQ(tr.steps.size(), 3u);
  ASSERT_EQ(tr.probes.size(), 1u);
  EXPECT_EQ(tr.final_answer.id, 0);
  EXPECT_EQ(tr.gold_answer->raw, "A");
  EXPECT_EQ(tr.stop_proposals, std::vector<int>{3});
  EXPECT_EQ(tr.probe_at(3)->forced_answer.raw, "A");
  EXPECT_EQ(tr.probe_at(2), nullptr);
}

TEST(TraceParse, RoundTrip) {
  auto first = parse_trace_string(kThreeSteps);
  auto second = parse_trace_string(to_jsonl(first));
  EXPECT_EQ(first, second);
  EXPECT_EQ(to_jsonl(first), to_jsonl(second));
}

TEST(TraceParse, ProbeBeyondLength) {
  const std::string text =
      R"({"kind":"meta","trace_id":"q","answer_set":["A","B"],"final_answer":"A","cot_length":10}
{"kind":"probe","t":99,"forced_answer":"A","answer_span_logprobs":[-0.1],"progress_fraction":1.0}
)";
  try {
    parse_trace_string(text);
    FAIL() << "expected a validation error";
  } catch (const ValidationError& e) {
    EXPECT_EQ(e.line(), 2u);
    EXPECT_NE(std::string(e.what()).find("probe.t exceeds cot_length"), std::string::npos);
  }
}

TEST(TraceParse, MalformedJsonCarriesLine) {
  std::string text = kThreeSteps;
  text += "{not json\n";
  try {
    parse_trace_string(text);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 6u);
  }
}

TEST(TraceParse, InvariantViolations) {
  const std::string meta =
      R"({"kind":"meta","trace_id":"q","answer_set":["A","B"],"final_answer":"A","cot_length":5})"
      "\n";
  auto bad = [&](const std::string& body) { EXPECT_THROW(parse_trace_string(meta + body), ValidationError) << body; };
  bad(R"({"kind":"step","t":2,"token":"x","chosen_logprob":-1,"topk":[]})"
      "\n");
  bad(R"({"kind":"step","t":1,"token":"x","chosen_logprob":-1,"topk":[["a",-2],["b",-1]]})"
      "\n");
  bad(R"({"kind":"step","t":1,"token":"x","chosen_logprob":0.5,"topk":[]})"
      "\n");
  bad(R"({"kind":"probe","t":2,"forced_answer":"A","answer_span_logprobs":[-1],"progress_fraction":0.4}
{"kind":"probe","t":2,"forced_answer":"A","answer_span_logprobs":[-1],"progress_fraction":0.4})"
      "\n");
  bad(R"({"kind":"probe","t":2,"forced_answer":"Z","answer_span_logprobs":[-1],"progress_fraction":0.4})"
      "\n");
  bad(R"({"kind":"probe","t":2,"forced_answer":"A","answer_span_logprobs":null,"progress_fraction":0.4})"
      "\n");
  bad(R"({"kind":"probe","t":2,"forced_answer":"A","answer_span_logprobs":[],"progress_fraction":0.4})"
      "\n");
  EXPECT_THROW(parse_trace_string(
                   R"({"kind":"meta","trace_id":"q","answer_set":["A","B"],"final_answer":"C","cot_length":5})"),
               ValidationError);
  EXPECT_THROW(
      parse_trace_string(
          R"({"kind":"meta","trace_id":"q","answer_set":["A","B"],"final_answer":"A","cot_length":5,"stop_proposals":[3,2]})"),
      ValidationError);
}

TEST(TraceParse, FallbackProbeAndUnknownAnswer) {
  const std::string text =
      R"({"kind":"meta","trace_id":"q","answer_set":["A","B"],"final_answer":"A","cot_length":5}
{"kind":"probe","t":2,"forced_answer":"","answer_span_logprobs":null,"avg_logprob":-0.4,"answer_len":3,"progress_fraction":0.4}
)";
  auto traces = parse_trace_string(text);
  ASSERT_EQ(traces.size(), 1u);
  EXPECT_FALSE(traces[0].probes[0].forced_answer.known());
  EXPECT_FALSE(traces[0].probes[0].answer_span_logprobs.has_value());
  EXPECT_EQ(parse_trace_string(to_jsonl(traces)), traces);
}

TEST(TraceParse, StreamingReaderSplitsOnMeta) {
  std::string text = kThreeSteps;
  text += R"({"kind":"meta","trace_id":"q2","answer_set":["A","B"],"final_answer":"B","cot_length":0})"
          "\n";
  std::istringstream in(text);
  TraceReader reader(in);
  auto a = reader.next();
  auto b = reader.next();
  auto c = reader.next();
  ASSERT_TRUE(a && b);
  EXPECT_FALSE(c);
  EXPECT_EQ(a->trace_id, "q1");
  EXPECT_EQ(b->trace_id, "q2");
  EXPECT_TRUE(b->steps.empty());
}

TEST(TraceParse, StepBeforeMeta) {
  EXPECT_THROW(parse_trace_string(R"({"kind":"step","t":1,"token":"x","chosen_logprob":-1,"topk":[]})"),
               ValidationError);
}
