#pragma once

// <stop>-annotated SFT data: sentence segmentation, stop insertion at
// boundaries whose forced answer already equals the final answer, and hint
// continuation requests for traces that end on a wrong answer.

#include <algorithm>
#include <array>
#include <cctype>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "cotstop/errors.hpp"
#include "cotstop/trace.hpp"

namespace cotstop {

inline constexpr std::string_view kThinkOpen = "<think>";
inline constexpr std::string_view kThinkClose = "</think>";
inline constexpr std::string_view kStopMarker = "<stop>";
inline constexpr int kMaxStops = 5;

struct SentenceSpan {
  int index = 0;          // 1-based
  int first_t = 0;        // token range, 0 when segmenting raw text
  int last_t = 0;
  std::size_t begin = 0;  // byte range in the CoT text
  std::size_t end = 0;
  std::string text;
  friend bool operator==(const SentenceSpan&, const SentenceSpan&) = default;
};

namespace detail {

inline bool is_ws(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }
inline bool is_terminal(char c) { return c == '.' || c == '!' || c == '?'; }
inline bool is_closer(char c) { return c == ')' || c == ']' || c == '}' || c == '"' || c == '\''; }

inline constexpr std::array<std::string_view, 14> kAbbreviations = {
    "e.g.", "i.e.", "etc.", "vs.", "cf.", "approx.", "fig.", "eq.", "no.", "dr.", "mr.", "mrs.", "ms.", "st."};

/// The punctuation run text[i, j), whose last terminal character sits at p,
/// ends a sentence unless one of these rules fires, checked in order.
inline bool is_boundary(std::string_view text, std::size_t i, std::size_t p, std::size_t j) {
  auto digit = [&](std::size_t k) { return k < text.size() && std::isdigit(static_cast<unsigned char>(text[k])); };
  // 1. decimal point: digit '.' digit
  if (text[p] == '.' && p == i && j == p + 1 && i > 0 && digit(i - 1) && digit(j)) return false;
  // 2. allowlisted abbreviation ending at this '.'
  if (text[p] == '.') {
    std::size_t w = p;
    while (w > 0 && !is_ws(text[w - 1])) --w;
    while (w < p && (text[w] == '(' || text[w] == '"' || text[w] == '\'')) ++w;
    std::string word(text.substr(w, p + 1 - w));
    std::transform(word.begin(), word.end(), word.begin(), [](unsigned char c) { return std::tolower(c); });
    for (auto abbr : kAbbreviations)
      if (word == abbr) return false;
  }
  // 3. punctuation glued to the next word ("x.y")
  if (j < text.size() && !is_ws(text[j])) return false;
  return true;
}

}  // namespace detail

/// Byte offsets where sentences end (exclusive), last one = text.size().
inline std::vector<std::size_t> sentence_ends(std::string_view text) {
  std::vector<std::size_t> ends;
  std::size_t i = 0;
  while (i < text.size()) {
    if (text[i] == '\n') {
      std::size_t j = i;
      while (j < text.size() && text[j] == '\n') ++j;
      ends.push_back(j);
      i = j;
      continue;
    }
    if (detail::is_terminal(text[i])) {
      std::size_t j = i;
      while (j < text.size() && detail::is_terminal(text[j])) ++j;
      const std::size_t p = j - 1;
      while (j < text.size() && detail::is_closer(text[j])) ++j;
      if (detail::is_boundary(text, i, p, j)) ends.push_back(j);
      i = j;
      continue;
    }
    ++i;
  }
  // A whitespace-only tail joins the last sentence.
  const std::size_t prev = ends.empty() ? 0 : ends.back();
  const bool blank_tail = std::all_of(text.begin() + static_cast<std::ptrdiff_t>(prev), text.end(), detail::is_ws);
  if (!ends.empty() && blank_tail) ends.back() = text.size();
  else if (ends.empty() || ends.back() != text.size()) ends.push_back(text.size());
  return ends;
}

/// Sentences of raw text; spans partition the bytes in order.
inline std::vector<SentenceSpan> segment_text(std::string_view text) {
  if (text.empty()) throw ValidationError("cot", "cannot segment an empty CoT");
  std::vector<SentenceSpan> out;
  std::size_t begin = 0;
  for (std::size_t end : sentence_ends(text)) {
    SentenceSpan s;
    s.index = static_cast<int>(out.size()) + 1;
    s.begin = begin;
    s.end = end;
    s.text = std::string(text.substr(begin, end - begin));
    out.push_back(std::move(s));
    begin = end;
  }
  return out;
}

inline std::string cot_text(const std::vector<StepRecord>& steps) {
  std::string text;
  for (const auto& s : steps) text += s.token;
  return text;
}

/// Sentences aligned to whole tokens: a sentence ends after the token that
/// holds its last byte.
inline std::vector<SentenceSpan> segment_sentences(std::string_view cot, const std::vector<StepRecord>& steps) {
  if (steps.empty()) throw ValidationError("cot", "cannot segment an empty CoT");
  std::vector<std::size_t> token_end;
  std::size_t offset = 0;
  for (const auto& s : steps) token_end.push_back(offset += s.token.size());
  if (offset != cot.size()) throw ValidationError("cot", "text does not match the step tokens");

  std::vector<std::size_t> cut_after;  // token indices
  for (std::size_t e : sentence_ends(cot)) {
    if (e == 0) continue;
    auto it = std::lower_bound(token_end.begin(), token_end.end(), e);
    const auto k = static_cast<std::size_t>(it - token_end.begin());
    if (cut_after.empty() || cut_after.back() != k) cut_after.push_back(k);
  }
  if (cut_after.empty() || cut_after.back() != steps.size() - 1) cut_after.push_back(steps.size() - 1);

  std::vector<SentenceSpan> out;
  std::size_t first = 0;
  for (std::size_t k : cut_after) {
    SentenceSpan s;
    s.index = static_cast<int>(out.size()) + 1;
    s.first_t = steps[first].t;
    s.last_t = steps[k].t;
    s.begin = first == 0 ? 0 : token_end[first - 1];
    s.end = token_end[k];
    s.text = std::string(cot.substr(s.begin, s.end - s.begin));
    out.push_back(std::move(s));
    first = k + 1;
  }
  return out;
}

inline std::vector<SentenceSpan> segment_sentences(const std::vector<StepRecord>& steps) {
  return segment_sentences(cot_text(steps), steps);
}

// ---------------------------------------------------------------------------
// Probe providers
// ---------------------------------------------------------------------------

/// Forced early-stop answer after the prefix ending at token t.
class ProbeProvider {
 public:
  virtual ~ProbeProvider() = default;
  virtual AnswerId forced_answer(const TraceRecord& trace, int t) = 0;
  /// How the answers were decoded, copied into the output metadata.
  virtual std::string decoding() const { return "recorded"; }
};

/// Answers from the trace's own probe records.
class ReplayProbeProvider final : public ProbeProvider {
 public:
  AnswerId forced_answer(const TraceRecord& trace, int t) override {
    if (const auto* p = trace.probe_at(t)) return p->forced_answer;
    throw ValidationError("probes", "no recorded probe at t=" + std::to_string(t));
  }
};

// ---------------------------------------------------------------------------
// Stop insertion
// ---------------------------------------------------------------------------

enum class SftSource { original, hint_corrected };

inline std::string_view to_string(SftSource s) { return s == SftSource::original ? "original" : "hint-corrected"; }

struct ProbeFailure {
  int sentence = 0;
  int t = 0;
  std::string message;
};

struct StopAnnotatedText {
  std::string text;
  std::vector<int> stop_sentences;  // 1-based sentence indices
  std::vector<int> stop_steps;      // token index each marker follows
  SftSource source = SftSource::original;
  std::vector<ProbeFailure> failures;
};

inline std::string remove_stops(std::string_view text) {
  std::string out;
  std::size_t i = 0;
  for (std::size_t hit; (hit = text.find(kStopMarker, i)) != std::string_view::npos; i = hit + kStopMarker.size())
    out.append(text.substr(i, hit - i));
  out.append(text.substr(i));
  return out;
}

/// Inserts <stop> after each of the first `max_stops` sentences (final one
/// excluded) whose forced answer equals the trace's final answer.
inline StopAnnotatedText insert_stops(const TraceRecord& trace, ProbeProvider& provider,
                                      SftSource source = SftSource::original, int max_stops = kMaxStops) {
  StopAnnotatedText out;
  out.source = source;
  if (trace.steps.empty()) return out;
  const std::string cot = cot_text(trace.steps);
  if (cot.find(kStopMarker) != std::string::npos)
    throw ValidationError("cot", "trace " + trace.trace_id + " already contains the <stop> marker");
  const auto spans = segment_sentences(cot, trace.steps);
  for (std::size_t j = 0; j + 1 < spans.size() && static_cast<int>(out.stop_steps.size()) < max_stops; ++j) {
    const int t = spans[j].last_t;
    AnswerId answer;
    try {
      answer = provider.forced_answer(trace, t);
    } catch (const Error& e) {
      out.failures.push_back({spans[j].index, t, e.what()});
      continue;
    }
    if (answer.known() && answer == trace.final_answer) {
      out.stop_sentences.push_back(spans[j].index);
      out.stop_steps.push_back(t);
    }
  }
  std::size_t next = 0;
  for (const auto& s : trace.steps) {
    out.text += s.token;
    if (next < out.stop_steps.size() && out.stop_steps[next] == s.t) {
      out.text += kStopMarker;
      ++next;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Hint augmentation
// ---------------------------------------------------------------------------

inline std::string hint_text(const AnswerId& gold) { return "Wait, the correct answer is " + gold.raw; }

struct HintRequest {
  std::string trace_id;
  std::string prompt;
  std::string context;  // <think> y </think>
  std::string hint;
  AnswerId gold;

  /// x_c as sent to the generator.
  std::string continuation_input() const { return prompt + context + hint; }
};

/// nullopt when the trace already ends on the gold answer.
inline std::optional<HintRequest> hint_augment(const TraceRecord& trace, const std::optional<AnswerId>& gold,
                                               const std::string& prompt) {
  if (!gold || !gold->known()) throw ValidationError("gold_answer", "hint augmentation needs a gold answer");
  if (trace.final_answer == *gold) return std::nullopt;
  HintRequest r;
  r.trace_id = trace.trace_id;
  r.prompt = prompt;
  r.context = std::string(kThinkOpen) + cot_text(trace.steps) + std::string(kThinkClose);
  r.hint = hint_text(*gold);
  r.gold = *gold;
  return r;
}

inline std::optional<HintRequest> hint_augment(const TraceRecord& trace, const std::string& prompt) {
  return hint_augment(trace, trace.gold_answer, prompt);
}

// ---------------------------------------------------------------------------
// Dataset assembly
// ---------------------------------------------------------------------------

struct SftRow {
  std::string trace_id;
  std::string prompt;
  StopAnnotatedText annotated;
  std::string final_answer;
};

struct SftBuild {
  std::vector<SftRow> rows;
  std::vector<HintRequest> hint_requests;
};

/// Prompt text for a trace: the mapped prompt, else the trace id.
inline std::string prompt_for(const std::map<std::string, std::string>& prompts, const std::string& trace_id) {
  auto it = prompts.find(trace_id);
  return it == prompts.end() ? trace_id : it->second;
}

/// Correct (or ungraded) traces become rows; wrong ones become hint requests.
/// `corrected` holds continuations generated from earlier hint requests.
inline SftBuild build_sft(const std::vector<TraceRecord>& corpus, ProbeProvider& provider,
                          const std::map<std::string, std::string>& prompts = {},
                          const std::vector<TraceRecord>& corrected = {}) {
  SftBuild out;
  for (const auto& tr : corpus) {
    const std::string prompt = prompt_for(prompts, tr.trace_id);
    if (tr.gold_answer) {
      if (auto req = hint_augment(tr, prompt)) {
        out.hint_requests.push_back(std::move(*req));
        continue;
      }
    }
    out.rows.push_back({tr.trace_id, prompt, insert_stops(tr, provider), tr.final_answer.raw});
  }
  for (const auto& tr : corrected)
    out.rows.push_back({tr.trace_id, prompt_for(prompts, tr.trace_id),
                        insert_stops(tr, provider, SftSource::hint_corrected), tr.final_answer.raw});
  return out;
}

inline nlohmann::json to_json(const SftRow& r, const std::string& decoding = "recorded") {
  return {{"prompt", r.prompt},
          {"annotated_cot", r.annotated.text},
          {"final_answer", r.final_answer},
          {"source", std::string(to_string(r.annotated.source))},
          {"trace_id", r.trace_id},
          {"stop_steps", r.annotated.stop_steps},
          {"probe_decoding", decoding}};
}

inline nlohmann::json to_json(const HintRequest& r) {
  return {{"trace_id", r.trace_id},
          {"prompt", r.prompt},
          {"context", r.context},
          {"hint", r.hint},
          {"gold_answer", r.gold.raw},
          {"continuation_input", r.continuation_input()}};
}

}  // namespace cotstop
