#pragma once

// Recorded generation traces: domain types, JSONL ingestion and validation.
//
// A trace file is UTF-8 JSON lines. A "meta" line opens a trace; the "step"
// and "probe" lines that follow belong to it until the next "meta" line.

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "cotstop/canonical.hpp"
#include "cotstop/errors.hpp"

namespace cotstop {

struct TopKEntry {
  std::string token;
  double logprob = 0.0;
  friend bool operator==(const TopKEntry&, const TopKEntry&) = default;
};

struct StepRecord {
  int t = 0;  // 1-based
  std::string token;
  double chosen_logprob = 0.0;
  std::vector<TopKEntry> topk;
  bool is_stop_token = false;
  int sentence_id = 0;
  bool logprobs_missing = false;  // transport delivered no logprobs for this token
  friend bool operator==(const StepRecord&, const StepRecord&) = default;
};

struct ProbeRecord {
  int t = 0;
  AnswerId forced_answer;
  /// Per-token log-probs inside the elicited answer span; nullopt = absent.
  std::optional<std::vector<double>> answer_span_logprobs;
  double progress_fraction = 0.0;
  /// Exported summary used when the span is absent.
  std::optional<double> avg_logprob;
  std::optional<int> answer_len;
  /// Tokens spent eliciting this probe (0 for offline corpora).
  int cost_tokens = 0;
  friend bool operator==(const ProbeRecord&, const ProbeRecord&) = default;
};

struct TraceRecord {
  std::string trace_id;
  AnswerSet answer_set;
  std::optional<AnswerId> gold_answer;
  AnswerId final_answer;
  int cot_length = 0;  // ℓ
  std::vector<StepRecord> steps;
  std::vector<ProbeRecord> probes;
  std::vector<int> stop_proposals;
  bool budget_exhausted = false;

  const ProbeRecord* probe_at(int t) const {
    auto it = std::lower_bound(probes.begin(), probes.end(), t,
                               [](const ProbeRecord& p, int v) { return p.t < v; });
    return (it != probes.end() && it->t == t) ? &*it : nullptr;
  }

  friend bool operator==(const TraceRecord&, const TraceRecord&) = default;
};

namespace detail {

inline void require(bool ok, const std::string& field, const std::string& what, std::size_t line) {
  if (!ok) throw ValidationError(field, what, line);
}

inline void validate_step(const StepRecord& s, std::size_t line) {
  require(s.t >= 1, "step.t", "must be >= 1", line);
  require(std::isfinite(s.chosen_logprob) && s.chosen_logprob <= 0.0, "step.chosen_logprob",
          "must be finite and <= 0", line);
  for (std::size_t i = 0; i < s.topk.size(); ++i) {
    const double lp = s.topk[i].logprob;
    require(!std::isnan(lp) && lp <= 0.0, "step.topk", "log-probs must be <= 0", line);
    if (i > 0) require(s.topk[i - 1].logprob >= lp, "step.topk", "must be sorted by logprob descending", line);
  }
}

inline void validate_probe(const ProbeRecord& p, std::size_t line) {
  require(p.t >= 1, "probe.t", "must be >= 1", line);
  require(p.progress_fraction >= 0.0 && p.progress_fraction <= 1.0, "probe.progress_fraction",
          "must lie in [0,1]", line);
  if (p.answer_span_logprobs) {
    require(!p.answer_span_logprobs->empty(), "probe.answer_span_logprobs",
            "present but empty (use null to mark absent)", line);
    for (double lp : *p.answer_span_logprobs)
      require(std::isfinite(lp) && lp <= 0.0, "probe.answer_span_logprobs", "log-probs must be finite and <= 0",
              line);
  } else {
    require(p.avg_logprob.has_value() && p.answer_len.has_value(), "probe.answer_span_logprobs",
            "absent span requires avg_logprob and answer_len", line);
    require(std::isfinite(*p.avg_logprob) && *p.avg_logprob <= 0.0, "probe.avg_logprob", "must be finite and <= 0",
            line);
    require(*p.answer_len >= 1, "probe.answer_len", "must be >= 1", line);
  }
}

struct RecordLines {
  std::size_t meta = 0;
  std::vector<std::size_t> steps;
  std::vector<std::size_t> probes;
};

inline void validate_trace(const TraceRecord& tr, const RecordLines* lines) {
  const std::size_t meta_line = lines ? lines->meta : 0;
  auto step_line = [&](std::size_t i) { return lines ? lines->steps[i] : 0; };
  auto probe_line = [&](std::size_t i) { return lines ? lines->probes[i] : 0; };

  require(!tr.trace_id.empty(), "trace_id", "must be non-empty", meta_line);
  require(!tr.answer_set.empty(), "answer_set", "must be non-empty", meta_line);
  require(tr.cot_length >= 0, "cot_length", "must be >= 0", meta_line);
  require(tr.final_answer.known() && tr.final_answer.id < static_cast<int>(tr.answer_set.size()), "final_answer",
          "must be a member of answer_set", meta_line);
  if (tr.gold_answer)
    require(tr.gold_answer->known() && tr.gold_answer->id < static_cast<int>(tr.answer_set.size()), "gold_answer",
            "must be a member of answer_set", meta_line);

  for (std::size_t i = 0; i < tr.steps.size(); ++i) {
    const auto& s = tr.steps[i];
    validate_step(s, step_line(i));
    if (i == 0)
      require(s.t == 1, "step.t", "first step must have t = 1", step_line(i));
    else
      require(s.t > tr.steps[i - 1].t, "step.t", "must be strictly increasing", step_line(i));
    require(s.t <= tr.cot_length, "step.t", "exceeds cot_length", step_line(i));
  }
  for (std::size_t i = 0; i < tr.probes.size(); ++i) {
    const auto& p = tr.probes[i];
    validate_probe(p, probe_line(i));
    require(p.t <= tr.cot_length, "probe.t", "probe.t exceeds cot_length", probe_line(i));
    if (i > 0) require(p.t > tr.probes[i - 1].t, "probe.t", "probes must be sorted by t with unique t", probe_line(i));
    require(p.forced_answer.id < static_cast<int>(tr.answer_set.size()), "probe.forced_answer",
            "must be a member of answer_set or the unknown sentinel", probe_line(i));
  }
  for (std::size_t i = 0; i < tr.stop_proposals.size(); ++i) {
    const int t = tr.stop_proposals[i];
    require(t >= 1 && t <= tr.cot_length, "stop_proposals", "proposal exceeds cot_length", meta_line);
    if (i > 0) require(t > tr.stop_proposals[i - 1], "stop_proposals", "must be strictly increasing", meta_line);
  }
}

inline const nlohmann::json& field(const nlohmann::json& j, const char* name, std::size_t line) {
  auto it = j.find(name);
  if (it == j.end()) throw ValidationError(name, "missing field", line);
  return *it;
}

inline int get_int(const nlohmann::json& j, const char* name, std::size_t line) {
  const auto& v = field(j, name, line);
  if (!v.is_number_integer()) throw ValidationError(name, "must be an integer", line);
  const auto x = v.get<long long>();
  if (x < std::numeric_limits<int>::min() || x > std::numeric_limits<int>::max())
    throw ValidationError(name, "out of range", line);
  return static_cast<int>(x);
}

inline double get_real(const nlohmann::json& v, const char* name, std::size_t line) {
  if (!v.is_number()) throw ValidationError(name, "must be a number", line);
  return v.get<double>();
}

inline std::string get_string(const nlohmann::json& j, const char* name, std::size_t line) {
  const auto& v = field(j, name, line);
  if (!v.is_string()) throw ValidationError(name, "must be a string", line);
  return v.get<std::string>();
}

inline bool get_bool(const nlohmann::json& j, const char* name, bool fallback, std::size_t line) {
  auto it = j.find(name);
  if (it == j.end()) return fallback;
  if (!it->is_boolean()) throw ValidationError(name, "must be a boolean", line);
  return it->get<bool>();
}

inline AnswerId answer_field(const TraceRecord& tr, const nlohmann::json& v, const char* name, std::size_t line,
                             bool allow_unknown) {
  if (!v.is_string()) throw ValidationError(name, "must be a string", line);
  const auto text = v.get<std::string>();
  if (allow_unknown && text.empty()) return AnswerId::unknown();
  auto id = tr.answer_set.lookup(text);
  if (!id.known()) throw ValidationError(name, "\"" + text + "\" is not in answer_set", line);
  return id;
}

inline StepRecord parse_step(const nlohmann::json& j, std::size_t line) {
  StepRecord s;
  s.t = get_int(j, "t", line);
  s.token = get_string(j, "token", line);
  s.chosen_logprob = get_real(field(j, "chosen_logprob", line), "chosen_logprob", line);
  const auto& topk = field(j, "topk", line);
  if (!topk.is_array()) throw ValidationError("topk", "must be an array", line);
  for (const auto& e : topk) {
    if (!e.is_array() || e.size() != 2 || !e[0].is_string())
      throw ValidationError("topk", "entries must be [token, logprob]", line);
    s.topk.push_back({e[0].get<std::string>(), get_real(e[1], "topk", line)});
  }
  s.is_stop_token = get_bool(j, "is_stop_token", false, line);
  s.sentence_id = j.contains("sentence_id") ? get_int(j, "sentence_id", line) : 0;
  s.logprobs_missing = get_bool(j, "logprobs_missing", false, line);
  return s;
}

inline ProbeRecord parse_probe(const TraceRecord& tr, const nlohmann::json& j, std::size_t line) {
  ProbeRecord p;
  p.t = get_int(j, "t", line);
  p.forced_answer = answer_field(tr, field(j, "forced_answer", line), "forced_answer", line, true);
  if (auto it = j.find("answer_span_logprobs"); it != j.end() && !it->is_null()) {
    if (!it->is_array()) throw ValidationError("answer_span_logprobs", "must be an array or null", line);
    std::vector<double> span;
    for (const auto& v : *it) span.push_back(get_real(v, "answer_span_logprobs", line));
    p.answer_span_logprobs = std::move(span);
  }
  p.progress_fraction = get_real(field(j, "progress_fraction", line), "progress_fraction", line);
  if (auto it = j.find("avg_logprob"); it != j.end() && !it->is_null())
    p.avg_logprob = get_real(*it, "avg_logprob", line);
  if (auto it = j.find("answer_len"); it != j.end() && !it->is_null()) p.answer_len = get_int(j, "answer_len", line);
  if (j.contains("cost_tokens")) p.cost_tokens = get_int(j, "cost_tokens", line);
  return p;
}

inline TraceRecord parse_meta(const nlohmann::json& j, std::size_t line) {
  TraceRecord tr;
  tr.trace_id = get_string(j, "trace_id", line);
  TaskKind kind = TaskKind::closed;
  if (j.contains("task_kind")) {
    try {
      kind = task_kind_from_string(get_string(j, "task_kind", line));
    } catch (const ValidationError& e) {
      throw ValidationError("task_kind", e.what(), line);
    }
  }
  const auto& answers = field(j, "answer_set", line);
  if (!answers.is_array()) throw ValidationError("answer_set", "must be an array", line);
  std::vector<std::string> raw;
  for (const auto& a : answers) {
    if (!a.is_string()) throw ValidationError("answer_set", "entries must be strings", line);
    raw.push_back(a.get<std::string>());
  }
  try {
    tr.answer_set = AnswerSet(kind, raw);
  } catch (const ValidationError& e) {
    throw ValidationError("answer_set", e.what(), line);
  }
  if (auto it = j.find("gold_answer"); it != j.end() && !it->is_null())
    tr.gold_answer = answer_field(tr, *it, "gold_answer", line, false);
  tr.final_answer = answer_field(tr, field(j, "final_answer", line), "final_answer", line, false);
  tr.cot_length = get_int(j, "cot_length", line);
  if (auto it = j.find("stop_proposals"); it != j.end()) {
    if (!it->is_array()) throw ValidationError("stop_proposals", "must be an array", line);
    for (const auto& v : *it) {
      if (!v.is_number_integer()) throw ValidationError("stop_proposals", "entries must be integers", line);
      tr.stop_proposals.push_back(v.get<int>());
    }
  }
  tr.budget_exhausted = get_bool(j, "budget_exhausted", false, line);
  return tr;
}

}  // namespace detail

/// Validates every TraceRecord invariant; throws ValidationError naming the field.
inline void validate(const TraceRecord& trace) { detail::validate_trace(trace, nullptr); }

/// Proposals implied by the step stream (steps flagged as stop tokens).
inline std::vector<int> proposals_from_steps(const TraceRecord& trace) {
  std::vector<int> out;
  for (const auto& s : trace.steps)
    if (s.is_stop_token) out.push_back(s.t);
  return out;
}

/// Streaming single-pass reader. Call next() until it returns nullopt.
class TraceReader {
 public:
  explicit TraceReader(std::istream& in) : in_(in) {}

  std::optional<TraceRecord> next() {
    std::optional<TraceRecord> current;
    detail::RecordLines lines;
    if (pending_) {
      current = std::move(pending_->first);
      lines.meta = pending_->second;
      pending_.reset();
    }
    std::string text;
    while (std::getline(in_, text)) {
      ++line_no_;
      if (std::all_of(text.begin(), text.end(), [](unsigned char c) { return std::isspace(c); })) continue;
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(text);
      } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("malformed JSON: ") + e.what(), line_no_);
      }
      if (!j.is_object()) throw ParseError("expected a JSON object", line_no_);
      const std::string kind = detail::get_string(j, "kind", line_no_);
      if (kind == "meta") {
        auto meta = detail::parse_meta(j, line_no_);
        if (current) {
          pending_.emplace(std::move(meta), line_no_);
          return finish(std::move(*current), lines);
        }
        current = std::move(meta);
        lines.meta = line_no_;
      } else if (kind == "step") {
        if (!current) throw ValidationError("kind", "step line before any meta line", line_no_);
        current->steps.push_back(detail::parse_step(j, line_no_));
        lines.steps.push_back(line_no_);
      } else if (kind == "probe") {
        if (!current) throw ValidationError("kind", "probe line before any meta line", line_no_);
        current->probes.push_back(detail::parse_probe(*current, j, line_no_));
        lines.probes.push_back(line_no_);
      } else {
        throw ValidationError("kind", "unknown line kind \"" + kind + "\"", line_no_);
      }
    }
    if (current) return finish(std::move(*current), lines);
    return std::nullopt;
  }

 private:
  TraceRecord finish(TraceRecord tr, const detail::RecordLines& lines) {
    if (tr.stop_proposals.empty()) tr.stop_proposals = proposals_from_steps(tr);
    detail::validate_trace(tr, &lines);
    return tr;
  }

  std::istream& in_;
  std::size_t line_no_ = 0;
  std::optional<std::pair<TraceRecord, std::size_t>> pending_;
};

inline std::vector<TraceRecord> parse_trace_file(std::istream& in) {
  std::vector<TraceRecord> out;
  TraceReader reader(in);
  while (auto tr = reader.next()) out.push_back(std::move(*tr));
  return out;
}

inline std::vector<TraceRecord> parse_trace_string(const std::string& text) {
  std::istringstream in(text);
  return parse_trace_file(in);
}

inline void write_trace(std::ostream& out, const TraceRecord& tr) {
  using nlohmann::json;
  json meta = {{"kind", "meta"},
               {"trace_id", tr.trace_id},
               {"task_kind", std::string(to_string(tr.answer_set.kind()))},
               {"answer_set", tr.answer_set.values()},
               {"gold_answer", tr.gold_answer ? json(tr.gold_answer->raw) : json(nullptr)},
               {"final_answer", tr.final_answer.raw},
               {"cot_length", tr.cot_length},
               {"stop_proposals", tr.stop_proposals}};
  if (tr.budget_exhausted) meta["budget_exhausted"] = true;
  out << meta.dump() << '\n';
  for (const auto& s : tr.steps) {
    json topk = json::array();
    for (const auto& e : s.topk) topk.push_back(json::array({e.token, e.logprob}));
    json j = {{"kind", "step"},          {"t", s.t},
              {"token", s.token},        {"chosen_logprob", s.chosen_logprob},
              {"topk", std::move(topk)}, {"is_stop_token", s.is_stop_token},
              {"sentence_id", s.sentence_id}};
    if (s.logprobs_missing) j["logprobs_missing"] = true;
    out << j.dump() << '\n';
  }
  for (const auto& p : tr.probes) {
    json j = {{"kind", "probe"},
              {"t", p.t},
              {"forced_answer", p.forced_answer.raw},
              {"answer_span_logprobs", p.answer_span_logprobs ? json(*p.answer_span_logprobs) : json(nullptr)},
              {"progress_fraction", p.progress_fraction}};
    if (p.avg_logprob) j["avg_logprob"] = *p.avg_logprob;
    if (p.answer_len) j["answer_len"] = *p.answer_len;
    if (p.cost_tokens) j["cost_tokens"] = p.cost_tokens;
    out << j.dump() << '\n';
  }
}

inline void write_traces(std::ostream& out, const std::vector<TraceRecord>& traces) {
  for (const auto& tr : traces) write_trace(out, tr);
}

inline std::string to_jsonl(const std::vector<TraceRecord>& traces) {
  std::ostringstream out;
  write_traces(out, traces);
  return out.str();
}

/// Index of the entry of `ts` (ascending) nearest to `target`, ties to the
/// earlier one; -1 when `ts` is empty or the best is farther than `max_distance`.
inline int nearest_index(std::span<const int> ts, double target,
                         double max_distance = std::numeric_limits<double>::infinity()) {
  int best = -1;
  double best_d = 0.0;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    const double d = std::abs(static_cast<double>(ts[i]) - target);
    if (best < 0 || d < best_d) {
      best = static_cast<int>(i);
      best_d = d;
    }
  }
  return (best >= 0 && best_d <= max_distance) ? best : -1;
}

inline std::vector<int> probe_steps(const TraceRecord& trace) {
  std::vector<int> ts;
  ts.reserve(trace.probes.size());
  for (const auto& p : trace.probes) ts.push_back(p.t);
  return ts;
}

/// Per-bucket log-probs of the top-k tokens that canonicalize into Ω.
/// Tokens that map to no member of Ω are dropped.
inline std::vector<std::vector<double>> bucket_topk(const StepRecord& step, const AnswerSet& omega) {
  std::vector<std::vector<double>> buckets(omega.size());
  for (const auto& e : step.topk) {
    const auto id = omega.lookup(e.token);
    if (id.known()) buckets[static_cast<std::size_t>(id.id)].push_back(e.logprob);
  }
  return buckets;
}

}  // namespace cotstop
