#pragma once

// Live early stopping against a streaming completions endpoint. The wire is
// hidden behind Transport; ScriptedTransport replays a fixed script for tests
// and the HTTP transport lives in gateway_http.hpp.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "cotstop/controller.hpp"
#include "cotstop/errors.hpp"
#include "cotstop/features.hpp"
#include "cotstop/sft.hpp"
#include "cotstop/trace.hpp"

namespace cotstop {

struct Markers {
  std::string think_open = "<think>";
  std::string stop = "<stop>";
  std::string think_close = "</think>";
};

struct GenerationRequest {
  std::string endpoint;
  std::string model;
  std::string prompt;
  double temperature = 0.6;
  int top_k = 20;
  double top_p = 0.95;
  double repetition_penalty = 1.2;
  int top_logprobs = 20;
  int max_tokens = 8192;       // thinking budget when the policy sets none
  int probe_max_tokens = 32;   // forced-conclusion length
  Markers markers;
  AnswerSet answer_set;
  std::optional<std::string> gold;

  void validate() const {
    if (top_logprobs < 1) throw ValidationError("top_logprobs", "bucketing needs at least 1 top log-prob");
    if (max_tokens < 1) throw ValidationError("max_tokens", "must be >= 1");
    if (probe_max_tokens < 1) throw ValidationError("probe_max_tokens", "must be >= 1");
    if (answer_set.empty()) throw ValidationError("answer_set", "live sessions need a non-empty answer set");
    if (!(temperature >= 0)) throw ValidationError("temperature", "must be >= 0");
    if (markers.think_close.empty() || markers.stop.empty()) throw ValidationError("markers", "must be non-empty");
  }
};

/// One streamed token. `logprob` is absent when the server sent no log-probs.
struct StreamEvent {
  std::string text;
  std::optional<double> logprob;
  std::vector<TopKEntry> top;
};

class TokenStream {
 public:
  virtual ~TokenStream() = default;
  /// Next token, nullopt at end of stream. Throws TransportError.
  virtual std::optional<StreamEvent> next() = 0;
  /// Asks the server to stop. Tokens already in flight may still arrive.
  virtual void cancel() = 0;
};

struct CompletionRequest {
  std::string prompt;
  int max_tokens = 32;
  double temperature = 0.0;
  int prefix_tokens = 0;  // reasoning tokens in the prompt; bookkeeping only
};

struct TokenLogprob {
  std::string text;
  double logprob = 0.0;
};

struct Completion {
  std::string text;
  std::vector<TokenLogprob> tokens;  // empty when the server sent no log-probs
  int completion_tokens = 0;
};

class Transport {
 public:
  virtual ~Transport() = default;
  virtual std::unique_ptr<TokenStream> open_stream(const GenerationRequest& request) = 0;
  virtual Completion complete(const CompletionRequest& request) = 0;
};

// ---------------------------------------------------------------------------
// Answer extraction
// ---------------------------------------------------------------------------

struct ExtractedAnswer {
  AnswerId answer;
  std::size_t begin = 0;  // byte range of the answer text in the completion
  std::size_t end = 0;
  bool parsed = false;
};

namespace detail {

inline std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
  return out;
}

inline std::pair<std::size_t, std::size_t> trim_range(std::string_view s, std::size_t b, std::size_t e) {
  while (b < e && is_ws(s[b])) ++b;
  while (e > b && (is_ws(s[e - 1]) || s[e - 1] == '.' || s[e - 1] == ',')) --e;
  return {b, e};
}

inline std::optional<ExtractedAnswer> try_range(std::string_view text, std::size_t b, std::size_t e,
                                                const AnswerSet& omega) {
  auto [tb, te] = trim_range(text, b, e);
  if (tb >= te) return std::nullopt;
  if (auto id = omega.lookup(text.substr(tb, te - tb)); id.known()) return ExtractedAnswer{id, tb, te, true};
  // closed tasks: the first word alone ("B because ...")
  std::size_t we = tb;
  while (we < te && !is_ws(text[we])) ++we;
  if (we < te)
    if (auto id = omega.lookup(text.substr(tb, we - tb)); id.known()) return ExtractedAnswer{id, tb, we, true};
  return std::nullopt;
}

}  // namespace detail

/// Answer in a forced conclusion: \boxed{..}, then "answer is"/"answer:",
/// then the whole text, then (closed tasks) the last bare option letter.
inline ExtractedAnswer extract_answer(std::string_view text, const AnswerSet& omega) {
  if (auto box = text.rfind("\\boxed{"); box != std::string_view::npos) {
    const std::size_t b = box + 7;
    const std::size_t e = text.find('}', b);
    if (e != std::string_view::npos)
      if (auto r = detail::try_range(text, b, e, omega)) return *r;
  }
  const std::string low = detail::lower(text);
  for (std::string_view cue : {"answer is", "answer:"}) {
    const auto at = low.rfind(cue);
    if (at == std::string::npos) continue;
    const std::size_t b = at + cue.size();
    std::size_t e = text.find('\n', b);
    if (e == std::string_view::npos) e = text.size();
    for (std::size_t k = b; k + 1 < e; ++k)
      if (detail::is_terminal(text[k]) && detail::is_ws(text[k + 1])) {
        e = k;
        break;
      }
    if (auto r = detail::try_range(text, b, e, omega)) return *r;
  }
  if (auto id = omega.lookup(text); id.known()) {
    auto [b, e] = detail::trim_range(text, 0, text.size());
    return {id, b, e, true};
  }
  if (omega.kind() == TaskKind::closed) {
    std::size_t e = text.size();
    while (e > 0) {
      while (e > 0 && !std::isalnum(static_cast<unsigned char>(text[e - 1]))) --e;
      std::size_t b = e;
      while (b > 0 && std::isalnum(static_cast<unsigned char>(text[b - 1]))) --b;
      if (e - b == 1 && std::isupper(static_cast<unsigned char>(text[b])))
        if (auto id = omega.lookup(text.substr(b, 1)); id.known()) return {id, b, e, true};
      e = b;
    }
  }
  return {};
}

// ---------------------------------------------------------------------------
// Forced conclusions
// ---------------------------------------------------------------------------

struct ProbeOutcome {
  ProbeRecord probe;
  bool parsed = false;            // false: unknown sentinel
  bool logprobs_missing = false;  // avg_logprob set to 0 as a placeholder
  bool failed = false;            // transport failed twice
  int attempts = 0;
  std::string error;
};

/// prompt + [<think>] + y_{1..t} + </think>, decoded greedily. One retry on a
/// transient transport error; a second failure yields an unknown probe.
inline ProbeOutcome force_conclusion(Transport& transport, const GenerationRequest& request, bool think_in_output,
                                     std::string_view prefix, int t) {
  CompletionRequest cr;
  cr.prompt = request.prompt + (think_in_output ? request.markers.think_open : std::string()) + std::string(prefix) +
              request.markers.think_close;
  cr.max_tokens = request.probe_max_tokens;
  cr.temperature = 0.0;
  cr.prefix_tokens = t;

  ProbeOutcome out;
  out.probe.t = t;
  std::optional<Completion> reply;
  for (int attempt = 1; attempt <= 2 && !reply; ++attempt) {
    out.attempts = attempt;
    try {
      reply = transport.complete(cr);
    } catch (const TransportError& e) {
      out.error = e.what();
      if (!e.transient()) break;
    }
  }
  if (!reply) {
    out.failed = true;
    out.probe.forced_answer = AnswerId::unknown();
    out.probe.avg_logprob = 0.0;
    out.probe.answer_len = 1;
    out.logprobs_missing = true;
    return out;
  }
  const auto ex = extract_answer(reply->text, request.answer_set);
  out.parsed = ex.parsed;
  out.probe.forced_answer = ex.answer;
  out.probe.cost_tokens = reply->completion_tokens > 0 ? reply->completion_tokens
                                                       : static_cast<int>(reply->tokens.size());
  if (reply->tokens.empty()) {
    out.logprobs_missing = true;
    out.probe.avg_logprob = 0.0;
    out.probe.answer_len = 1;
    return out;
  }
  std::vector<double> span;
  std::size_t offset = 0;
  for (const auto& tok : reply->tokens) {
    const std::size_t b = offset, e = offset + tok.text.size();
    offset = e;
    // empty tokens right after the answer text belong to its span
    const bool overlaps = !ex.parsed || (b < ex.end && e > ex.begin) || (b == e && b > ex.begin && b <= ex.end);
    if (overlaps && std::isfinite(tok.logprob)) span.push_back(std::min(0.0, tok.logprob));
  }
  if (span.empty())
    for (const auto& tok : reply->tokens)
      if (std::isfinite(tok.logprob)) span.push_back(std::min(0.0, tok.logprob));
  if (span.empty()) {
    out.logprobs_missing = true;
    out.probe.avg_logprob = 0.0;
    out.probe.answer_len = 1;
  } else {
    out.probe.answer_span_logprobs = std::move(span);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Stream capture
// ---------------------------------------------------------------------------

namespace detail {

inline std::string_view trim_view(std::string_view s) {
  while (!s.empty() && is_ws(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_ws(s.back())) s.remove_suffix(1);
  return s;
}

/// Turns stream events into StepRecords with 1-based t and sentence ids.
class StepBuilder {
 public:
  StepBuilder(const Markers& markers, int top_logprobs) : markers_(markers), top_logprobs_(top_logprobs) {}

  StepRecord build(const StreamEvent& ev) {
    StepRecord s;
    s.t = ++t_;
    s.token = ev.text;
    s.sentence_id = sentence_;
    s.is_stop_token = trim_view(ev.text) == markers_.stop;
    if (ev.logprob && std::isfinite(*ev.logprob)) {
      s.chosen_logprob = std::min(0.0, *ev.logprob);
      for (const auto& e : ev.top)
        if (std::isfinite(e.logprob)) s.topk.push_back({e.token, std::min(0.0, e.logprob)});
      std::stable_sort(s.topk.begin(), s.topk.end(),
                       [](const TopKEntry& a, const TopKEntry& b) { return a.logprob > b.logprob; });
      if (static_cast<int>(s.topk.size()) > top_logprobs_) s.topk.resize(static_cast<std::size_t>(top_logprobs_));
    } else {
      s.logprobs_missing = true;
    }
    const auto body = trim_view(ev.text);
    if (ev.text.find('\n') != std::string::npos || (!body.empty() && is_terminal(body.back()))) ++sentence_;
    return s;
  }

 private:
  const Markers& markers_;
  int top_logprobs_;
  int t_ = 0;
  int sentence_ = 0;
};

}  // namespace detail

enum class StreamEnd { think_close, end_of_stream, budget };

struct StreamCapture {
  std::vector<StepRecord> steps;
  std::string conclusion;  // text after </think>
  bool think_in_output = false;
  StreamEnd end = StreamEnd::end_of_stream;
  std::vector<std::string> warnings;
  std::optional<std::string> error;  // partial capture kept
};

/// Reads a whole generation into StepRecords without any stopping.
inline StreamCapture stream_generate(Transport& transport, const GenerationRequest& request) {
  request.validate();
  StreamCapture cap;
  detail::StepBuilder builder(request.markers, request.top_logprobs);
  bool warned = false;
  try {
    auto stream = transport.open_stream(request);
    bool in_conclusion = false;
    while (auto ev = stream->next()) {
      if (in_conclusion) {
        cap.conclusion += ev->text;
        continue;
      }
      if (cap.steps.empty() && !cap.think_in_output && detail::trim_view(ev->text) == request.markers.think_open) {
        cap.think_in_output = true;
        continue;
      }
      if (auto at = ev->text.find(request.markers.think_close); at != std::string::npos) {
        in_conclusion = true;
        cap.end = StreamEnd::think_close;
        cap.conclusion += ev->text.substr(at + request.markers.think_close.size());
        continue;
      }
      cap.steps.push_back(builder.build(*ev));
      if (cap.steps.back().logprobs_missing && !warned) {
        cap.warnings.push_back("stream event without log-probs; evidence features fall back to held state");
        warned = true;
      }
      if (static_cast<int>(cap.steps.size()) >= request.max_tokens) {
        cap.end = StreamEnd::budget;
        stream->cancel();
        break;
      }
    }
  } catch (const TransportError& e) {
    cap.error = e.what();
  }
  return cap;
}

// ---------------------------------------------------------------------------
// Live session
// ---------------------------------------------------------------------------

enum class SessionState { streaming, probing, stopped, exhausted };

inline std::string_view to_string(SessionState s) {
  switch (s) {
    case SessionState::streaming: return "streaming";
    case SessionState::probing: return "probing";
    case SessionState::stopped: return "stopped";
    case SessionState::exhausted: return "exhausted";
  }
  return "?";
}

struct LiveResult {
  StopDecision decision;
  TraceRecord trace;
  std::vector<SessionState> states;  // every state entered, in order
  std::vector<std::string> warnings;
  std::optional<std::string> error;  // set when the session could not complete; trace is partial
  int late_tokens_discarded = 0;
  int probe_requests = 0;
  int max_probes_in_flight = 0;
};

class LiveSession {
 public:
  LiveSession(std::string session_id, GenerationRequest request, StopPolicy policy, StopMode mode,
              const Scorer& scorer, Transport& transport)
      : id_(std::move(session_id)),
        request_(std::move(request)),
        policy_(policy),
        mode_(mode),
        scorer_(scorer),
        transport_(transport) {}

  SessionState state() const noexcept { return state_; }

  LiveResult run() {
    request_.validate();
    policy_.validate();
    LiveResult res;
    states_ = &res.states;
    enter(SessionState::streaming);

    TraceRecord& tr = res.trace;
    tr.trace_id = id_;
    tr.answer_set = request_.answer_set;
    if (request_.gold) tr.gold_answer = tr.answer_set.lookup(*request_.gold);

    StopDecision& d = res.decision;
    d.trace_id = id_;
    d.mode = mode_;

    const int limit = policy_.budget ? std::min(*policy_.budget, request_.max_tokens) : request_.max_tokens;
    const int needed = mode_ == StopMode::lite ? policy_.patience : std::min(policy_.patience, policy_.proposal_window);
    FeatureTracker tracker(tr.answer_set, scorer_.feature_config());
    detail::StepBuilder builder(request_.markers, request_.top_logprobs);
    std::string prefix;
    std::string conclusion;
    bool think_in_output = false, in_conclusion = false, warned = false, budget_hit = false;
    int streak = 0;
    std::size_t window = 0;  // index into proposals of the window being evaluated
    std::vector<int> proposals;
    std::unique_ptr<TokenStream> stream;

    auto evaluate = [&](int t) -> bool {
      enter(SessionState::probing);
      ++res.probe_requests;
      in_flight_ = 1;
      res.max_probes_in_flight = std::max(res.max_probes_in_flight, in_flight_);
      auto out = force_conclusion(transport_, request_, think_in_output, prefix, t);
      in_flight_ = 0;
      note_probe(res, out);
      tr.probes.push_back(out.probe);
      const auto phi = tracker.observe_probe(out.probe);
      const double rho = scorer_.score(phi, out.probe, tr);
      ++d.evaluations;
      d.probe_tokens += out.probe.cost_tokens;
      streak = rho >= policy_.threshold ? streak + 1 : 0;
      if (streak >= needed) {
        d.stopped = true;
        d.stop_step = t;
        d.answer = out.probe.forced_answer;
        d.rho_at_stop = rho;
        d.length = t;
        return true;
      }
      enter(SessionState::streaming);
      return false;
    };

    try {
      stream = transport_.open_stream(request_);
      while (auto ev = stream->next()) {
        if (in_conclusion) {
          conclusion += ev->text;
          continue;
        }
        if (tr.steps.empty() && !think_in_output && detail::trim_view(ev->text) == request_.markers.think_open) {
          think_in_output = true;
          continue;
        }
        if (auto at = ev->text.find(request_.markers.think_close); at != std::string::npos) {
          in_conclusion = true;
          conclusion += ev->text.substr(at + request_.markers.think_close.size());
          continue;
        }
        StepRecord step = builder.build(*ev);
        const int t = step.t;
        if (step.logprobs_missing && !warned) {
          res.warnings.push_back("t=" + std::to_string(t) + ": stream event without log-probs");
          warned = true;
        }
        prefix += step.token;
        tracker.observe_step(step);
        if (step.is_stop_token) proposals.push_back(t);
        tr.steps.push_back(std::move(step));

        bool due = false;
        if (mode_ == StopMode::lite) {
          due = t % policy_.stride == 0;
        } else {
          while (window < proposals.size() && proposals[window] + policy_.proposal_window - 1 < t) {
            ++window;
            streak = 0;
          }
          due = window < proposals.size() && proposals[window] <= t;
        }
        if (due && evaluate(t)) {
          stream->cancel();
          while (stream->next()) ++res.late_tokens_discarded;
          break;
        }
        if (t >= limit) {
          budget_hit = true;
          stream->cancel();
          while (stream->next()) ++res.late_tokens_discarded;
          break;
        }
      }
    } catch (const TransportError& e) {
      res.error = std::string("generation stream failed: ") + e.what();
    }

    tr.cot_length = static_cast<int>(tr.steps.size());
    tr.budget_exhausted = budget_hit;
    for (int p : proposals)
      if (p <= tr.cot_length) tr.stop_proposals.push_back(p);

    if (d.stopped) {
      tr.final_answer = d.answer;
      enter(SessionState::stopped);
    } else {
      enter(SessionState::exhausted);
      resolve_final_answer(res, think_in_output, prefix, conclusion);
      detail::finish_unstopped(d, tr, tr.cot_length, budget_hit);
      if (!tr.final_answer.known()) d.answer = AnswerId::unknown();
    }
    if (d.stopped && !d.answer.known() && !res.error) res.error = "stopped on a probe whose answer could not be parsed";
    for (auto& p : tr.probes)
      p.progress_fraction = tr.cot_length > 0 ? static_cast<double>(p.t) / tr.cot_length : 0.0;
    states_ = nullptr;
    return res;
  }

 private:
  void enter(SessionState s) {
    state_ = s;
    if (states_) states_->push_back(s);
  }

  static void note_probe(LiveResult& res, const ProbeOutcome& out) {
    const std::string at = "t=" + std::to_string(out.probe.t) + ": ";
    if (out.failed) res.warnings.push_back(at + "probe failed after " + std::to_string(out.attempts) + " attempt(s): " + out.error);
    else if (!out.parsed) res.warnings.push_back(at + "forced conclusion had no parseable answer");
    if (!out.failed && out.attempts > 1) res.warnings.push_back(at + "probe succeeded on retry");
    if (out.logprobs_missing && !out.failed) res.warnings.push_back(at + "probe returned no log-probs");
  }

  /// A_ℓ^ES: the probe at ℓ (elicited now if missing), else the natural
  /// conclusion, else the latest parsed probe.
  void resolve_final_answer(LiveResult& res, bool think_in_output, const std::string& prefix,
                            const std::string& conclusion) {
    TraceRecord& tr = res.trace;
    const int ell = tr.cot_length;
    AnswerId final_answer;
    if (!res.error) {
      if (ell > 0 && !tr.probes.empty() && tr.probes.back().t == ell) {
        final_answer = tr.probes.back().forced_answer;
      } else {
        ++res.probe_requests;
        auto out = force_conclusion(transport_, request_, think_in_output, prefix, ell);
        note_probe(res, out);
        if (ell > 0) tr.probes.push_back(out.probe);
        final_answer = out.probe.forced_answer;
      }
    }
    if (!final_answer.known() && !conclusion.empty()) final_answer = extract_answer(conclusion, request_.answer_set).answer;
    for (auto it = tr.probes.rbegin(); !final_answer.known() && it != tr.probes.rend(); ++it)
      final_answer = it->forced_answer;
    tr.final_answer = final_answer;
    if (!final_answer.known() && !res.error) res.error = "no final answer could be elicited";
  }

  std::string id_;
  GenerationRequest request_;
  StopPolicy policy_;
  StopMode mode_;
  const Scorer& scorer_;
  Transport& transport_;
  SessionState state_ = SessionState::streaming;
  std::vector<SessionState>* states_ = nullptr;
  int in_flight_ = 0;
};

inline LiveResult live_stop_session(const std::string& session_id, const GenerationRequest& request,
                                    const StopPolicy& policy, StopMode mode, const Scorer& scorer,
                                    Transport& transport) {
  return LiveSession(session_id, request, policy, mode, scorer, transport).run();
}

// ---------------------------------------------------------------------------
// Scripted transport
// ---------------------------------------------------------------------------

struct ScriptedProbe {
  std::string text;
  std::vector<TokenLogprob> tokens;
  int transient_failures = 0;  // fail this many times before answering
  bool fatal = false;          // fail with a non-transient error
};

struct Script {
  std::vector<StreamEvent> stream;
  std::optional<std::size_t> stream_error_at;  // throw instead of delivering this event
  int late_after_cancel = 0;                   // events still delivered after cancel()
  std::map<int, ScriptedProbe> probes;         // by prefix length t
  ScriptedProbe default_probe;                 // for any other t
};

class ScriptedTransport final : public Transport {
 public:
  explicit ScriptedTransport(Script script) : script_(std::move(script)) {}

  std::unique_ptr<TokenStream> open_stream(const GenerationRequest&) override {
    ++streams_opened_;
    return std::make_unique<Stream>(script_);
  }

  Completion complete(const CompletionRequest& req) override {
    ++in_flight_;
    max_in_flight_ = std::max(max_in_flight_, in_flight_);
    struct Leave {
      int& n;
      ~Leave() { --n; }
    } leave{in_flight_};
    requests_.push_back(req);
    auto it = script_.probes.find(req.prefix_tokens);
    const ScriptedProbe& probe = it != script_.probes.end() ? it->second : script_.default_probe;
    int& failures = failures_[req.prefix_tokens];
    if (probe.fatal) throw TransportError("scripted fatal probe failure", false);
    if (failures < probe.transient_failures) {
      ++failures;
      throw TransportError("scripted transient probe failure", true);
    }
    Completion c;
    c.text = probe.text;
    c.tokens = probe.tokens;
    c.completion_tokens = probe.tokens.empty() ? 1 : static_cast<int>(probe.tokens.size());
    return c;
  }

  const std::vector<CompletionRequest>& requests() const noexcept { return requests_; }
  int max_in_flight() const noexcept { return max_in_flight_; }
  int streams_opened() const noexcept { return streams_opened_; }

 private:
  class Stream final : public TokenStream {
   public:
    explicit Stream(const Script& s) : s_(s) {}
    std::optional<StreamEvent> next() override {
      if (cancelled_ && late_left_-- <= 0) return std::nullopt;
      if (s_.stream_error_at && pos_ == *s_.stream_error_at) throw TransportError("scripted stream failure", false);
      if (pos_ >= s_.stream.size()) return std::nullopt;
      return s_.stream[pos_++];
    }
    void cancel() override {
      if (!cancelled_) late_left_ = s_.late_after_cancel;
      cancelled_ = true;
    }

   private:
    const Script& s_;
    std::size_t pos_ = 0;
    bool cancelled_ = false;
    int late_left_ = 0;
  };

  Script script_;
  std::vector<CompletionRequest> requests_;
  std::map<int, int> failures_;
  int in_flight_ = 0;
  int max_in_flight_ = 0;
  int streams_opened_ = 0;
};

/// A script that regenerates `trace`: <think>, its steps, </think>, a
/// conclusion, and a probe reply at every recorded probe step.
inline Script script_from_trace(const TraceRecord& trace, const Markers& markers = {}) {
  Script s;
  s.stream.push_back({markers.think_open, 0.0, {}});
  for (const auto& step : trace.steps) {
    StreamEvent ev;
    ev.text = step.token;
    if (!step.logprobs_missing) {
      ev.logprob = step.chosen_logprob;
      ev.top = step.topk;
    }
    s.stream.push_back(std::move(ev));
  }
  s.stream.push_back({markers.think_close, -0.01, {}});
  s.stream.push_back({" The answer is " + trace.final_answer.raw + ".", -0.05, {}});
  for (const auto& p : trace.probes) {
    ScriptedProbe probe;
    probe.text = "The answer is " + p.forced_answer.raw;
    probe.tokens.push_back({"The answer is", -0.01});
    if (p.answer_span_logprobs) {
      const auto& lps = *p.answer_span_logprobs;
      for (std::size_t i = 0; i < lps.size(); ++i)
        probe.tokens.push_back({i == 0 ? " " + p.forced_answer.raw : std::string(), lps[i]});
    }
    s.probes[p.t] = std::move(probe);
  }
  s.default_probe.text = "The answer is " + trace.final_answer.raw;
  s.default_probe.tokens = {{"The answer is", -0.01}, {" " + trace.final_answer.raw, -0.02}};
  return s;
}

inline nlohmann::json to_json(const LiveResult& r) {
  nlohmann::json states = nlohmann::json::array();
  for (auto s : r.states) states.push_back(std::string(to_string(s)));
  nlohmann::json j = to_json(r.decision);
  j["states"] = states;
  j["warnings"] = r.warnings;
  j["late_tokens_discarded"] = r.late_tokens_discarded;
  j["probe_requests"] = r.probe_requests;
  if (r.error) j["error"] = *r.error;
  return j;
}

}  // namespace cotstop
