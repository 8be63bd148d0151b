#pragma once

// OpenAI-style /completions transport over cpp-httplib. Streaming responses
// are server-sent events; both the legacy completion chunk layout and the chat
// delta layout are understood.

#include <cstdlib>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cotstop/errors.hpp"
#include "cotstop/gateway.hpp"

namespace cotstop {

struct HttpConfig {
  std::string endpoint;  // e.g. http://localhost:8000/v1
  std::string api_key;
  std::string model;  // for probe requests; defaults to the last streamed model
  int connect_timeout_s = 10;
  int read_timeout_s = 300;

  /// COTSTOP_ENDPOINT and COTSTOP_API_KEY override the given values.
  static HttpConfig from_env(HttpConfig base) {
    if (const char* e = std::getenv("COTSTOP_ENDPOINT"); e && *e) base.endpoint = e;
    if (const char* k = std::getenv("COTSTOP_API_KEY"); k && *k) base.api_key = k;
    return base;
  }
};

struct SplitUrl {
  std::string origin;  // scheme://host[:port]
  std::string path;    // no trailing slash
};

inline SplitUrl split_url(const std::string& url) {
  const auto scheme = url.find("://");
  if (scheme == std::string::npos) throw ValidationError("endpoint", "\"" + url + "\" needs an http:// or https:// scheme");
  const auto slash = url.find('/', scheme + 3);
  SplitUrl out;
  out.origin = url.substr(0, slash);
  out.path = slash == std::string::npos ? std::string() : url.substr(slash);
  while (!out.path.empty() && out.path.back() == '/') out.path.pop_back();
  if (out.origin.size() <= scheme + 3) throw ValidationError("endpoint", "\"" + url + "\" has no host");
  return out;
}

namespace detail {

inline std::vector<TopKEntry> top_from_dict(const nlohmann::json& j) {
  std::vector<TopKEntry> out;
  if (j.is_object())
    for (auto it = j.begin(); it != j.end(); ++it)
      if (it.value().is_number()) out.push_back({it.key(), it.value().get<double>()});
  return out;
}

inline std::optional<double> number(const nlohmann::json& j) {
  if (j.is_number()) return j.get<double>();
  return std::nullopt;
}

}  // namespace detail

/// Incremental SSE decoder producing token events.
class SseParser {
 public:
  /// Feeds raw bytes; complete events are appended to `out`.
  void feed(std::string_view chunk, std::vector<StreamEvent>& out) {
    buffer_.append(chunk);
    std::size_t start = 0;
    for (std::size_t nl; (nl = buffer_.find('\n', start)) != std::string::npos; start = nl + 1) {
      std::string_view line(buffer_.data() + start, nl - start);
      if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
      handle_line(line, out);
    }
    buffer_.erase(0, start);
  }

  bool done() const noexcept { return done_; }

 private:
  void handle_line(std::string_view line, std::vector<StreamEvent>& out) {
    if (line.rfind("data:", 0) != 0) return;  // comments, event names, blank separators
    line.remove_prefix(5);
    while (!line.empty() && line.front() == ' ') line.remove_prefix(1);
    if (line == "[DONE]") {
      done_ = true;
      return;
    }
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw TransportError(std::string("malformed stream chunk: ") + e.what(), false);
    }
    if (j.contains("error")) throw TransportError("server error in stream: " + j["error"].dump(), false);
    if (!j.contains("choices") || !j["choices"].is_array() || j["choices"].empty()) return;
    decode_choice(j["choices"][0], out);
  }

  static void decode_choice(const nlohmann::json& c, std::vector<StreamEvent>& out) {
    const auto lp = c.value("logprobs", nlohmann::json());
    if (c.contains("delta")) {  // chat layout
      const auto& delta = c["delta"];
      const std::string text = delta.contains("content") && delta["content"].is_string() ? delta["content"].get<std::string>() : "";
      if (lp.is_object() && lp.contains("content") && lp["content"].is_array() && !lp["content"].empty()) {
        for (const auto& e : lp["content"]) {
          StreamEvent ev;
          ev.text = e.value("token", std::string());
          ev.logprob = detail::number(e.value("logprob", nlohmann::json()));
          if (e.contains("top_logprobs") && e["top_logprobs"].is_array())
            for (const auto& t : e["top_logprobs"])
              if (auto v = detail::number(t.value("logprob", nlohmann::json()))) ev.top.push_back({t.value("token", std::string()), *v});
          out.push_back(std::move(ev));
        }
      } else if (!text.empty()) {
        out.push_back({text, std::nullopt, {}});
      }
      return;
    }
    const std::string text = c.contains("text") && c["text"].is_string() ? c["text"].get<std::string>() : "";
    if (lp.is_object() && lp.contains("tokens") && lp["tokens"].is_array() && !lp["tokens"].empty()) {
      const auto& toks = lp["tokens"];
      const auto& lps = lp.value("token_logprobs", nlohmann::json::array());
      const auto& tops = lp.value("top_logprobs", nlohmann::json::array());
      for (std::size_t i = 0; i < toks.size(); ++i) {
        StreamEvent ev;
        ev.text = toks[i].is_string() ? toks[i].get<std::string>() : "";
        if (lps.is_array() && i < lps.size()) ev.logprob = detail::number(lps[i]);
        if (tops.is_array() && i < tops.size()) ev.top = detail::top_from_dict(tops[i]);
        out.push_back(std::move(ev));
      }
    } else if (!text.empty()) {
      out.push_back({text, std::nullopt, {}});
    }
  }

  std::string buffer_;
  bool done_ = false;
};

inline bool transient_status(int status) { return status == 408 || status == 429 || status >= 500; }

/// Transport for OpenAI-compatible `/completions` servers. Streams run on a
/// worker thread; `cancel()` aborts the connection.
class HttpTransport final : public Transport {
 public:
  explicit HttpTransport(HttpConfig cfg);
  std::unique_ptr<TokenStream> open_stream(const GenerationRequest& request) override;
  Completion complete(const CompletionRequest& request) override;

 private:
  HttpConfig cfg_;
  SplitUrl url_;
};

}  // namespace cotstop
