#include "cotstop/gateway_http.hpp"

#include <httplib.h>

#include <atomic>
#include <condition_variable>
#include <deque>
#include <mutex>
#include <thread>

namespace cotstop {

namespace {

httplib::Headers headers(const HttpConfig& cfg) {
  httplib::Headers h;
  if (!cfg.api_key.empty()) h.emplace("Authorization", "Bearer " + cfg.api_key);
  return h;
}

std::unique_ptr<httplib::Client> make_client(const HttpConfig& cfg, const SplitUrl& url) {
  auto c = std::make_unique<httplib::Client>(url.origin);
  if (!c->is_valid()) throw ValidationError("endpoint", "cannot use \"" + url.origin + "\" (https needs OpenSSL support)");
  c->set_connection_timeout(cfg.connect_timeout_s, 0);
  c->set_read_timeout(cfg.read_timeout_s, 0);
  return c;
}

class Stream final : public TokenStream {
 public:
  Stream(const HttpConfig& cfg, const SplitUrl& url, std::string body) {
    client_ = make_client(cfg, url);
    worker_ = std::thread([this, path = url.path + "/completions", h = headers(cfg), body = std::move(body)] {
      run(path, h, body);
    });
  }

  ~Stream() override {
    cancel();
    if (worker_.joinable()) worker_.join();
  }

  std::optional<StreamEvent> next() override {
    std::unique_lock lock(m_);
    cv_.wait(lock, [&] { return !queue_.empty() || finished_; });
    if (!queue_.empty()) {
      auto ev = std::move(queue_.front());
      queue_.pop_front();
      return ev;
    }
    if (error_) {
      auto e = std::move(*error_);
      error_.reset();
      throw e;
    }
    return std::nullopt;
  }

  void cancel() override {
    if (!cancelled_.exchange(true)) client_->stop();
  }

 private:
  void run(const std::string& path, const httplib::Headers& h, const std::string& body) {
    int status = 0;
    std::string error_body;
    SseParser parser;
    std::optional<TransportError> failure;
    httplib::Request req;
    req.method = "POST";
    req.path = path;
    req.headers = h;
    req.body = body;
    req.set_header("Content-Type", "application/json");
    req.set_header("Accept", "text/event-stream");
    req.response_handler = [&](const httplib::Response& r) {
      status = r.status;
      return true;
    };
    req.content_receiver = [&](const char* data, std::size_t n, std::uint64_t, std::uint64_t) {
      if (cancelled_) return false;
      if (status < 200 || status >= 300) {
        error_body.append(data, std::min<std::size_t>(n, 400));
        return true;
      }
      std::vector<StreamEvent> events;
      try {
        parser.feed(std::string_view(data, n), events);
      } catch (const TransportError& e) {
        failure = e;
        return false;
      }
      push(std::move(events));
      return !parser.done();
    };
    auto res = client_->send(req);
    if (!failure && !cancelled_) {
      if (status != 0 && (status < 200 || status >= 300))
        failure = TransportError("generation request returned HTTP " + std::to_string(status) + ": " + error_body,
                                 transient_status(status));
      else if (!res && !parser.done())
        failure = TransportError("generation stream broke: " + httplib::to_string(res.error()), true);
    }
    std::lock_guard lock(m_);
    if (failure) error_ = std::move(failure);
    finished_ = true;
    cv_.notify_all();
  }

  void push(std::vector<StreamEvent> events) {
    if (events.empty()) return;
    std::lock_guard lock(m_);
    for (auto& e : events) queue_.push_back(std::move(e));
    cv_.notify_all();
  }

  std::unique_ptr<httplib::Client> client_;
  std::thread worker_;
  std::mutex m_;
  std::condition_variable cv_;
  std::deque<StreamEvent> queue_;
  std::optional<TransportError> error_;
  bool finished_ = false;
  std::atomic<bool> cancelled_{false};
};

}  // namespace

HttpTransport::HttpTransport(HttpConfig cfg) : cfg_(std::move(cfg)), url_(split_url(cfg_.endpoint)) {}

std::unique_ptr<TokenStream> HttpTransport::open_stream(const GenerationRequest& request) {
  if (cfg_.model.empty()) cfg_.model = request.model;
  nlohmann::json body = {{"model", request.model},
                         {"prompt", request.prompt},
                         {"max_tokens", request.max_tokens + 1024},
                         {"temperature", request.temperature},
                         {"top_k", request.top_k},
                         {"top_p", request.top_p},
                         {"repetition_penalty", request.repetition_penalty},
                         {"logprobs", request.top_logprobs},
                         {"stream", true}};
  return std::make_unique<Stream>(cfg_, url_, body.dump());
}

Completion HttpTransport::complete(const CompletionRequest& request) {
  nlohmann::json body = {{"model", cfg_.model},
                         {"prompt", request.prompt},
                         {"max_tokens", request.max_tokens},
                         {"temperature", request.temperature},
                         {"logprobs", 1},
                         {"stream", false}};
  auto client = make_client(cfg_, url_);
  auto res = client->Post(url_.path + "/completions", headers(cfg_), body.dump(), "application/json");
  if (!res) throw TransportError("probe request failed: " + httplib::to_string(res.error()), true);
  if (res->status < 200 || res->status >= 300)
    throw TransportError("probe request returned HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 200),
                         transient_status(res->status));
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(res->body);
  } catch (const nlohmann::json::exception& e) {
    throw TransportError(std::string("probe response is not JSON: ") + e.what(), false);
  }
  if (!j.contains("choices") || !j["choices"].is_array() || j["choices"].empty())
    throw TransportError("probe response has no choices", false);
  const auto& c = j["choices"][0];
  Completion out;
  out.text = c.value("text", std::string());
  const auto lp = c.value("logprobs", nlohmann::json());
  if (lp.is_object() && lp.contains("tokens") && lp["tokens"].is_array()) {
    const auto& lps = lp.value("token_logprobs", nlohmann::json::array());
    for (std::size_t i = 0; i < lp["tokens"].size(); ++i) {
      const auto v = lps.is_array() && i < lps.size() ? detail::number(lps[i]) : std::nullopt;
      if (!v) {
        out.tokens.clear();
        break;
      }
      out.tokens.push_back({lp["tokens"][i].get<std::string>(), *v});
    }
  }
  if (j.contains("usage") && j["usage"].is_object()) out.completion_tokens = j["usage"].value("completion_tokens", 0);
  return out;
}

}  // namespace cotstop
