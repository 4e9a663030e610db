#pragma once

// Chat-completion client for reward synthesis: OpenAI-style JSON over HTTP,
// bounded repair retries, offline fallback, and a transcript of every
// request and response.

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "esds/common.hpp"
#include "esds/reward_dsl.hpp"
#include "esds/synthesis.hpp"

// After Eigen: httplib pulls in <resolv.h>, whose _res macro breaks Eigen headers.
#include "httplib.h"

namespace esds {

struct RemoteConfig {
  std::string url;  // full endpoint, e.g. http://host:port/v1/chat/completions
  std::string model;
  std::string api_key;
  double temperature = 0.7;
  int max_repairs = 3;
  int timeout_s = 120;

  void validate() const {
    if (url.empty() || model.empty())
      throw Error(ErrorCode::InvalidParams, "remote backend needs an endpoint URL and a model name");
  }

  /// ESDS_LLM_URL, ESDS_LLM_MODEL, ESDS_LLM_KEY, ESDS_LLM_TEMPERATURE.
  static RemoteConfig from_environment() {
    RemoteConfig c;
    auto get = [](const char* name) {
      const char* v = std::getenv(name);
      return v ? std::string(v) : std::string();
    };
    c.url = get("ESDS_LLM_URL");
    c.model = get("ESDS_LLM_MODEL");
    c.api_key = get("ESDS_LLM_KEY");
    if (const std::string t = get("ESDS_LLM_TEMPERATURE"); !t.empty()) {
      char* end = nullptr;
      c.temperature = std::strtod(t.c_str(), &end);
      if (end == t.c_str() || *end != '\0') throw Error(ErrorCode::InvalidParams, "bad ESDS_LLM_TEMPERATURE");
    }
    return c;
  }
};

/// Without the key (never persisted).
inline nlohmann::json to_json(const RemoteConfig& c) {
  return {{"url", c.url}, {"model", c.model}, {"temperature", c.temperature}, {"max_repairs", c.max_repairs}};
}

enum class BackendKind { Offline, Remote };

struct SynthesisBackend {
  BackendKind kind = BackendKind::Offline;
  OfflineConfig offline;
  RemoteConfig remote;
  bool fallback_offline = true;  // otherwise remote failures are raised
};

inline std::string to_string(BackendKind k) { return k == BackendKind::Offline ? "offline" : "remote"; }

inline BackendKind backend_kind_from_string(const std::string& s) {
  if (s == "offline") return BackendKind::Offline;
  if (s == "remote") return BackendKind::Remote;
  throw Error(ErrorCode::InvalidParams, "unknown backend '" + s + "'");
}

/// Receives (file name, content) for every request and response.
using AuditSink = std::function<void(const std::string& name, const std::string& content)>;

struct SynthesisOutcome {
  std::vector<RewardProgram> programs;
  std::vector<std::string> origin;  // per candidate: "remote" or "offline"
  bool degraded = false;
  int requests = 0;
  std::string notes;
};

namespace remote_detail {

struct Endpoint {
  std::string base;  // scheme://host[:port]
  std::string path;
};

inline Endpoint split_url(const std::string& url) {
  const std::size_t scheme = url.find("://");
  if (scheme == std::string::npos) throw Error(ErrorCode::InvalidParams, "endpoint URL needs a scheme: " + url);
  const std::size_t slash = url.find('/', scheme + 3);
  if (slash == std::string::npos) return {url, "/"};
  return {url.substr(0, slash), url.substr(slash)};
}

inline std::string request_body(const RemoteConfig& cfg, const std::vector<std::pair<std::string, std::string>>& messages) {
  nlohmann::json msgs = nlohmann::json::array();
  for (const auto& [role, content] : messages) msgs.push_back({{"role", role}, {"content", content}});
  return nlohmann::json{{"model", cfg.model}, {"temperature", cfg.temperature}, {"messages", msgs}}.dump(2);
}

}  // namespace remote_detail

/// One chat request; returns the first choice's message content.
inline std::string chat_completion(const RemoteConfig& cfg, const std::string& body) {
  const auto ep = remote_detail::split_url(cfg.url);
  httplib::Client client(ep.base);
  client.set_connection_timeout(cfg.timeout_s, 0);
  client.set_read_timeout(cfg.timeout_s, 0);
  httplib::Headers headers;
  if (!cfg.api_key.empty()) headers.emplace("Authorization", "Bearer " + cfg.api_key);
  auto res = client.Post(ep.path, headers, body, "application/json");
  if (!res) throw Error(ErrorCode::RemoteUnreachable, "request failed: " + httplib::to_string(res.error()));
  if (res->status < 200 || res->status >= 300)
    throw Error(ErrorCode::RemoteUnreachable, "endpoint returned HTTP " + std::to_string(res->status));
  try {
    const auto j = nlohmann::json::parse(res->body);
    return j.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    // a malformed envelope is treated as an unparseable answer, not a transport failure
    return res->body;
  }
}

/// Remote candidates with repair retries. Candidates that stay unparseable
/// are replaced by the offline candidate of the same index and the outcome is
/// marked degraded; if the endpoint cannot be reached at all, every candidate
/// falls back.
inline SynthesisOutcome synthesize(const PromptBundle& bundle, const SynthesisBackend& backend, int n,
                                   std::uint64_t seed, const FeatureSchema& schema, const AuditSink& audit = {},
                                   const std::string& tag = "") {
  if (n < 1) throw Error(ErrorCode::InvalidParams, "n_candidates must be >= 1");
  SynthesisOutcome out;
  if (backend.kind == BackendKind::Offline) {
    out.programs = synthesize_offline(bundle, n, seed, backend.offline);
    out.origin.assign(static_cast<std::size_t>(n), "offline");
    return out;
  }
  backend.remote.validate();
  std::vector<std::optional<RewardProgram>> got(static_cast<std::size_t>(n));
  bool unreachable = false;
  for (int k = 0; k < n && !unreachable; ++k) {
    std::vector<std::pair<std::string, std::string>> messages = {{"system", bundle.system_text},
                                                                 {"user", bundle.user_text}};
    for (int attempt = 0; attempt <= backend.remote.max_repairs; ++attempt) {
      const std::string stem = (tag.empty() ? "" : tag + "_") + "c" + std::to_string(k) + "_a" + std::to_string(attempt);
      const std::string body = remote_detail::request_body(backend.remote, messages);
      if (audit) audit(stem + ".request.json", body);
      ++out.requests;
      std::string reply;
      try {
        reply = chat_completion(backend.remote, body);
      } catch (const Error& e) {
        if (audit) audit(stem + ".error.txt", e.what());
        out.notes += "candidate " + std::to_string(k) + ": " + e.what() + "\n";
        unreachable = true;
        break;
      }
      if (audit) audit(stem + ".response.txt", reply);
      try {
        got[static_cast<std::size_t>(k)] = parse_response(reply, schema).program;
        break;
      } catch (const Error& e) {
        out.notes += "candidate " + std::to_string(k) + " attempt " + std::to_string(attempt) + ": " + e.what() + "\n";
        messages.push_back({"assistant", reply});
        messages.push_back({"user", std::string("The program was rejected: ") + e.what() +
                                        "\nReturn a corrected program as one fenced rdsl block."});
      }
    }
  }
  const bool none = std::none_of(got.begin(), got.end(), [](const auto& p) { return p.has_value(); });
  if (!backend.fallback_offline && unreachable) throw Error(ErrorCode::RemoteUnreachable, out.notes);
  if (!backend.fallback_offline && none) throw Error(ErrorCode::AllCandidatesUnparseable, out.notes);
  const auto offline = synthesize_offline(bundle, n, seed, backend.offline);
  for (int k = 0; k < n; ++k) {
    const auto ku = static_cast<std::size_t>(k);
    if (got[ku]) {
      out.programs.push_back(*got[ku]);
      out.origin.push_back("remote");
    } else {
      out.programs.push_back(offline[ku]);
      out.origin.push_back("offline");
      out.degraded = true;
    }
  }
  return out;
}

}  // namespace esds
