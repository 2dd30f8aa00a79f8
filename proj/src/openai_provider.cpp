#include <httplib.h>

#include <algorithm>
#include <regex>

#include "coeval/error.hpp"
#include "coeval/providers.hpp"

namespace coeval {

using nlohmann::json;

HttpEndpoint HttpEndpoint::parse(const std::string& base_url) {
  static const std::regex re(R"(^(https?)://([^/:]+)(?::([0-9]+))?(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(base_url, m, re)) throw Error(Errc::invalid_argument, "malformed base URL: " + base_url);
  HttpEndpoint ep;
  const std::string scheme = m[1].str();
  const std::string port = m[3].matched ? m[3].str() : (scheme == "https" ? "443" : "80");
  ep.scheme_host_port = scheme + "://" + m[2].str() + ":" + port;
  ep.path_prefix = m[4].matched ? m[4].str() : "";
  while (!ep.path_prefix.empty() && ep.path_prefix.back() == '/') ep.path_prefix.pop_back();
  return ep;
}

namespace {

httplib::Client make_client(const HttpEndpoint& ep, const OpenAiOptions& options) {
  httplib::Client client(ep.scheme_host_port);
  client.set_connection_timeout(std::chrono::seconds(10));
  client.set_read_timeout(options.timeout);
  client.set_write_timeout(options.timeout);
  if (!options.api_key.empty()) client.set_bearer_token_auth(options.api_key);
  return client;
}

[[noreturn]] void throw_for_status(int status, const std::string& body) {
  json details{{"status", status}};
  try {
    const auto j = json::parse(body);
    if (j.contains("error")) details["provider_error"] = j["error"];
  } catch (const json::exception&) {
    details["body"] = body.substr(0, 512);
  }
  if (status == 429) throw Error(Errc::rate_limited, "provider rate limit (HTTP 429)", details);
  if (status >= 500 || status == 408)
    throw Error(Errc::transport, "provider server error (HTTP " + std::to_string(status) + ")", details);
  throw Error(Errc::provider_rejected, "provider rejected the request (HTTP " + std::to_string(status) + ")", details);
}

}  // namespace

json chat_request_body(const CompletionRequest& request) {
  json body{{"model", request.model},
            {"messages", json::array({json{{"role", "user"}, {"content", request.prompt.text}}})},
            {"temperature", request.temperature},
            {"max_tokens", request.max_output_tokens}};
  if (request.seed_hint) body["seed"] = *request.seed_hint;
  return body;
}

CompletionResponse parse_chat_response(int status, const std::string& body) {
  if (status != 200) throw_for_status(status, body);
  try {
    const auto j = json::parse(body);
    const auto& choice = j.at("choices").at(0);
    CompletionResponse r;
    const auto& content = choice.at("message").at("content");
    r.text = content.is_null() ? "" : content.get<std::string>();
    const auto finish = choice.value("finish_reason", json("stop"));
    const auto reason = finish.is_null() ? std::string("stop") : finish.get<std::string>();
    if (reason == "content_filter") throw Error(Errc::provider_rejected, "completion blocked by content filter");
    r.finish_reason = reason == "length" ? FinishReason::length : FinishReason::stop;
    if (j.contains("usage")) {
      r.usage.prompt_tokens = j["usage"].value("prompt_tokens", 0);
      r.usage.completion_tokens = j["usage"].value("completion_tokens", 0);
    }
    return r;
  } catch (const json::exception& e) {
    throw Error(Errc::transport, std::string("malformed chat response: ") + e.what());
  }
}

OpenAiChatProvider::OpenAiChatProvider(OpenAiOptions options)
    : options_(std::move(options)), endpoint_(HttpEndpoint::parse(options_.base_url)) {}

CompletionResponse OpenAiChatProvider::complete_once(const CompletionRequest& request) {
  auto client = make_client(endpoint_, options_);
  auto res = client.Post(endpoint_.path_prefix + "/chat/completions", chat_request_body(request).dump(),
                         "application/json");
  if (!res) throw Error(Errc::transport, "chat request failed: " + httplib::to_string(res.error()));
  return parse_chat_response(res->status, res->body);
}

OpenAiEmbedder::OpenAiEmbedder(OpenAiOptions options)
    : options_(std::move(options)), endpoint_(HttpEndpoint::parse(options_.base_url)) {}

std::vector<EmbeddingVector> OpenAiEmbedder::embed(std::span<const std::string> texts) {
  std::vector<EmbeddingVector> out;
  out.reserve(texts.size());
  auto client = make_client(endpoint_, options_);
  const auto batch = std::max<std::size_t>(1, options_.embedding_batch);
  for (std::size_t start = 0; start < texts.size(); start += batch) {
    const auto chunk = texts.subspan(start, std::min(batch, texts.size() - start));
    json body{{"model", options_.embedding_model}, {"input", std::vector<std::string>(chunk.begin(), chunk.end())}};
    auto res = client.Post(endpoint_.path_prefix + "/embeddings", body.dump(), "application/json");
    if (!res) throw Error(Errc::transport, "embedding request failed: " + httplib::to_string(res.error()));
    if (res->status != 200) throw_for_status(res->status, res->body);
    try {
      const auto j = json::parse(res->body);
      std::vector<EmbeddingVector> vectors(chunk.size());
      std::vector<bool> seen(chunk.size(), false);
      for (const auto& item : j.at("data")) {
        const auto index = item.at("index").get<std::size_t>();
        if (index >= chunk.size() || seen[index])
          throw Error(Errc::dimension_mismatch, "embedding response has an unexpected index");
        vectors[index].values = item.at("embedding").get<std::vector<double>>();
        seen[index] = true;
      }
      if (std::find(seen.begin(), seen.end(), false) != seen.end())
        throw Error(Errc::dimension_mismatch, "embedding response is missing vectors");
      for (auto& v : vectors) out.push_back(std::move(v));
    } catch (const json::exception& e) {
      throw Error(Errc::transport, std::string("malformed embedding response: ") + e.what());
    }
  }
  return out;
}

}  // namespace coeval
