#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "coeval/gateway.hpp"

namespace coeval {

// ---- scripted mock ---------------------------------------------------------

struct ScriptResponse {
  std::string text;
  FinishReason finish_reason = FinishReason::stop;
  /// 200 answers normally; 429 raises rate_limited, 5xx transport, any other
  /// code provider_rejected.
  int status = 200;
};

/// A rule matches when every present condition holds. The first matching
/// rule answers; its responses are consumed in order and the last one
/// repeats.
struct ScriptRule {
  std::optional<PromptKind> kind;
  std::vector<std::string> contains;
  std::optional<std::string> prompt;  // exact text
  std::optional<double> temperature;
  std::optional<std::int64_t> seed;
  std::vector<ScriptResponse> responses;
};

ScriptRule parse_script_rule(const nlohmann::json& j);

class ScriptedProvider final : public ChatProvider {
 public:
  explicit ScriptedProvider(std::vector<ScriptRule> rules);

  /// JSON-lines script; each line is one rule. Gateway transcripts load as-is.
  static std::shared_ptr<ScriptedProvider> load(const std::filesystem::path& path);

  CompletionResponse complete_once(const CompletionRequest& request) override;

  std::size_t calls() const noexcept { return calls_.load(); }

 private:
  std::vector<ScriptRule> rules_;
  std::vector<std::size_t> hits_;
  std::mutex mutex_;
  std::atomic<std::size_t> calls_{0};
};

/// Answers with a callable; handy for programmatic fixtures.
class FunctionProvider final : public ChatProvider {
 public:
  using Fn = std::function<CompletionResponse(const CompletionRequest&)>;
  explicit FunctionProvider(Fn fn) : fn_(std::move(fn)) {}
  CompletionResponse complete_once(const CompletionRequest& request) override { return fn_(request); }

 private:
  Fn fn_;
};

// ---- OpenAI-compatible HTTP ------------------------------------------------

struct HttpEndpoint {
  std::string scheme_host_port;  // "https://api.example.com:443"
  std::string path_prefix;       // "/v1"

  static HttpEndpoint parse(const std::string& base_url);
};

struct OpenAiOptions {
  std::string base_url = "https://api.openai.com/v1";
  std::string api_key;
  std::string embedding_model;
  std::chrono::seconds timeout{120};
  std::size_t embedding_batch = 64;
};

/// POST {base}/chat/completions with the rendered prompt as one user message.
class OpenAiChatProvider final : public ChatProvider {
 public:
  explicit OpenAiChatProvider(OpenAiOptions options);
  CompletionResponse complete_once(const CompletionRequest& request) override;

 private:
  OpenAiOptions options_;
  HttpEndpoint endpoint_;
};

/// POST {base}/embeddings in batches; results reordered by "index".
class OpenAiEmbedder final : public Embedder {
 public:
  explicit OpenAiEmbedder(OpenAiOptions options);
  std::vector<EmbeddingVector> embed(std::span<const std::string> texts) override;

 private:
  OpenAiOptions options_;
  HttpEndpoint endpoint_;
};

/// Builds the chat-completions request body.
nlohmann::json chat_request_body(const CompletionRequest& request);
/// Maps an HTTP status + body to a response or a thrown Error.
CompletionResponse parse_chat_response(int status, const std::string& body);

// ---- mock server -----------------------------------------------------------

/// Serves the OpenAI-compatible chat and embeddings routes from a scripted
/// provider and the hashing embedder, for offline end-to-end runs.
class MockServer {
 public:
  MockServer(std::shared_ptr<ChatProvider> chat, std::shared_ptr<Embedder> embedder, PromptLibrary prompts);
  ~MockServer();
  MockServer(const MockServer&) = delete;
  MockServer& operator=(const MockServer&) = delete;

  /// Binds and serves on a background thread; returns the bound port.
  int start(const std::string& host, int port);
  /// Blocks the calling thread.
  void listen(const std::string& host, int port);
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace coeval
