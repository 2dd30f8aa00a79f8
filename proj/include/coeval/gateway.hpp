#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "coeval/prompts.hpp"

namespace coeval {

enum class FinishReason { stop, length, error };

std::string_view to_string(FinishReason r);
FinishReason parse_finish_reason(std::string_view s);

struct CompletionRequest {
  std::string model;
  RenderedPrompt prompt;
  double temperature = 0.0;
  int max_output_tokens = 1024;
  std::optional<std::int64_t> seed_hint;
};

struct TokenUsage {
  int prompt_tokens = 0;
  int completion_tokens = 0;
};

struct CompletionResponse {
  std::string text;
  FinishReason finish_reason = FinishReason::stop;
  TokenUsage usage;
  std::chrono::milliseconds latency{0};
  int attempts = 1;
};

struct EmbeddingVector {
  std::vector<double> values;
  std::size_t dimension() const noexcept { return values.size(); }
  friend bool operator==(const EmbeddingVector&, const EmbeddingVector&) = default;
};

/// dot(a, b) / (|a| |b|). Throws dimension_mismatch or zero_norm_vector.
double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b);

/// A single attempt against a chat-completion backend. Implementations throw
/// Error(transport | rate_limited | provider_rejected) and leave retrying to
/// the Gateway.
class ChatProvider {
 public:
  virtual ~ChatProvider() = default;
  virtual CompletionResponse complete_once(const CompletionRequest& request) = 0;
};

class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual std::vector<EmbeddingVector> embed(std::span<const std::string> texts) = 0;
};

/// Offline embedder: lower-cased alphanumeric tokens hashed (FNV-1a) into a
/// count vector, then L2-normalised. Texts with disjoint token sets are
/// orthogonal unless two of their tokens share a bucket.
class HashingEmbedder final : public Embedder {
 public:
  static constexpr std::size_t kDefaultDimension = 256;
  explicit HashingEmbedder(std::size_t dimension = kDefaultDimension) : dimension_(dimension) {}

  std::vector<EmbeddingVector> embed(std::span<const std::string> texts) override;
  EmbeddingVector embed_one(std::string_view text) const;
  std::size_t bucket(std::string_view token) const;

  static std::vector<std::string> tokenize(std::string_view text);

 private:
  std::size_t dimension_;
};

struct RetryPolicy {
  int max_attempts = 5;
  std::chrono::milliseconds base_delay{500};
  double factor = 2.0;
  bool full_jitter = true;
};

class Gateway {
 public:
  using Sleeper = std::function<void(std::chrono::milliseconds)>;

  struct Options {
    RetryPolicy retry;
    int max_in_flight = 4;
    /// Defaults to std::this_thread::sleep_for.
    Sleeper sleep;
    std::uint64_t jitter_seed = 0x5eed;
    /// Append every completed request/response pair as JSON-lines here. The
    /// format loads back as a ScriptedProvider script.
    std::optional<std::filesystem::path> transcript_path;
  };

  Gateway(std::shared_ptr<ChatProvider> chat, std::shared_ptr<Embedder> embedder);
  Gateway(std::shared_ptr<ChatProvider> chat, std::shared_ptr<Embedder> embedder, Options options);

  /// Retries transport and rate-limit failures with exponential backoff;
  /// never retries provider rejections. Throws Error(truncated) when the
  /// provider stopped on the token limit.
  CompletionResponse complete(const CompletionRequest& request);

  /// One vector per text, same order, uniform dimension.
  std::vector<EmbeddingVector> embed(std::span<const std::string> texts);

  int max_in_flight() const noexcept { return options_.max_in_flight; }
  std::chrono::milliseconds backoff_delay(int failed_attempts);

 private:
  class Slot;
  void acquire();
  void release();
  void record(const CompletionRequest& request, const CompletionResponse& response);

  std::shared_ptr<ChatProvider> chat_;
  std::shared_ptr<Embedder> embedder_;
  Options options_;

  std::mutex slots_mutex_;
  std::condition_variable slots_cv_;
  int in_flight_ = 0;

  std::mutex rng_mutex_;
  std::mt19937_64 rng_;

  std::mutex transcript_mutex_;
  std::ofstream transcript_;
};

}  // namespace coeval
