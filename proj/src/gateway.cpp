#include "coeval/gateway.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <thread>

#include <json.hpp>
#include <spdlog/spdlog.h>

#include "coeval/error.hpp"

namespace coeval {

std::string_view to_string(FinishReason r) {
  switch (r) {
    case FinishReason::stop: return "stop";
    case FinishReason::length: return "length";
    case FinishReason::error: return "error";
  }
  return "?";
}

FinishReason parse_finish_reason(std::string_view s) {
  if (s == "stop") return FinishReason::stop;
  if (s == "length") return FinishReason::length;
  if (s == "error") return FinishReason::error;
  throw Error(Errc::invalid_argument, "unknown finish reason: " + std::string(s));
}

double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b) {
  if (a.dimension() != b.dimension())
    throw Error(Errc::dimension_mismatch, "cosine similarity of vectors with different dimensions",
                {{"left", a.dimension()}, {"right", b.dimension()}});
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    dot += a.values[i] * b.values[i];
    na += a.values[i] * a.values[i];
    nb += b.values[i] * b.values[i];
  }
  if (na == 0.0 || nb == 0.0) throw Error(Errc::zero_norm_vector, "cosine similarity of a zero vector");
  return std::clamp(dot / std::sqrt(na * nb), -1.0, 1.0);
}

// ---- HashingEmbedder -------------------------------------------------------

std::vector<std::string> HashingEmbedder::tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (char c : text) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      current += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

std::size_t HashingEmbedder::bucket(std::string_view token) const {
  std::uint64_t h = 14695981039346656037ULL;
  for (char c : token) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ULL;
  }
  return static_cast<std::size_t>(h % dimension_);
}

EmbeddingVector HashingEmbedder::embed_one(std::string_view text) const {
  EmbeddingVector v;
  v.values.assign(dimension_, 0.0);
  for (const auto& tok : tokenize(text)) v.values[bucket(tok)] += 1.0;
  double norm = 0.0;
  for (double x : v.values) norm += x * x;
  if (norm > 0.0) {
    norm = std::sqrt(norm);
    for (double& x : v.values) x /= norm;
  }
  return v;
}

std::vector<EmbeddingVector> HashingEmbedder::embed(std::span<const std::string> texts) {
  std::vector<EmbeddingVector> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(embed_one(t));
  return out;
}

// ---- Gateway ---------------------------------------------------------------

class Gateway::Slot {
 public:
  explicit Slot(Gateway& g) : g_(g) { g_.acquire(); }
  ~Slot() { g_.release(); }
  Slot(const Slot&) = delete;
  Slot& operator=(const Slot&) = delete;

 private:
  Gateway& g_;
};

Gateway::Gateway(std::shared_ptr<ChatProvider> chat, std::shared_ptr<Embedder> embedder)
    : Gateway(std::move(chat), std::move(embedder), Options{}) {}

Gateway::Gateway(std::shared_ptr<ChatProvider> chat, std::shared_ptr<Embedder> embedder, Options options)
    : chat_(std::move(chat)), embedder_(std::move(embedder)), options_(std::move(options)), rng_(options_.jitter_seed) {
  if (options_.max_in_flight < 1) throw Error(Errc::invalid_argument, "max_in_flight must be positive");
  if (options_.retry.max_attempts < 1) throw Error(Errc::invalid_argument, "max_attempts must be positive");
  if (!options_.sleep) options_.sleep = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
  if (options_.transcript_path) {
    transcript_.open(*options_.transcript_path, std::ios::app);
    if (!transcript_) throw Error(Errc::io_error, "cannot open transcript " + options_.transcript_path->string());
  }
}

void Gateway::acquire() {
  std::unique_lock lock(slots_mutex_);
  slots_cv_.wait(lock, [&] { return in_flight_ < options_.max_in_flight; });
  ++in_flight_;
}

void Gateway::release() {
  {
    std::lock_guard lock(slots_mutex_);
    --in_flight_;
  }
  slots_cv_.notify_one();
}

std::chrono::milliseconds Gateway::backoff_delay(int failed_attempts) {
  const double cap =
      static_cast<double>(options_.retry.base_delay.count()) * std::pow(options_.retry.factor, failed_attempts - 1);
  if (!options_.retry.full_jitter) return std::chrono::milliseconds(static_cast<std::int64_t>(cap));
  std::lock_guard lock(rng_mutex_);
  std::uniform_real_distribution<double> dist(0.0, cap);
  return std::chrono::milliseconds(static_cast<std::int64_t>(dist(rng_)));
}

CompletionResponse Gateway::complete(const CompletionRequest& request) {
  if (request.temperature < 0.0 || request.temperature > 2.0)
    throw Error(Errc::invalid_argument, "temperature must lie in [0, 2]");
  if (request.max_output_tokens <= 0) throw Error(Errc::invalid_argument, "max_output_tokens must be positive");

  for (int attempt = 1;; ++attempt) {
    try {
      CompletionResponse response;
      {
        Slot slot(*this);
        const auto start = std::chrono::steady_clock::now();
        response = chat_->complete_once(request);
        response.latency =
            std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start);
      }
      response.attempts = attempt;
      if (response.finish_reason == FinishReason::length)
        throw Error(Errc::truncated, "completion stopped at max_output_tokens",
                    {{"max_output_tokens", request.max_output_tokens}, {"text", response.text}});
      if (response.finish_reason != FinishReason::stop)
        throw Error(Errc::provider_rejected, "provider finished with an error");
      record(request, response);
      return response;
    } catch (const Error& e) {
      const bool transient = e.code() == Errc::transport || e.code() == Errc::rate_limited;
      if (!transient || attempt >= options_.retry.max_attempts) {
        if (transient) {
          auto details = e.details();
          details["attempts"] = attempt;
          throw Error(e.code(), std::string(e.what()) + " (after " + std::to_string(attempt) + " attempts)", details);
        }
        throw;
      }
      const auto delay = backoff_delay(attempt);
      spdlog::warn("{} on attempt {}/{}; retrying in {} ms", to_string(e.code()), attempt,
                   options_.retry.max_attempts, delay.count());
      options_.sleep(delay);
    }
  }
}

std::vector<EmbeddingVector> Gateway::embed(std::span<const std::string> texts) {
  if (texts.empty()) throw Error(Errc::invalid_argument, "embed requires at least one text");
  for (const auto& t : texts)
    if (t.empty()) throw Error(Errc::invalid_argument, "embed received an empty text");

  std::vector<EmbeddingVector> out;
  for (int attempt = 1;; ++attempt) {
    try {
      Slot slot(*this);
      out = embedder_->embed(texts);
      break;
    } catch (const Error& e) {
      const bool transient = e.code() == Errc::transport || e.code() == Errc::rate_limited;
      if (!transient || attempt >= options_.retry.max_attempts) throw;
      options_.sleep(backoff_delay(attempt));
    }
  }
  if (out.size() != texts.size())
    throw Error(Errc::dimension_mismatch, "embedder returned " + std::to_string(out.size()) + " vectors for " +
                                              std::to_string(texts.size()) + " texts");
  for (const auto& v : out) {
    if (v.dimension() == 0 || v.dimension() != out.front().dimension())
      throw Error(Errc::dimension_mismatch, "embedder returned inconsistent dimensions");
    if (!std::all_of(v.values.begin(), v.values.end(), [](double x) { return std::isfinite(x); }))
      throw Error(Errc::dimension_mismatch, "embedder returned non-finite values");
  }
  return out;
}

void Gateway::record(const CompletionRequest& request, const CompletionResponse& response) {
  if (!transcript_.is_open()) return;
  nlohmann::json line{{"kind", to_string(request.prompt.kind)},
                      {"prompt", request.prompt.text},
                      {"model", request.model},
                      {"temperature", request.temperature},
                      {"text", response.text},
                      {"finish_reason", to_string(response.finish_reason)}};
  if (request.seed_hint) line["seed"] = *request.seed_hint;
  std::lock_guard lock(transcript_mutex_);
  transcript_ << line.dump() << '\n';
  transcript_.flush();
}

}  // namespace coeval
