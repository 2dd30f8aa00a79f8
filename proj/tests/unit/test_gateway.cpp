#include <gtest/gtest.h>

#include <atomic>
#include <future>
#include <thread>

#include "coeval/error.hpp"
#include "coeval/gateway.hpp"
#include "coeval/providers.hpp"
#include "test_support.hpp"

using namespace coeval;
using nlohmann::json;
namespace ts = testing_support;

namespace {

CompletionRequest request(std::string text = "hello", PromptKind kind = PromptKind::overall_direct) {
  CompletionRequest r;
  r.prompt.kind = kind;
  r.prompt.text = std::move(text);
  return r;
}

Errc code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an Error";
  return Errc::io_error;
}

}  // namespace

TEST(Cosine, BasicsAndErrors) {
  EXPECT_DOUBLE_EQ(cosine_similarity({{1, 0}}, {{2, 0}}), 1.0);
  EXPECT_DOUBLE_EQ(cosine_similarity({{1, 0}}, {{0, 3}}), 0.0);
  EXPECT_NEAR(cosine_similarity({{1, 1}}, {{-1, -1}}), -1.0, 1e-12);
  EXPECT_EQ(code_of([] { cosine_similarity({{1, 0}}, {{1, 0, 0}}); }), Errc::dimension_mismatch);
  EXPECT_EQ(code_of([] { cosine_similarity({{0, 0}}, {{1, 0}}); }), Errc::zero_norm_vector);
}

TEST(HashingEmbedder, NormalisedAndTokenBased) {
  HashingEmbedder e;
  const auto a = e.embed_one("Coherence: the story flows");
  double norm = 0;
  for (double v : a.values) norm += v * v;
  EXPECT_NEAR(norm, 1.0, 1e-12);
  EXPECT_EQ(a, e.embed_one("coherence THE story, flows!"));
  EXPECT_EQ(HashingEmbedder::tokenize("Hi, there-you 2"), (std::vector<std::string>{"hi", "there", "you", "2"}));
}

TEST(Gateway, RetriesTransientFailuresWithBackoff) {
  std::atomic<int> calls{0};
  auto provider = std::make_shared<FunctionProvider>([&](const CompletionRequest&) {
    if (++calls < 3) throw Error(Errc::rate_limited, "slow down");
    return ts::reply("ok");
  });
  std::vector<std::chrono::milliseconds> sleeps;
  Gateway::Options o;
  o.retry.full_jitter = false;
  o.sleep = [&](std::chrono::milliseconds d) { sleeps.push_back(d); };
  Gateway g(provider, std::make_shared<HashingEmbedder>(), o);
  const auto r = g.complete(request());
  EXPECT_EQ(r.text, "ok");
  EXPECT_EQ(r.attempts, 3);
  EXPECT_EQ(sleeps, (std::vector<std::chrono::milliseconds>{std::chrono::milliseconds(500), std::chrono::milliseconds(1000)}));
}

TEST(Gateway, GivesUpAfterMaxAttempts) {
  std::atomic<int> calls{0};
  auto provider = std::make_shared<FunctionProvider>([&](const CompletionRequest&) -> CompletionResponse {
    ++calls;
    throw Error(Errc::transport, "connection reset");
  });
  auto g = ts::gateway(provider);
  try {
    g->complete(request());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::transport);
    EXPECT_EQ(e.details().at("attempts"), 5);
  }
  EXPECT_EQ(calls.load(), 5);
}

TEST(Gateway, NeverRetriesRejections) {
  std::atomic<int> calls{0};
  auto provider = std::make_shared<FunctionProvider>([&](const CompletionRequest&) -> CompletionResponse {
    ++calls;
    throw Error(Errc::provider_rejected, "bad request");
  });
  EXPECT_EQ(code_of([&] { ts::gateway(provider)->complete(request()); }), Errc::provider_rejected);
  EXPECT_EQ(calls.load(), 1);
}

TEST(Gateway, TruncationIsAnError) {
  auto provider = std::make_shared<FunctionProvider>([](const CompletionRequest&) {
    auto r = ts::reply("Score: 4 and then");
    r.finish_reason = FinishReason::length;
    return r;
  });
  EXPECT_EQ(code_of([&] { ts::gateway(provider)->complete(request()); }), Errc::truncated);
}

TEST(Gateway, ValidatesRequests) {
  auto g = ts::gateway(std::make_shared<FunctionProvider>([](const CompletionRequest&) { return ts::reply("x"); }));
  auto r = request();
  r.temperature = 3.0;
  EXPECT_EQ(code_of([&] { g->complete(r); }), Errc::invalid_argument);
  r.temperature = 0.0;
  r.max_output_tokens = 0;
  EXPECT_EQ(code_of([&] { g->complete(r); }), Errc::invalid_argument);
}

TEST(Gateway, JitteredBackoffStaysUnderTheCap) {
  Gateway::Options o;
  Gateway g(nullptr, nullptr, o);
  for (int attempt = 1; attempt <= 4; ++attempt)
    for (int i = 0; i < 50; ++i) {
      const auto d = g.backoff_delay(attempt);
      EXPECT_GE(d.count(), 0);
      EXPECT_LE(d.count(), 500 * (1 << (attempt - 1)));
    }
}

TEST(Gateway, BoundsInFlightCalls) {
  std::atomic<int> active{0}, peak{0};
  auto provider = std::make_shared<FunctionProvider>([&](const CompletionRequest&) {
    const int now = ++active;
    int p = peak.load();
    while (now > p && !peak.compare_exchange_weak(p, now)) {
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
    --active;
    return ts::reply("ok");
  });
  auto g = ts::gateway(provider, 3);
  std::vector<std::future<void>> fs;
  for (int i = 0; i < 24; ++i) fs.push_back(std::async(std::launch::async, [&] { g->complete(request()); }));
  for (auto& f : fs) f.get();
  EXPECT_LE(peak.load(), 3);
  EXPECT_GE(peak.load(), 2);
}

TEST(Gateway, EmbedChecksShapes) {
  struct Bad : Embedder {
    std::vector<EmbeddingVector> embed(std::span<const std::string> texts) override {
      std::vector<EmbeddingVector> out;
      for (std::size_t i = 0; i < texts.size(); ++i) out.push_back({std::vector<double>(i + 1, 1.0)});
      return out;
    }
  };
  Gateway g(nullptr, std::make_shared<Bad>());
  const std::vector<std::string> texts{"a", "b"};
  EXPECT_EQ(code_of([&] { g.embed(texts); }), Errc::dimension_mismatch);
  const std::vector<std::string> empty_text{""};
  EXPECT_EQ(code_of([&] { g.embed(empty_text); }), Errc::invalid_argument);
}

TEST(ScriptedProvider, RulesMatchInOrderAndLastResponseRepeats) {
  std::vector<ScriptRule> rules{
      parse_script_rule(json::parse(R"({"kind":"overall_direct","contains":"special","responses":[{"text":"A"},{"text":"B"}]})")),
      parse_script_rule(json::parse(R"({"text":"fallback"})")),
  };
  ScriptedProvider p(rules);
  EXPECT_EQ(p.complete_once(request("a special case")).text, "A");
  EXPECT_EQ(p.complete_once(request("a special case")).text, "B");
  EXPECT_EQ(p.complete_once(request("a special case")).text, "B");
  EXPECT_EQ(p.complete_once(request("other")).text, "fallback");
  EXPECT_EQ(p.calls(), 4u);
}

TEST(ScriptedProvider, StatusCodesMapToErrors) {
  ScriptedProvider p({parse_script_rule(json::parse(R"({"contains":"a","status":429,"text":""})")),
                      parse_script_rule(json::parse(R"({"contains":"b","status":503,"text":""})")),
                      parse_script_rule(json::parse(R"({"contains":"c","status":400,"text":""})"))});
  EXPECT_EQ(code_of([&] { p.complete_once(request("a")); }), Errc::rate_limited);
  EXPECT_EQ(code_of([&] { p.complete_once(request("b")); }), Errc::transport);
  EXPECT_EQ(code_of([&] { p.complete_once(request("c")); }), Errc::provider_rejected);
  EXPECT_EQ(code_of([&] { p.complete_once(request("zzz")); }), Errc::provider_rejected);
}

TEST(Gateway, TranscriptReplaysAsScript) {
  ts::TempDir dir;
  Gateway::Options o;
  o.transcript_path = dir / "transcript.jsonl";
  {
    Gateway g(std::make_shared<FunctionProvider>([](const CompletionRequest& r) { return ts::reply("echo " + r.prompt.text); }),
              std::make_shared<HashingEmbedder>(), o);
    g.complete(request("one"));
    g.complete(request("two"));
  }
  auto replayed = ScriptedProvider::load(dir / "transcript.jsonl");
  EXPECT_EQ(replayed->complete_once(request("two")).text, "echo two");
  EXPECT_EQ(replayed->complete_once(request("one")).text, "echo one");
}

TEST(OpenAiWire, RequestBodyAndResponseParsing) {
  auto r = request("Rate this");
  r.model = "gpt-3.5-turbo";
  r.temperature = 0.7;
  r.max_output_tokens = 100;
  r.seed_hint = 3;
  const auto body = chat_request_body(r);
  EXPECT_EQ(body.at("model"), "gpt-3.5-turbo");
  EXPECT_EQ(body.at("messages").size(), 1u);
  EXPECT_EQ(body.at("messages")[0].at("role"), "user");
  EXPECT_EQ(body.at("messages")[0].at("content"), "Rate this");
  EXPECT_EQ(body.at("max_tokens"), 100);

  const auto ok = parse_chat_response(
      200, R"({"choices":[{"message":{"content":"Score: 4"},"finish_reason":"stop"}],"usage":{"prompt_tokens":5,"completion_tokens":3}})");
  EXPECT_EQ(ok.text, "Score: 4");
  EXPECT_EQ(ok.usage.completion_tokens, 3);
  const auto cut = parse_chat_response(200, R"({"choices":[{"message":{"content":"x"},"finish_reason":"length"}]})");
  EXPECT_EQ(cut.finish_reason, FinishReason::length);
  EXPECT_EQ(code_of([] { parse_chat_response(429, "{}"); }), Errc::rate_limited);
  EXPECT_EQ(code_of([] { parse_chat_response(502, "{}"); }), Errc::transport);
  EXPECT_EQ(code_of([] { parse_chat_response(401, R"({"error":{"message":"bad key"}})"); }), Errc::provider_rejected);
  EXPECT_EQ(code_of([] { parse_chat_response(200, "not json"); }), Errc::transport);
}

TEST(OpenAiProvider, TalksToTheMockServer) {
  auto script = std::make_shared<ScriptedProvider>(std::vector<ScriptRule>{
      parse_script_rule(json::parse(R"({"kind":"overall_direct","text":"Score: 5"})"))});
  MockServer server(script, std::make_shared<HashingEmbedder>(), ts::prompts());
  const int port = server.start("127.0.0.1", 0);
  ASSERT_GT(port, 0);

  OpenAiOptions o;
  o.base_url = "http://127.0.0.1:" + std::to_string(port) + "/v1";
  o.api_key = "test";
  o.embedding_model = "hashing";
  auto g = ts::gateway(std::make_shared<OpenAiChatProvider>(o));
  const auto lib = ts::prompts();
  Task task{"t1", "Describe", "i", "o", {{"s1", "in", "out", {}}}};
  CompletionRequest r;
  r.prompt = lib.render_direct_prompt(task, task.samples[0]);
  EXPECT_EQ(g->complete(r).text, "Score: 5");

  OpenAiEmbedder embedder(o);
  const std::vector<std::string> texts{"alpha beta", "gamma", "alpha beta"};
  const auto vs = embedder.embed(texts);
  ASSERT_EQ(vs.size(), 3u);
  EXPECT_EQ(vs[0], vs[2]);
  EXPECT_EQ(vs[0], HashingEmbedder().embed_one("alpha beta"));
  server.stop();
}

TEST(HttpEndpoint, ParsesBaseUrls) {
  const auto e = HttpEndpoint::parse("https://api.example.com/v1");
  EXPECT_EQ(e.scheme_host_port, "https://api.example.com:443");
  EXPECT_EQ(e.path_prefix, "/v1");
  const auto local = HttpEndpoint::parse("http://127.0.0.1:8000");
  EXPECT_EQ(local.scheme_host_port, "http://127.0.0.1:8000");
  EXPECT_EQ(local.path_prefix, "");
}
