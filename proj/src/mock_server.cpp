#include <httplib.h>

#include <thread>

#include <spdlog/spdlog.h>

#include "coeval/error.hpp"
#include "coeval/providers.hpp"

namespace coeval {

using nlohmann::json;

struct MockServer::Impl {
  std::shared_ptr<ChatProvider> chat;
  std::shared_ptr<Embedder> embedder;
  PromptLibrary prompts;
  httplib::Server server;
  std::thread thread;

  Impl(std::shared_ptr<ChatProvider> c, std::shared_ptr<Embedder> e, PromptLibrary p)
      : chat(std::move(c)), embedder(std::move(e)), prompts(std::move(p)) {
    auto on_chat = [this](const httplib::Request& req, httplib::Response& res) { handle_chat(req, res); };
    auto on_embed = [this](const httplib::Request& req, httplib::Response& res) { handle_embed(req, res); };
    server.Post("/v1/chat/completions", on_chat);
    server.Post("/chat/completions", on_chat);
    server.Post("/v1/embeddings", on_embed);
    server.Post("/embeddings", on_embed);
  }

  static void fail(httplib::Response& res, int status, const std::string& message) {
    res.status = status;
    res.set_content(json{{"error", {{"message", message}}}}.dump(), "application/json");
  }

  static int status_for(Errc code) {
    switch (code) {
      case Errc::rate_limited: return 429;
      case Errc::transport: return 503;
      default: return 400;
    }
  }

  void handle_chat(const httplib::Request& req, httplib::Response& res) {
    CompletionRequest request;
    try {
      const auto body = json::parse(req.body);
      request.model = body.value("model", "");
      const auto& messages = body.at("messages");
      for (const auto& m : messages) request.prompt.text += m.at("content").get<std::string>();
      request.prompt.kind = prompts.classify(request.prompt.text).value_or(PromptKind::criteria_generation);
      request.temperature = body.value("temperature", 0.0);
      request.max_output_tokens = body.value("max_tokens", 1024);
      if (body.contains("seed")) request.seed_hint = body.at("seed").get<std::int64_t>();
    } catch (const json::exception& e) {
      fail(res, 400, e.what());
      return;
    }
    try {
      const auto r = chat->complete_once(request);
      json out{{"object", "chat.completion"},
               {"model", request.model},
               {"choices", json::array({json{{"index", 0},
                                             {"message", {{"role", "assistant"}, {"content", r.text}}},
                                             {"finish_reason", to_string(r.finish_reason)}}})},
               {"usage",
                {{"prompt_tokens", r.usage.prompt_tokens},
                 {"completion_tokens", r.usage.completion_tokens},
                 {"total_tokens", r.usage.prompt_tokens + r.usage.completion_tokens}}}};
      res.set_content(out.dump(), "application/json");
    } catch (const Error& e) {
      fail(res, status_for(e.code()), e.what());
    }
  }

  void handle_embed(const httplib::Request& req, httplib::Response& res) {
    std::vector<std::string> inputs;
    try {
      const auto body = json::parse(req.body);
      const auto& input = body.at("input");
      if (input.is_string())
        inputs.push_back(input.get<std::string>());
      else
        inputs = input.get<std::vector<std::string>>();
    } catch (const json::exception& e) {
      fail(res, 400, e.what());
      return;
    }
    try {
      const auto vectors = embedder->embed(inputs);
      json data = json::array();
      for (std::size_t i = 0; i < vectors.size(); ++i)
        data.push_back({{"object", "embedding"}, {"index", i}, {"embedding", vectors[i].values}});
      res.set_content(json{{"object", "list"}, {"data", data}}.dump(), "application/json");
    } catch (const Error& e) {
      fail(res, status_for(e.code()), e.what());
    }
  }
};

MockServer::MockServer(std::shared_ptr<ChatProvider> chat, std::shared_ptr<Embedder> embedder, PromptLibrary prompts)
    : impl_(std::make_unique<Impl>(std::move(chat), std::move(embedder), std::move(prompts))) {}

MockServer::~MockServer() { stop(); }

int MockServer::start(const std::string& host, int port) {
  int bound = port;
  if (port == 0) {
    bound = impl_->server.bind_to_any_port(host);
  } else if (!impl_->server.bind_to_port(host, port)) {
    bound = -1;
  }
  if (bound < 0) throw Error(Errc::io_error, "mock server cannot bind " + host + ":" + std::to_string(port));
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return bound;
}

void MockServer::listen(const std::string& host, int port) {
  spdlog::info("mock provider listening on {}:{}", host, port);
  if (!impl_->server.listen(host, port))
    throw Error(Errc::io_error, "mock server cannot listen on " + host + ":" + std::to_string(port));
}

void MockServer::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace coeval
