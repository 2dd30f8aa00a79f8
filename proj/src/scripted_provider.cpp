#include <algorithm>
#include <fstream>

#include "coeval/error.hpp"
#include "coeval/providers.hpp"
#include "coeval/text.hpp"

namespace coeval {

namespace {

ScriptResponse parse_response(const nlohmann::json& j) {
  ScriptResponse r;
  r.text = j.value("text", "");
  r.finish_reason = parse_finish_reason(j.value("finish_reason", "stop"));
  r.status = j.value("status", 200);
  return r;
}

}  // namespace

ScriptRule parse_script_rule(const nlohmann::json& j) {
  if (!j.is_object()) throw Error(Errc::invalid_argument, "script rule must be a JSON object");
  ScriptRule rule;
  if (j.contains("kind")) rule.kind = parse_prompt_kind(j.at("kind").get<std::string>());
  if (j.contains("contains")) {
    const auto& c = j.at("contains");
    if (c.is_string())
      rule.contains.push_back(c.get<std::string>());
    else
      rule.contains = c.get<std::vector<std::string>>();
  }
  if (j.contains("prompt")) rule.prompt = j.at("prompt").get<std::string>();
  if (j.contains("temperature")) rule.temperature = j.at("temperature").get<double>();
  if (j.contains("seed")) rule.seed = j.at("seed").get<std::int64_t>();
  if (j.contains("responses")) {
    for (const auto& r : j.at("responses")) rule.responses.push_back(parse_response(r));
  } else {
    rule.responses.push_back(parse_response(j));
  }
  if (rule.responses.empty()) throw Error(Errc::invalid_argument, "script rule has no responses");
  return rule;
}

ScriptedProvider::ScriptedProvider(std::vector<ScriptRule> rules)
    : rules_(std::move(rules)), hits_(rules_.size(), 0) {}

std::shared_ptr<ScriptedProvider> ScriptedProvider::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::io_error, "cannot read mock script " + path.string());
  std::vector<ScriptRule> rules;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (text::trim(line).empty()) continue;
    try {
      rules.push_back(parse_script_rule(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::invalid_argument, path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return std::make_shared<ScriptedProvider>(std::move(rules));
}

CompletionResponse ScriptedProvider::complete_once(const CompletionRequest& request) {
  calls_.fetch_add(1);
  const auto& prompt = request.prompt.text;
  ScriptResponse chosen;
  bool found = false;
  {
    std::lock_guard lock(mutex_);
    for (std::size_t i = 0; i < rules_.size() && !found; ++i) {
      const auto& rule = rules_[i];
      if (rule.kind && *rule.kind != request.prompt.kind) continue;
      if (rule.prompt && *rule.prompt != prompt) continue;
      if (rule.temperature && *rule.temperature != request.temperature) continue;
      if (rule.seed && rule.seed != request.seed_hint) continue;
      if (!std::all_of(rule.contains.begin(), rule.contains.end(),
                       [&](const std::string& s) { return prompt.find(s) != std::string::npos; }))
        continue;
      chosen = rule.responses[std::min(hits_[i], rule.responses.size() - 1)];
      ++hits_[i];
      found = true;
    }
  }
  if (!found)
    throw Error(Errc::provider_rejected, "no scripted response matches the request",
                {{"kind", to_string(request.prompt.kind)}});
  if (chosen.status == 429) throw Error(Errc::rate_limited, "scripted rate limit (429)");
  if (chosen.status >= 500) throw Error(Errc::transport, "scripted server error " + std::to_string(chosen.status));
  if (chosen.status != 200) throw Error(Errc::provider_rejected, "scripted rejection " + std::to_string(chosen.status));

  CompletionResponse response;
  response.text = std::move(chosen.text);
  response.finish_reason = chosen.finish_reason;
  response.usage.prompt_tokens = static_cast<int>(HashingEmbedder::tokenize(prompt).size());
  response.usage.completion_tokens = static_cast<int>(HashingEmbedder::tokenize(response.text).size());
  return response;
}

}  // namespace coeval
