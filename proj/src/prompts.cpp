#include "coeval/prompts.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include <spdlog/spdlog.h>

#include "coeval/digest.hpp"
#include "coeval/error.hpp"
#include "coeval/text.hpp"

#ifndef COEVAL_PROMPT_DIR
#define COEVAL_PROMPT_DIR "assets/prompts"
#endif

namespace coeval {

namespace {

const std::set<std::string>& known_placeholders() {
  static const std::set<std::string> names{"task_desc",    "input",         "output", "criterion",
                                           "lowest_score", "highest_score", "history"};
  return names;
}

std::vector<std::string> required_placeholders(PromptKind kind) {
  switch (kind) {
    case PromptKind::criteria_generation:
    case PromptKind::overall_direct:
      return {"task_desc", "input", "output"};
    case PromptKind::criterion_eval:
      return {"task_desc", "input", "output", "criterion", "lowest_score", "highest_score"};
    case PromptKind::overall_step_by_step:
      return {"task_desc", "input", "output", "history", "lowest_score", "highest_score"};
  }
  return {};
}

bool is_ident_char(char c) { return std::islower(static_cast<unsigned char>(c)) || c == '_'; }

}  // namespace

std::string_view to_string(PromptKind kind) {
  switch (kind) {
    case PromptKind::criteria_generation: return "criteria_generation";
    case PromptKind::criterion_eval: return "criterion_eval";
    case PromptKind::overall_step_by_step: return "overall_step_by_step";
    case PromptKind::overall_direct: return "overall_direct";
  }
  return "?";
}

PromptKind parse_prompt_kind(std::string_view s) {
  for (auto k : kAllPromptKinds)
    if (to_string(k) == s) return k;
  throw Error(Errc::invalid_argument, "unknown prompt kind: " + std::string(s));
}

PromptTemplate::PromptTemplate(PromptKind kind, std::string body) : kind_(kind), body_(text::trim_right(body)) {
  std::string literal;
  for (std::size_t i = 0; i < body_.size();) {
    if (body_[i] == '{') {
      auto close = body_.find('}', i + 1);
      if (close != std::string::npos && close > i + 1 &&
          std::all_of(body_.begin() + static_cast<std::ptrdiff_t>(i) + 1,
                      body_.begin() + static_cast<std::ptrdiff_t>(close), is_ident_char)) {
        auto name = body_.substr(i + 1, close - i - 1);
        if (!known_placeholders().contains(name))
          throw Error(Errc::template_error, "unknown placeholder {" + name + "} in " + std::string(to_string(kind)));
        pieces_.push_back({false, std::move(literal)});
        literal.clear();
        pieces_.push_back({true, name});
        if (std::find(placeholders_.begin(), placeholders_.end(), name) == placeholders_.end())
          placeholders_.push_back(name);
        i = close + 1;
        continue;
      }
    }
    literal += body_[i++];
  }
  pieces_.push_back({false, std::move(literal)});
  for (const auto& req : required_placeholders(kind)) {
    if (std::find(placeholders_.begin(), placeholders_.end(), req) == placeholders_.end())
      throw Error(Errc::template_error,
                  "template " + std::string(to_string(kind)) + " lacks required placeholder {" + req + "}");
  }
}

std::string PromptTemplate::substitute(const std::map<std::string, std::string>& values) const {
  std::string out;
  for (const auto& piece : pieces_) {
    if (!piece.placeholder) {
      out += piece.text;
      continue;
    }
    auto it = values.find(piece.text);
    if (it == values.end()) throw Error(Errc::template_error, "no value for placeholder {" + piece.text + "}");
    out += it->second;
  }
  return out;
}

std::vector<std::string> PromptTemplate::literal_segments() const {
  std::vector<std::string> out;
  for (const auto& piece : pieces_)
    if (!piece.placeholder && !piece.text.empty()) out.push_back(piece.text);
  return out;
}

std::string format_history(std::span<const HistoryEntry> history) {
  std::string out;
  for (std::size_t i = 0; i < history.size(); ++i) {
    if (i > 0) out += "\n\n";
    out += "Criterion: " + text::trim(history[i].criterion) + "\n";
    out += "Evaluation: " + text::trim(history[i].explanation) + "\n";
    out += "Score: " + std::to_string(history[i].score);
  }
  return out;
}

PromptLibrary::PromptLibrary(std::vector<PromptTemplate> templates) : templates_(std::move(templates)) {
  for (auto kind : kAllPromptKinds) (void)get(kind);
}

std::filesystem::path PromptLibrary::default_dir() {
  if (const char* env = std::getenv("COEVAL_PROMPT_DIR"); env != nullptr && *env != '\0') return env;
  return COEVAL_PROMPT_DIR;
}

PromptLibrary PromptLibrary::load(const std::filesystem::path& dir) {
  std::vector<PromptTemplate> templates;
  for (auto kind : kAllPromptKinds) {
    const auto path = dir / (std::string(to_string(kind)) + ".txt");
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::io_error, "cannot read prompt template " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    const auto body = buf.str();
    spdlog::debug("prompt template {} sha256={}", path.string(), sha256_hex(body));
    templates.emplace_back(kind, body);
  }
  return PromptLibrary(std::move(templates));
}

const PromptTemplate& PromptLibrary::get(PromptKind kind) const {
  auto it = std::find_if(templates_.begin(), templates_.end(),
                         [&](const PromptTemplate& t) { return t.kind() == kind; });
  if (it == templates_.end())
    throw Error(Errc::template_error, "no template loaded for " + std::string(to_string(kind)));
  return *it;
}

std::string PromptLibrary::checksum(PromptKind kind) const { return sha256_hex(get(kind).body()); }

RenderedPrompt PromptLibrary::render(PromptKind kind, std::map<std::string, std::string> values) const {
  for (auto& [name, value] : values) value = text::trim_right(value);
  RenderedPrompt out;
  out.kind = kind;
  out.text = get(kind).substitute(values);
  out.placeholder_values = std::move(values);
  return out;
}

RenderedPrompt PromptLibrary::render_criteria_prompt(const Task& task) const {
  if (text::trim(task.demo_input).empty() || text::trim(task.demo_output).empty())
    throw Error(Errc::missing_demonstration, "task " + task.id + " has no demonstration example",
                {{"task_id", task.id}});
  return render(PromptKind::criteria_generation,
                {{"task_desc", task.description}, {"input", task.demo_input}, {"output", task.demo_output}});
}

RenderedPrompt PromptLibrary::render_criterion_eval_prompt(const Task& task, const Sample& sample,
                                                           const Criterion& criterion) const {
  if (!criterion.active())
    throw Error(Errc::unapproved_criterion, "criterion " + criterion.id + " is " +
                                                std::string(to_string(criterion.status)),
                {{"criterion_id", criterion.id}});
  return render(PromptKind::criterion_eval, {{"task_desc", task.description},
                                             {"input", sample.input},
                                             {"output", sample.output},
                                             {"criterion", criterion.text()},
                                             {"lowest_score", std::to_string(criterion.scale.min)},
                                             {"highest_score", std::to_string(criterion.scale.max)}});
}

RenderedPrompt PromptLibrary::render_overall_prompt(const Task& task, const Sample& sample,
                                                    std::span<const HistoryEntry> history,
                                                    const ScoreScale& overall_scale) const {
  if (history.empty()) throw Error(Errc::empty_history, "overall prompt needs at least one criterion evaluation");
  return render(PromptKind::overall_step_by_step, {{"task_desc", task.description},
                                                   {"input", sample.input},
                                                   {"output", sample.output},
                                                   {"history", format_history(history)},
                                                   {"lowest_score", std::to_string(overall_scale.min)},
                                                   {"highest_score", std::to_string(overall_scale.max)}});
}

RenderedPrompt PromptLibrary::render_direct_prompt(const Task& task, const Sample& sample) const {
  return render(PromptKind::overall_direct,
                {{"task_desc", task.description}, {"input", sample.input}, {"output", sample.output}});
}

std::optional<PromptKind> PromptLibrary::classify(std::string_view text) const {
  // Templates can share literals (the opening line), so prefer the template
  // that matches the most literal text.
  std::optional<PromptKind> best;
  std::size_t best_len = 0;
  for (const auto& t : templates_) {
    std::size_t pos = 0;
    std::size_t matched = 0;
    bool ok = true;
    for (const auto& seg : t.literal_segments()) {
      auto at = text.find(seg, pos);
      if (at == std::string_view::npos) {
        ok = false;
        break;
      }
      pos = at + seg.size();
      matched += seg.size();
    }
    if (ok && matched > best_len) {
      best = t.kind();
      best_len = matched;
    }
  }
  return best;
}

}  // namespace coeval
