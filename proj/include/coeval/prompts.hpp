#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "coeval/domain.hpp"

namespace coeval {

enum class PromptKind { criteria_generation, criterion_eval, overall_step_by_step, overall_direct };

inline constexpr std::array kAllPromptKinds{PromptKind::criteria_generation, PromptKind::criterion_eval,
                                            PromptKind::overall_step_by_step, PromptKind::overall_direct};

std::string_view to_string(PromptKind kind);
PromptKind parse_prompt_kind(std::string_view s);

/// Template text with `{name}` placeholders. Construction validates that
/// every placeholder is known and that the kind's required ones are present.
class PromptTemplate {
 public:
  PromptTemplate(PromptKind kind, std::string body);

  PromptKind kind() const noexcept { return kind_; }
  const std::string& body() const noexcept { return body_; }
  const std::vector<std::string>& placeholders() const noexcept { return placeholders_; }

  /// Single-pass substitution; values are never re-scanned for markers.
  std::string substitute(const std::map<std::string, std::string>& values) const;

  /// Literal text between placeholders, in order. Used to recognise which
  /// template produced a rendered prompt.
  std::vector<std::string> literal_segments() const;

 private:
  struct Piece {
    bool placeholder;
    std::string text;
  };
  PromptKind kind_;
  std::string body_;
  std::vector<Piece> pieces_;
  std::vector<std::string> placeholders_;
};

struct RenderedPrompt {
  PromptKind kind = PromptKind::criteria_generation;
  std::string text;
  std::map<std::string, std::string> placeholder_values;

  friend bool operator==(const RenderedPrompt&, const RenderedPrompt&) = default;
};

/// One prior criterion-level turn replayed into the overall prompt.
struct HistoryEntry {
  std::string criterion;  // "name: statement"
  std::string explanation;
  int score = 0;
};

/// Serialises history as blocks of "Criterion:", "Evaluation:", "Score:"
/// lines separated by a blank line.
std::string format_history(std::span<const HistoryEntry> history);

class PromptLibrary {
 public:
  /// Reads `<kind>.txt` for every kind from `dir` and logs a SHA-256 per asset.
  static PromptLibrary load(const std::filesystem::path& dir);
  /// Directory from $COEVAL_PROMPT_DIR, else the build-time asset directory.
  static std::filesystem::path default_dir();

  explicit PromptLibrary(std::vector<PromptTemplate> templates);

  const PromptTemplate& get(PromptKind kind) const;
  std::string checksum(PromptKind kind) const;

  RenderedPrompt render_criteria_prompt(const Task& task) const;
  RenderedPrompt render_criterion_eval_prompt(const Task& task, const Sample& sample, const Criterion& criterion) const;
  RenderedPrompt render_overall_prompt(const Task& task, const Sample& sample, std::span<const HistoryEntry> history,
                                       const ScoreScale& overall_scale = ScoreScale::likert5()) const;
  RenderedPrompt render_direct_prompt(const Task& task, const Sample& sample) const;

  /// Which template produced `text`, if any.
  std::optional<PromptKind> classify(std::string_view text) const;

 private:
  RenderedPrompt render(PromptKind kind, std::map<std::string, std::string> values) const;

  std::vector<PromptTemplate> templates_;
};

}  // namespace coeval
