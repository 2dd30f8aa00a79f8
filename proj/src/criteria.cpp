#include "coeval/criteria.hpp"

#include <algorithm>
#include <future>
#include <map>
#include <regex>
#include <sstream>

#include "coeval/error.hpp"
#include "coeval/text.hpp"

namespace coeval {

// ---- parsing ---------------------------------------------------------------

namespace {

struct ListItem {
  std::size_t indent = 0;
  std::string text;
  bool folded = false;  // absorbed into a parent item
};

std::string strip_emphasis(std::string s) {
  for (const char* token : {"**", "__"}) {
    for (auto pos = s.find(token); pos != std::string::npos; pos = s.find(token)) s.erase(pos, 2);
  }
  return s;
}

std::string strip_edge_punctuation(std::string s) {
  while (!s.empty() && (s.back() == '.' || s.back() == ',' || s.back() == ';' || s.back() == '*')) s.pop_back();
  return text::trim(s);
}

bool is_header(const std::string& item) {
  const auto t = text::trim(item);
  return !t.empty() && t.back() == ':';
}

std::string first_words(const std::string& s, std::size_t n) {
  std::istringstream in(s);
  std::string word, out;
  for (std::size_t i = 0; i < n && in >> word; ++i) out += (i ? " " : "") + word;
  return out;
}

}  // namespace

std::vector<Criterion> parse_criteria_list(std::string_view raw) {
  static const std::regex marker(R"(^([ \t]*)(?:[0-9]+[.)]|[-*+]|\xE2\x80\xA2)[ \t]+(.*)$)");

  std::vector<ListItem> items;
  bool open = false;
  for (const auto& line : text::split_lines(raw)) {
    std::smatch m;
    const auto cleaned = strip_emphasis(line);
    if (std::regex_match(cleaned, m, marker)) {
      ListItem item;
      for (char c : m[1].str()) item.indent += (c == '\t') ? 4 : 1;
      item.text = text::trim(m[2].str());
      items.push_back(std::move(item));
      open = true;
    } else if (text::trim(cleaned).empty()) {
      open = false;
    } else if (open) {
      items.back().text += " " + text::trim(cleaned);
    }
  }

  // Fold deeper-indented bullets into the nearest real (non-header) parent.
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (items[i].folded || is_header(items[i].text)) continue;
    for (std::size_t j = i + 1; j < items.size() && items[j].indent > items[i].indent; ++j) {
      items[i].text += " " + items[j].text;
      items[j].folded = true;
    }
  }

  std::vector<Criterion> out;
  std::map<std::string, int> seen;
  for (const auto& item : items) {
    if (item.folded || is_header(item.text) || text::trim(item.text).empty()) continue;
    Criterion c;
    const auto colon = item.text.find(':');
    std::string name = colon == std::string::npos ? std::string{} : strip_edge_punctuation(item.text.substr(0, colon));
    std::string statement = colon == std::string::npos ? std::string{} : text::trim(item.text.substr(colon + 1));
    if (name.empty() || statement.empty()) {
      statement = text::trim(item.text);
      name = strip_edge_punctuation(first_words(statement, 5));
    }
    const auto key = text::to_lower(name);
    if (const int count = ++seen[key]; count > 1) name += " #" + std::to_string(count);
    c.id = "c" + std::to_string(out.size() + 1);
    c.name = std::move(name);
    c.statement = std::move(statement);
    c.scale = ScoreScale::likert5();
    out.push_back(std::move(c));
  }
  if (out.empty()) throw Error(Errc::no_list_detected, "no criteria list found in model output");
  return out;
}

// ---- drafting --------------------------------------------------------------

DraftResult draft_criteria(Gateway& gateway, const PromptLibrary& prompts, const Task& task,
                           const std::string& batch_id, const DraftOptions& options) {
  if (options.n_samples < 0) throw Error(Errc::invalid_argument, "n_samples must be non-negative");
  const auto prompt = prompts.render_criteria_prompt(task);

  const int calls = options.n_samples + 1;
  std::vector<std::future<CompletionResponse>> pending;
  pending.reserve(static_cast<std::size_t>(calls));
  for (int k = 0; k < calls; ++k) {
    CompletionRequest req;
    req.model = options.model;
    req.prompt = prompt;
    req.temperature = k == 0 ? 0.0 : options.sample_temperature;
    req.max_output_tokens = options.max_output_tokens;
    req.seed_hint = k;
    pending.push_back(std::async(std::launch::async, [&gateway, req] { return gateway.complete(req); }));
  }

  // Wait for everything before surfacing the first failure so no call is
  // left running against a discarded batch.
  std::vector<CompletionResponse> responses;
  std::exception_ptr first_error;
  for (auto& f : pending) {
    try {
      responses.push_back(f.get());
    } catch (...) {
      if (!first_error) first_error = std::current_exception();
    }
  }
  if (first_error) std::rethrow_exception(first_error);

  DraftResult result;
  for (int k = 0; k < calls; ++k) {
    std::vector<Criterion> parsed;
    try {
      parsed = parse_criteria_list(responses[static_cast<std::size_t>(k)].text);
    } catch (const Error& e) {
      throw Error(Errc::parse_failure, std::string("criteria sampling ") + std::to_string(k) + ": " + e.what(),
                  {{"sampling", k}, {"raw", responses[static_cast<std::size_t>(k)].text}});
    }
    if (k == 0) {
      result.deterministic = make_draft_set(batch_id + "-det", task.id, std::move(parsed),
                                            {Provenance::Kind::deterministic_draft, 0}, 0.0);
    } else {
      result.sampled.push_back(make_draft_set(batch_id + "-s" + std::to_string(k), task.id, std::move(parsed),
                                              {Provenance::Kind::sampled_draft, k}, options.sample_temperature));
    }
  }
  return result;
}

// ---- consistency -----------------------------------------------------------

namespace {

double best_match(const EmbeddingVector& v, const EmbeddedSet& set) {
  double best = -1.0;
  for (const auto& w : set) best = std::max(best, cosine_similarity(v, w));
  return best;
}

void require_non_empty(const EmbeddedSet& set) {
  if (set.empty()) throw Error(Errc::empty_set, "criteria set is empty");
}

}  // namespace

double criteria_consistency(const EmbeddedSet& deterministic, std::span<const EmbeddedSet> sampled,
                            std::vector<double>* per_set_means) {
  require_non_empty(deterministic);
  if (sampled.empty()) throw Error(Errc::empty_set, "criteria consistency needs at least one sampled set");
  double total = 0.0;
  for (const auto& set : sampled) {
    require_non_empty(set);
    double set_sum = 0.0;
    for (const auto& c : deterministic) set_sum += best_match(c, set);
    total += set_sum;
    if (per_set_means) per_set_means->push_back(set_sum / static_cast<double>(deterministic.size()));
  }
  return total / (static_cast<double>(deterministic.size()) * static_cast<double>(sampled.size()));
}

double inter_criteria_consistency(std::span<const EmbeddedSet> sampled, std::vector<std::vector<double>>* pair_means) {
  const auto n = sampled.size();
  if (n < 2) throw Error(Errc::need_at_least_two_sets, "inter-criteria consistency needs at least two sampled sets");
  for (const auto& set : sampled) require_non_empty(set);
  if (pair_means) pair_means->assign(n, std::vector<double>(n, 0.0));

  double numerator = 0.0;
  double size_sum = 0.0;
  for (std::size_t m = 0; m < n; ++m) {
    size_sum += static_cast<double>(sampled[m].size());
    for (std::size_t k = 0; k < n; ++k) {
      if (k == m) continue;
      double pair_sum = 0.0;
      for (const auto& c : sampled[m]) pair_sum += best_match(c, sampled[k]);
      numerator += pair_sum;
      if (pair_means) (*pair_means)[m][k] = pair_sum / static_cast<double>(sampled[m].size());
    }
  }
  return numerator / (size_sum * static_cast<double>(n - 1));
}

namespace {

/// Embeds all criteria of the given sets with one gateway call (unique texts).
std::vector<EmbeddedSet> embed_sets(Gateway& gateway, std::span<const CriteriaSet* const> sets) {
  std::vector<std::string> unique;
  std::map<std::string, std::size_t> index;
  for (const auto* set : sets) {
    if (set->criteria.empty()) throw Error(Errc::empty_set, "criteria set " + set->id + " is empty");
    for (const auto& c : set->criteria) {
      auto t = c.text();
      if (index.emplace(t, unique.size()).second) unique.push_back(std::move(t));
    }
  }
  const auto vectors = gateway.embed(unique);
  std::vector<EmbeddedSet> out;
  for (const auto* set : sets) {
    EmbeddedSet e;
    for (const auto& c : set->criteria) e.push_back(vectors[index.at(c.text())]);
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace

double criteria_consistency(Gateway& gateway, const CriteriaSet& deterministic, std::span<const CriteriaSet> sampled) {
  if (sampled.empty()) throw Error(Errc::empty_set, "criteria consistency needs at least one sampled set");
  std::vector<const CriteriaSet*> sets{&deterministic};
  for (const auto& s : sampled) sets.push_back(&s);
  auto embedded = embed_sets(gateway, sets);
  return criteria_consistency(embedded.front(), std::span(embedded).subspan(1));
}

double inter_criteria_consistency(Gateway& gateway, std::span<const CriteriaSet> sampled) {
  if (sampled.size() < 2)
    throw Error(Errc::need_at_least_two_sets, "inter-criteria consistency needs at least two sampled sets");
  std::vector<const CriteriaSet*> sets;
  for (const auto& s : sampled) sets.push_back(&s);
  const auto embedded = embed_sets(gateway, sets);
  return inter_criteria_consistency(embedded);
}

ConsistencyReport consistency_report(Gateway& gateway, const CriteriaSet& deterministic,
                                     std::span<const CriteriaSet> sampled) {
  ConsistencyReport report;
  report.n_samples = static_cast<int>(sampled.size());
  if (sampled.empty()) return report;

  std::vector<const CriteriaSet*> sets{&deterministic};
  for (const auto& s : sampled) sets.push_back(&s);
  const auto embedded = embed_sets(gateway, sets);
  const auto sampled_embedded = std::span(embedded).subspan(1);

  std::vector<double> cc_means;
  report.cc = criteria_consistency(embedded.front(), sampled_embedded, &cc_means);
  for (std::size_t i = 0; i < sampled.size(); ++i)
    report.per_pair_details.push_back({deterministic.id, sampled[i].id, cc_means[i]});

  if (sampled.size() >= 2) {
    std::vector<std::vector<double>> pair_means;
    report.icc = inter_criteria_consistency(sampled_embedded, &pair_means);
    for (std::size_t m = 0; m < sampled.size(); ++m)
      for (std::size_t k = 0; k < sampled.size(); ++k)
        if (m != k) report.per_pair_details.push_back({sampled[m].id, sampled[k].id, pair_means[m][k]});
  }
  return report;
}

ConsistencyReport mean_consistency(std::span<const ConsistencyReport> reports) {
  ConsistencyReport out;
  double cc = 0.0, icc = 0.0;
  int n_cc = 0, n_icc = 0;
  for (const auto& r : reports) {
    if (r.cc) cc += *r.cc, ++n_cc;
    if (r.icc) icc += *r.icc, ++n_icc;
    out.n_samples = std::max(out.n_samples, r.n_samples);
  }
  if (n_cc > 0) out.cc = cc / n_cc;
  if (n_icc > 0) out.icc = icc / n_icc;
  return out;
}

// ---- alignment -------------------------------------------------------------

AlignmentRates rates_from_counts(const AlignmentCounts& counts) {
  AlignmentRates r;
  r.counts = counts;
  const double total = counts.total();
  if (total == 0) return r;
  r.approval = counts.approval / total;
  r.need_to_improve = counts.need_to_improve / total;
  r.deletion = counts.deletion / total;
  r.missing = counts.missing / total;
  return r;
}

AlignmentRates alignment_rates(const CriteriaSet& final_set, std::span<const HumanAction> audit) {
  CriteriaSet replayed = final_set;
  replayed.criteria = final_set.initial;
  replayed.provenance = final_set.drafted_as;
  replayed.audit.clear();
  try {
    for (const auto& act : audit) replayed = apply_action(replayed, act);
  } catch (const Error& e) {
    throw Error(Errc::audit_replay_mismatch, std::string("audit does not replay: ") + e.what(),
                {{"set_id", final_set.id}, {"cause", to_string(e.code())}});
  }

  // A finalized set must re-finalize from its replayed audit; leftover drafts
  // mean the audit is incomplete.
  std::vector<Criterion> compare = replayed.criteria;
  if (final_set.finalized()) {
    compare.clear();
    for (const auto& c : replayed.criteria) {
      if (c.status == CriterionStatus::draft)
        throw Error(Errc::audit_replay_mismatch, "audit leaves criterion " + c.id + " in draft",
                    {{"set_id", final_set.id}, {"criterion_id", c.id}});
      if (c.active()) compare.push_back(c);
    }
  }
  if (compare != final_set.criteria)
    throw Error(Errc::audit_replay_mismatch, "replayed audit does not reproduce set " + final_set.id,
                {{"set_id", final_set.id}});

  AlignmentCounts counts;
  std::vector<std::string> drafts;
  for (const auto& c : replayed.criteria) {
    if (c.origin == CriterionOrigin::human_added) {
      ++counts.missing;
      continue;
    }
    switch (c.status) {
      case CriterionStatus::approved: ++counts.approval; break;
      case CriterionStatus::revised: ++counts.need_to_improve; break;
      case CriterionStatus::deleted: ++counts.deletion; break;
      case CriterionStatus::draft: drafts.push_back(c.id); break;
    }
  }
  if (!drafts.empty())
    throw Error(Errc::draft_criteria_remain, "alignment rates need every drafted criterion actioned",
                {{"criterion_ids", drafts}});
  return rates_from_counts(counts);
}

}  // namespace coeval
