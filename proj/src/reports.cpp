#include "coeval/reports.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>

#include <spdlog/spdlog.h>

#include "coeval/error.hpp"
#include "coeval/evaluation.hpp"
#include "coeval/serialize.hpp"
#include "coeval/text.hpp"

namespace coeval {

using nlohmann::json;

std::string_view to_string(ReportKind kind) {
  switch (kind) {
    case ReportKind::correlations: return "correlations";
    case ReportKind::agreement: return "agreement";
    case ReportKind::distribution: return "distribution";
    case ReportKind::behavior: return "behavior";
  }
  return "?";
}

ReportKind parse_report_kind(std::string_view s) {
  for (auto k : {ReportKind::correlations, ReportKind::agreement, ReportKind::distribution, ReportKind::behavior})
    if (to_string(k) == s) return k;
  throw Error(Errc::invalid_argument, "unknown report kind: " + std::string(s));
}

// ---- formatting ------------------------------------------------------------

std::string format_number(const std::optional<double>& v, int precision) {
  if (!v || !std::isfinite(*v)) return "NaN";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", precision, *v);
  return buf;
}

std::string format_number(const json& v, int precision) {
  if (v.is_number()) return format_number(std::optional<double>(v.get<double>()), precision);
  return "NaN";
}

std::string format_table(const std::vector<std::vector<std::string>>& rows) {
  if (rows.empty()) return {};
  std::vector<std::size_t> widths;
  for (const auto& row : rows)
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (widths.size() <= i) widths.push_back(0);
      widths[i] = std::max(widths[i], row[i].size());
    }
  auto line = [&](const std::vector<std::string>& row) {
    std::string out;
    for (std::size_t i = 0; i < row.size(); ++i) {
      out += row[i];
      if (i + 1 < row.size()) out += std::string(widths[i] - row[i].size() + 2, ' ');
    }
    return text::trim_right(out) + "\n";
  };
  std::string out = line(rows.front());
  std::size_t total = 0;
  for (auto w : widths) total += w + 2;
  out += std::string(total > 2 ? total - 2 : 0, '-') + "\n";
  for (std::size_t r = 1; r < rows.size(); ++r) out += line(rows[r]);
  return out;
}

namespace {

std::string percent(double ratio) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f%%", ratio * 100.0);
  return buf;
}

// ---- score matrix helpers --------------------------------------------------

const CriteriaSet* run_criteria(const State& state, const EvaluationRun& run) {
  if (!run.criteria_set_id) return nullptr;
  return &state.set(*run.criteria_set_id);
}

std::optional<std::string> resolve_criterion(const CriteriaSet* set, const std::string& key) {
  if (!set) return std::nullopt;
  for (const auto& c : set->criteria)
    if (c.id == key) return c.id;
  for (const auto& c : set->criteria)
    if (text::iequals(c.name, key)) return c.id;
  return std::nullopt;
}

void fill_from(ScoreMatrix& m, const Rater& rater, const SampleEvaluation& e, ItemScope scope) {
  if (scope != ItemScope::criteria) {
    if (auto i = m.item_index(e.sample_id + "/overall")) m.cells[m.add_rater(rater)][*i] = e.overall_score;
  }
  if (scope != ItemScope::overall)
    for (const auto& ce : e.criterion_evals)
      if (auto i = m.item_index(e.sample_id + "/" + ce.criterion_id)) m.cells[m.add_rater(rater)][*i] = ce.score;
}

std::vector<std::size_t> raters_of(const ScoreMatrix& m, RaterKind kind) {
  std::vector<std::size_t> out;
  for (std::size_t r = 0; r < m.raters.size(); ++r)
    if (m.raters[r].kind == kind) out.push_back(r);
  return out;
}

}  // namespace

ScoreMatrix build_score_matrix(const State& state, const std::string& run_id, ItemScope scope) {
  const auto& run = state.run(run_id);
  const auto* set = run_criteria(state, run);

  ScoreMatrix m;
  for (const auto& sample_id : run.sample_ids) {
    if (scope != ItemScope::overall && set)
      for (const auto& c : set->criteria) m.add_item(sample_id + "/" + c.id);
    if (scope != ItemScope::criteria) m.add_item(sample_id + "/overall");
  }

  const Rater llm{"llm", RaterKind::llm};
  const Rater hitl{"hitl", RaterKind::hitl};
  for (const auto& sample_id : run.sample_ids) {
    const auto id = evaluation_id(run_id, sample_id);
    if (auto it = state.drafts.find(id); it != state.drafts.end()) fill_from(m, llm, it->second, scope);
  }
  for (const auto& sample_id : run.sample_ids) {
    const auto id = evaluation_id(run_id, sample_id);
    if (auto it = state.finals.find(id); it != state.finals.end()) fill_from(m, hitl, it->second, scope);
  }

  if (auto it = state.human_scores.find(run_id); it != state.human_scores.end()) {
    for (const auto& s : it->second) {
      const auto slash = s.item.rfind('/');
      const auto sample = s.item.substr(0, slash);
      const auto key = s.item.substr(slash + 1);
      std::string item;
      if (text::iequals(key, "overall")) {
        item = sample + "/overall";
      } else if (auto cid = resolve_criterion(set, key)) {
        item = sample + "/" + *cid;
      } else {
        spdlog::warn("human score item {} names no criterion of run {}", s.item, run_id);
        continue;
      }
      if (auto i = m.item_index(item)) m.cells[m.add_rater({s.rater, RaterKind::human})][*i] = s.score;
    }
  }
  return m;
}

// ---- report payloads -------------------------------------------------------

json to_json_value(const Histogram& h) {
  return json{{"group", h.group}, {"min", h.min},       {"max", h.max},     {"labels", h.labels},
              {"counts", h.counts}, {"ratios", h.ratios}, {"total", h.total}};
}

namespace {

json correlations(const State& state, const std::string& run_id) {
  const auto m = build_score_matrix(state, run_id, ItemScope::overall);
  const auto humans = raters_of(m, RaterKind::human);

  json sample_level = json::array();
  if (!humans.empty()) {
    for (auto kind : {RaterKind::llm, RaterKind::hitl})
      for (auto r : raters_of(m, kind)) {
        std::vector<double> x, y;
        for (std::size_t i = 0; i < m.items.size(); ++i) {
          if (!m.cells[r][i]) continue;
          double sum = 0.0;
          int n = 0;
          for (auto h : humans)
            if (m.cells[h][i]) sum += *m.cells[h][i], ++n;
          if (n == 0) continue;
          x.push_back(*m.cells[r][i]);
          y.push_back(sum / n);
        }
        std::optional<double> pr, sr;
        if (x.size() >= 2) {
          pr = pearson(x, y);
          sr = spearman(x, y);
        }
        sample_level.push_back({{"rater", m.raters[r].id},
                                {"versus", "human_mean"},
                                {"n", x.size()},
                                {"pearson", number_or_nan(pr)},
                                {"spearman", number_or_nan(sr)}});
      }
  }

  json pairwise = json::array();
  for (auto p : {Pairing::llm_vs_humans, Pairing::hitl_vs_humans, Pairing::humans_vs_humans}) {
    json entry{{"pairing", to_string(p)}, {"mean", "NaN"}, {"pairs", 0}, {"skipped", 0}, {"details", json::array()}};
    try {
      const auto s = pairwise_correlation_report(m, p);
      entry["mean"] = number_or_nan(s.mean);
      entry["pairs"] = s.pairs;
      entry["skipped"] = s.skipped;
      for (const auto& d : s.details)
        entry["details"].push_back(
            {{"rater_a", d.rater_a}, {"rater_b", d.rater_b}, {"n", d.n}, {"pearson", number_or_nan(d.pearson)}});
    } catch (const Error& e) {
      if (e.code() != Errc::no_pairs) throw;
    }
    pairwise.push_back(std::move(entry));
  }
  return json{{"sample_level", sample_level}, {"pairwise", pairwise}};
}

AlphaMetric default_metric(const State& state, const EvaluationRun& run) {
  const auto* set = run_criteria(state, run);
  if (!set || set->criteria.empty()) return AlphaMetric::interval;
  const bool all_categorical = std::all_of(set->criteria.begin(), set->criteria.end(), [](const Criterion& c) {
    return c.scale.kind == ScaleKind::categorical3;
  });
  return all_categorical ? AlphaMetric::nominal : AlphaMetric::interval;
}

json agreement(const State& state, const std::string& run_id, const ReportOptions& options) {
  const auto metric = options.metric.value_or(default_metric(state, state.run(run_id)));
  const auto m = build_score_matrix(state, run_id, ItemScope::all);

  json overall{{"alpha", "NaN"}, {"trivial", false}, {"pairable_values", 0}};
  if (m.raters.size() >= 2) {
    try {
      const auto a = krippendorff_alpha(m, metric);
      overall = {{"alpha", number_or_nan(a.value)}, {"trivial", a.trivial}, {"pairable_values", a.pairable_values}};
    } catch (const Error& e) {
      if (e.code() != Errc::no_pairable_values) throw;
    }
  }
  json pairs = json::array();
  for (const auto& p : pairwise_alpha(m, metric, options.high_agreement))
    pairs.push_back({{"rater_a", p.rater_a},
                     {"rater_b", p.rater_b},
                     {"alpha", number_or_nan(p.alpha)},
                     {"high_agreement", p.high_agreement}});
  json raters = json::array();
  for (const auto& r : m.raters) raters.push_back({{"id", r.id}, {"kind", to_string(r.kind)}});
  return json{{"metric", to_string(metric)},
              {"threshold", options.high_agreement},
              {"raters", raters},
              {"overall", overall},
              {"pairs", pairs}};
}

json distribution(const State& state, const std::string& run_id) {
  const auto& run = state.run(run_id);
  const auto& task = state.task(run.task_id);
  const auto* set = run_criteria(state, run);
  std::vector<SampleEvaluation> evals;
  for (const auto& sample_id : run.sample_ids)
    if (auto it = state.drafts.find(evaluation_id(run_id, sample_id)); it != state.drafts.end())
      evals.push_back(it->second);

  const std::vector<Criterion> criteria = set ? set->criteria : std::vector<Criterion>{};
  json by_source = json::array(), by_criterion = json::array(), by_rater = json::array();
  if (!evals.empty()) {
    for (const auto& h : score_distribution(evals, GroupBy::source, task, criteria)) by_source.push_back(to_json_value(h));
    if (set)
      for (const auto& h : score_distribution(evals, GroupBy::criterion, task, criteria))
        by_criterion.push_back(to_json_value(h));
  }
  for (const auto& h : distribution_by_rater(build_score_matrix(state, run_id, ItemScope::overall), ScoreScale::likert5()))
    by_rater.push_back(to_json_value(h));
  return json{{"by_source", by_source}, {"by_criterion", by_criterion}, {"by_rater", by_rater}};
}

json behavior(const State& state, const std::string& run_id, const ReportOptions& options) {
  const auto m = build_score_matrix(state, run_id, ItemScope::all);
  const auto llm = m.rater_index("llm");
  const auto hitl = m.rater_index("hitl");
  const auto humans = raters_of(m, RaterKind::human);

  std::map<std::string, int> counts;
  for (auto b : {Behavior::correction, Behavior::scrutiny, Behavior::subjectivity, Behavior::outlier,
                 Behavior::agreement})
    counts[std::string(to_string(b))] = 0;
  json records = json::array();
  if (llm && hitl) {
    for (std::size_t i = 0; i < m.items.size(); ++i) {
      const auto l = m.cells[*llm][i];
      const auto h = m.cells[*hitl][i];
      std::vector<int> hs;
      for (auto r : humans)
        if (m.cells[r][i]) hs.push_back(*m.cells[r][i]);
      if (!l || !h || hs.empty()) continue;
      const auto rec = classify_behavior(*l, *h, hs, options.thresholds, m.items[i]);
      ++counts[std::string(to_string(rec.category))];
      records.push_back({{"item", rec.item},
                         {"llm", rec.llm_score},
                         {"hitl", rec.hitl_final_score},
                         {"humans", rec.human_eval_scores},
                         {"majority", rec.majority},
                         {"disparity", rec.disparity},
                         {"category", to_string(rec.category)}});
    }
  }
  return json{{"thresholds", {{"conflict", options.thresholds.conflict}, {"disparity", options.thresholds.disparity}}},
              {"counts", counts},
              {"records", records}};
}

}  // namespace

json compute_report(const State& state, const std::string& run_id, ReportKind kind, const ReportOptions& options) {
  json body;
  switch (kind) {
    case ReportKind::correlations: body = correlations(state, run_id); break;
    case ReportKind::agreement: body = agreement(state, run_id, options); break;
    case ReportKind::distribution: body = distribution(state, run_id); break;
    case ReportKind::behavior: body = behavior(state, run_id, options); break;
  }
  body["run_id"] = run_id;
  body["kind"] = to_string(kind);
  return body;
}

// ---- tables and CSV --------------------------------------------------------

namespace {

std::vector<std::vector<std::string>> histogram_rows(const json& hists, const std::string& grouping, bool with_head) {
  std::vector<std::vector<std::string>> rows;
  if (with_head) rows.push_back({"grouping", "group", "score", "label", "count", "ratio"});
  for (const auto& h : hists) {
    const auto min = h.at("min").get<int>();
    const auto& labels = h.at("labels");
    for (std::size_t i = 0; i < h.at("counts").size(); ++i) {
      const auto label = i < labels.size() ? labels[i].get<std::string>() : std::string{};
      rows.push_back({grouping, h.at("group").get<std::string>(), std::to_string(min + static_cast<int>(i)), label,
                      std::to_string(h.at("counts")[i].get<std::size_t>()), format_number(h.at("ratios")[i], 4)});
    }
  }
  return rows;
}

std::string histogram_table(const json& hists, const std::string& title) {
  if (hists.empty()) return {};
  // groups as rows, score bins as columns (percentages)
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> head{title};
  const auto& first = hists.front();
  const auto min = first.at("min").get<int>();
  for (std::size_t i = 0; i < first.at("counts").size(); ++i) {
    const auto& labels = first.at("labels");
    head.push_back(i < labels.size() ? labels[i].get<std::string>() : std::to_string(min + static_cast<int>(i)));
  }
  head.push_back("n");
  rows.push_back(head);
  for (const auto& h : hists) {
    std::vector<std::string> row{h.at("group").get<std::string>()};
    for (const auto& r : h.at("ratios")) row.push_back(percent(r.get<double>()));
    row.push_back(std::to_string(h.at("total").get<std::size_t>()));
    rows.push_back(row);
  }
  return format_table(rows);
}

}  // namespace

std::string render_report_table(ReportKind kind, const json& report) {
  std::string out;
  switch (kind) {
    case ReportKind::correlations: {
      std::vector<std::vector<std::string>> rows{{"rater", "versus", "n", "r", "rho"}};
      for (const auto& e : report.at("sample_level"))
        rows.push_back({e.at("rater").get<std::string>(), e.at("versus").get<std::string>(),
                        std::to_string(e.at("n").get<std::size_t>()), format_number(e.at("pearson")),
                        format_number(e.at("spearman"))});
      out += "Sample-level correlation of overall scores\n" + format_table(rows) + "\n";
      std::vector<std::vector<std::string>> pr{{"pairing", "mean r", "pairs", "skipped"}};
      for (const auto& e : report.at("pairwise"))
        pr.push_back({e.at("pairing").get<std::string>(), format_number(e.at("mean")),
                      std::to_string(e.at("pairs").get<std::size_t>()), std::to_string(e.at("skipped").get<std::size_t>())});
      out += "Average pairwise Pearson correlation\n" + format_table(pr);
      break;
    }
    case ReportKind::agreement: {
      out += "Krippendorff's alpha (" + report.at("metric").get<std::string>() +
             "): " + format_number(report.at("overall").at("alpha"), 3) + "\n\n";
      std::vector<std::vector<std::string>> rows{{"rater a", "rater b", "alpha", "high"}};
      for (const auto& p : report.at("pairs"))
        rows.push_back({p.at("rater_a").get<std::string>(), p.at("rater_b").get<std::string>(),
                        format_number(p.at("alpha"), 3), p.at("high_agreement").get<bool>() ? "*" : ""});
      out += format_table(rows);
      break;
    }
    case ReportKind::distribution: {
      for (const auto& [key, title] : {std::pair{"by_source", "source"}, std::pair{"by_criterion", "criterion"},
                                       std::pair{"by_rater", "rater"}}) {
        const auto table = histogram_table(report.at(key), title);
        if (!table.empty()) out += (out.empty() ? "" : "\n") + table;
      }
      break;
    }
    case ReportKind::behavior: {
      std::vector<std::vector<std::string>> rows{{"category", "count"}};
      for (const auto& name : {"correction", "scrutiny", "subjectivity", "outlier", "agreement"})
        rows.push_back({name, std::to_string(report.at("counts").at(name).get<int>())});
      out += format_table(rows);
      break;
    }
  }
  return out;
}

std::vector<std::pair<std::string, std::string>> report_csv_files(ReportKind kind, const json& report) {
  using text::csv_row;
  std::string csv;
  std::string name = std::string(to_string(kind)) + ".csv";
  switch (kind) {
    case ReportKind::correlations:
      csv = csv_row({"section", "rater_a", "rater_b", "n", "pearson", "spearman"});
      for (const auto& e : report.at("sample_level"))
        csv += csv_row({"sample_level", e.at("rater").get<std::string>(), e.at("versus").get<std::string>(),
                        std::to_string(e.at("n").get<std::size_t>()), format_number(e.at("pearson"), 6),
                        format_number(e.at("spearman"), 6)});
      for (const auto& p : report.at("pairwise"))
        for (const auto& d : p.at("details"))
          csv += csv_row({p.at("pairing").get<std::string>(), d.at("rater_a").get<std::string>(),
                          d.at("rater_b").get<std::string>(), std::to_string(d.at("n").get<std::size_t>()),
                          format_number(d.at("pearson"), 6), ""});
      break;
    case ReportKind::agreement:
      csv = csv_row({"rater_a", "rater_b", "alpha", "high_agreement"});
      for (const auto& p : report.at("pairs"))
        csv += csv_row({p.at("rater_a").get<std::string>(), p.at("rater_b").get<std::string>(),
                        format_number(p.at("alpha"), 6), p.at("high_agreement").get<bool>() ? "true" : "false"});
      break;
    case ReportKind::distribution:
      for (const auto& [key, grouping] :
           {std::pair{"by_source", "source"}, std::pair{"by_criterion", "criterion"}, std::pair{"by_rater", "rater"}}) {
        const auto rows = histogram_rows(report.at(key), grouping, csv.empty());
        for (const auto& r : rows) csv += csv_row(r);
      }
      if (csv.empty()) csv = csv_row({"grouping", "group", "score", "label", "count", "ratio"});
      break;
    case ReportKind::behavior:
      csv = csv_row({"item", "llm", "hitl", "humans", "majority", "disparity", "category"});
      for (const auto& r : report.at("records")) {
        std::string humans;
        for (const auto& h : r.at("humans")) humans += (humans.empty() ? "" : " ") + std::to_string(h.get<int>());
        csv += csv_row({r.at("item").get<std::string>(), std::to_string(r.at("llm").get<int>()),
                        std::to_string(r.at("hitl").get<int>()), humans, std::to_string(r.at("majority").get<int>()),
                        std::to_string(r.at("disparity").get<int>()), r.at("category").get<std::string>()});
      }
      break;
  }
  return {{name, csv}};
}

std::string render_consistency_table(const std::vector<DraftBatch>& batches) {
  std::vector<std::vector<std::string>> rows{{"batch", "task", "N", "CC", "ICC"}};
  std::vector<ConsistencyReport> reports;
  for (const auto& b : batches) {
    rows.push_back({b.id, b.task_id, std::to_string(b.consistency.n_samples), format_number(b.consistency.cc),
                    format_number(b.consistency.icc)});
    reports.push_back(b.consistency);
  }
  if (batches.size() > 1) {
    const auto mean = mean_consistency(reports);
    rows.push_back({"mean", "", "", format_number(mean.cc), format_number(mean.icc)});
  }
  return format_table(rows);
}

std::string render_alignment_table(const std::vector<std::pair<std::string, AlignmentRates>>& rows_in) {
  std::vector<std::vector<std::string>> rows{{"set", "approval", "need_to_improve", "deletion", "missing", "n"}};
  for (const auto& [id, r] : rows_in)
    rows.push_back({id, percent(r.approval), percent(r.need_to_improve), percent(r.deletion), percent(r.missing),
                    std::to_string(r.counts.total())});
  return format_table(rows);
}

}  // namespace coeval
