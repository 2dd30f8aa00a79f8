#include "coeval/stats.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include <spdlog/spdlog.h>

#include "coeval/error.hpp"

namespace coeval {

namespace {

void check_pair(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size())
    throw Error(Errc::length_mismatch, "inputs have different lengths", {{"x", x.size()}, {"y", y.size()}});
  if (x.size() < 2) throw Error(Errc::too_few_points, "correlation needs at least two points");
}

}  // namespace

std::optional<double> pearson(std::span<const double> x, std::span<const double> y) {
  check_pair(x, y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) return std::nullopt;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

std::vector<double> fractional_ranks(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
    const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

std::optional<double> spearman(std::span<const double> x, std::span<const double> y) {
  check_pair(x, y);
  const auto rx = fractional_ranks(x);
  const auto ry = fractional_ranks(y);
  return pearson(rx, ry);
}

// ---- ScoreMatrix -----------------------------------------------------------

std::size_t ScoreMatrix::add_rater(const Rater& rater) {
  if (auto i = rater_index(rater.id)) return *i;
  raters.push_back(rater);
  cells.emplace_back(items.size());
  return raters.size() - 1;
}

std::size_t ScoreMatrix::add_item(const std::string& item) {
  if (auto i = item_index(item)) return *i;
  items.push_back(item);
  for (auto& row : cells) row.emplace_back();
  return items.size() - 1;
}

std::optional<std::size_t> ScoreMatrix::rater_index(const std::string& id) const {
  for (std::size_t i = 0; i < raters.size(); ++i)
    if (raters[i].id == id) return i;
  return std::nullopt;
}

std::optional<std::size_t> ScoreMatrix::item_index(const std::string& item) const {
  for (std::size_t i = 0; i < items.size(); ++i)
    if (items[i] == item) return i;
  return std::nullopt;
}

void ScoreMatrix::set(const Rater& rater, const std::string& item, int score) {
  const auto r = add_rater(rater);
  const auto i = add_item(item);
  cells[r][i] = score;
}

ScoreMatrix ScoreMatrix::pair(std::size_t a, std::size_t b) const {
  const std::size_t idx[] = {a, b};
  return select(idx);
}

ScoreMatrix ScoreMatrix::select(std::span<const std::size_t> rater_indices) const {
  ScoreMatrix out;
  out.items = items;
  for (auto r : rater_indices) {
    out.raters.push_back(raters.at(r));
    out.cells.push_back(cells.at(r));
  }
  return out;
}

std::string_view to_string(RaterKind kind) {
  switch (kind) {
    case RaterKind::llm: return "llm";
    case RaterKind::hitl: return "hitl";
    case RaterKind::human: return "human";
  }
  return "?";
}

RaterKind parse_rater_kind(std::string_view s) {
  if (s == "llm") return RaterKind::llm;
  if (s == "hitl") return RaterKind::hitl;
  if (s == "human") return RaterKind::human;
  throw Error(Errc::invalid_argument, "unknown rater kind: " + std::string(s));
}

// ---- alpha -----------------------------------------------------------------

std::string_view to_string(AlphaMetric metric) {
  switch (metric) {
    case AlphaMetric::interval: return "interval";
    case AlphaMetric::ordinal: return "ordinal";
    case AlphaMetric::nominal: return "nominal";
  }
  return "?";
}

AlphaMetric parse_alpha_metric(std::string_view s) {
  if (s == "interval") return AlphaMetric::interval;
  if (s == "ordinal") return AlphaMetric::ordinal;
  if (s == "nominal") return AlphaMetric::nominal;
  throw Error(Errc::invalid_argument, "unknown alpha metric: " + std::string(s));
}

AlphaResult krippendorff_alpha(const ScoreMatrix& m, AlphaMetric metric) {
  if (m.raters.size() < 2) throw Error(Errc::invalid_argument, "agreement needs at least two raters");

  // Distinct values in ascending order; coincidences indexed by value rank.
  std::vector<int> values;
  for (const auto& row : m.cells)
    for (const auto& c : row)
      if (c) values.push_back(*c);
  std::sort(values.begin(), values.end());
  values.erase(std::unique(values.begin(), values.end()), values.end());
  const auto v = values.size();
  auto rank_of = [&](int x) {
    return static_cast<std::size_t>(std::lower_bound(values.begin(), values.end(), x) - values.begin());
  };

  std::vector<std::vector<double>> coincidence(v, std::vector<double>(v, 0.0));
  for (std::size_t item = 0; item < m.items.size(); ++item) {
    std::vector<std::size_t> present;
    for (const auto& row : m.cells)
      if (row[item]) present.push_back(rank_of(*row[item]));
    const auto mu = present.size();
    if (mu < 2) continue;
    const double w = 1.0 / static_cast<double>(mu - 1);
    for (std::size_t a = 0; a < mu; ++a)
      for (std::size_t b = 0; b < mu; ++b)
        if (a != b) coincidence[present[a]][present[b]] += w;
  }

  std::vector<double> marginal(v, 0.0);
  for (std::size_t c = 0; c < v; ++c) marginal[c] = std::accumulate(coincidence[c].begin(), coincidence[c].end(), 0.0);
  const double n = std::accumulate(marginal.begin(), marginal.end(), 0.0);
  if (n < 2.0) throw Error(Errc::no_pairable_values, "no item has ratings from two raters");

  auto delta2 = [&](std::size_t c, std::size_t k) -> double {
    if (c == k) return 0.0;
    switch (metric) {
      case AlphaMetric::nominal: return 1.0;
      case AlphaMetric::interval: {
        const double d = values[c] - values[k];
        return d * d;
      }
      case AlphaMetric::ordinal: {
        const auto lo = std::min(c, k), hi = std::max(c, k);
        double s = 0.0;
        for (auto g = lo; g <= hi; ++g) s += marginal[g];
        s -= (marginal[c] + marginal[k]) / 2.0;
        return s * s;
      }
    }
    return 0.0;
  };

  double observed = 0.0, expected = 0.0;
  for (std::size_t c = 0; c < v; ++c)
    for (std::size_t k = 0; k < v; ++k) {
      const double d = delta2(c, k);
      observed += coincidence[c][k] * d;
      expected += marginal[c] * marginal[k] * d;
    }

  AlphaResult r;
  r.pairable_values = static_cast<std::size_t>(std::llround(n));
  r.observed_disagreement = observed / n;
  r.expected_disagreement = expected / (n * (n - 1.0));
  if (r.expected_disagreement == 0.0) {
    spdlog::debug("alpha: all pairable values identical; reporting 1.0");
    r.value = 1.0;
    r.trivial = true;
  } else {
    r.value = 1.0 - r.observed_disagreement / r.expected_disagreement;
  }
  return r;
}

std::vector<PairAlpha> pairwise_alpha(const ScoreMatrix& m, AlphaMetric metric, double threshold) {
  std::vector<PairAlpha> out;
  for (std::size_t a = 0; a < m.raters.size(); ++a)
    for (std::size_t b = a + 1; b < m.raters.size(); ++b) {
      PairAlpha p{m.raters[a].id, m.raters[b].id, std::nullopt, false};
      try {
        p.alpha = krippendorff_alpha(m.pair(a, b), metric).value;
      } catch (const Error& e) {
        if (e.code() != Errc::no_pairable_values) throw;
      }
      p.high_agreement = p.alpha && *p.alpha > threshold;
      out.push_back(std::move(p));
    }
  return out;
}

// ---- distributions ---------------------------------------------------------

Histogram make_histogram(std::string group, std::span<const int> scores, const ScoreScale& scale) {
  Histogram h;
  h.group = std::move(group);
  h.min = scale.min;
  h.max = scale.max;
  h.labels = scale.labels;
  h.counts.assign(static_cast<std::size_t>(scale.max - scale.min + 1), 0);
  for (int s : scores) {
    if (!scale.contains(s))
      throw Error(Errc::out_of_range, "score " + std::to_string(s) + " outside the histogram scale", {{"value", s}});
    ++h.counts[static_cast<std::size_t>(s - scale.min)];
  }
  h.total = scores.size();
  h.ratios.assign(h.counts.size(), 0.0);
  if (h.total > 0)
    for (std::size_t i = 0; i < h.counts.size(); ++i)
      h.ratios[i] = static_cast<double>(h.counts[i]) / static_cast<double>(h.total);
  return h;
}

std::vector<Histogram> score_distribution(std::span<const SampleEvaluation> evals, GroupBy group_by, const Task& task,
                                          std::span<const Criterion> criteria, const ScoreScale& overall_scale) {
  if (evals.empty()) throw Error(Errc::invalid_argument, "score distribution needs at least one evaluation");

  std::vector<std::string> order;
  std::map<std::string, std::vector<int>> groups;
  std::map<std::string, ScoreScale> scales;
  auto add = [&](const std::string& group, int score, const ScoreScale& scale) {
    if (!groups.count(group)) {
      order.push_back(group);
      scales[group] = scale;
    }
    groups[group].push_back(score);
  };

  for (const auto& e : evals) {
    if (group_by == GroupBy::source) {
      const auto* sample = task.find_sample(e.sample_id);
      add(sample ? sample->source.label() : std::string("unknown"), e.overall_score, overall_scale);
    } else {
      for (const auto& ce : e.criterion_evals) {
        const auto it = std::find_if(criteria.begin(), criteria.end(),
                                     [&](const Criterion& c) { return c.id == ce.criterion_id; });
        if (it == criteria.end()) throw Error(Errc::unknown_target, "unknown criterion " + ce.criterion_id);
        add(it->name, ce.score, it->scale);
      }
    }
  }

  std::vector<Histogram> out;
  for (const auto& g : order) out.push_back(make_histogram(g, groups[g], scales[g]));
  return out;
}

std::vector<Histogram> distribution_by_rater(const ScoreMatrix& m, const ScoreScale& scale) {
  std::vector<Histogram> out;
  for (std::size_t r = 0; r < m.raters.size(); ++r) {
    std::vector<int> scores;
    for (const auto& c : m.cells[r])
      if (c) scores.push_back(*c);
    out.push_back(make_histogram(m.raters[r].id, scores, scale));
  }
  return out;
}

// ---- behavior --------------------------------------------------------------

std::string_view to_string(Behavior b) {
  switch (b) {
    case Behavior::correction: return "correction";
    case Behavior::scrutiny: return "scrutiny";
    case Behavior::subjectivity: return "subjectivity";
    case Behavior::outlier: return "outlier";
    case Behavior::agreement: return "agreement";
  }
  return "?";
}

int majority_vote(std::span<const int> scores) {
  if (scores.empty()) throw Error(Errc::invalid_argument, "majority vote of no scores");
  std::map<int, int> counts;
  for (int s : scores) ++counts[s];
  int best = counts.begin()->first, best_count = 0;
  for (const auto& [score, count] : counts)  // ascending: strict > keeps the lower score on ties
    if (count > best_count) best = score, best_count = count;
  return best;
}

BehaviorRecord classify_behavior(int llm, int hitl, std::span<const int> humans, BehaviorThresholds t,
                                 std::string item) {
  if (humans.empty()) throw Error(Errc::invalid_argument, "behavior classification needs human scores");
  BehaviorRecord r;
  r.item = std::move(item);
  r.llm_score = llm;
  r.hitl_final_score = hitl;
  r.human_eval_scores.assign(humans.begin(), humans.end());
  r.majority = majority_vote(humans);
  const auto [lo, hi] = std::minmax_element(humans.begin(), humans.end());
  r.disparity = *hi - *lo;

  const bool conflict = std::abs(llm - r.majority) >= t.conflict;
  if (conflict && hitl == r.majority)
    r.category = Behavior::correction;
  else if (conflict && hitl != llm)
    r.category = Behavior::scrutiny;
  else if (r.disparity >= t.disparity && hitl != r.majority)
    r.category = Behavior::subjectivity;
  else if (r.disparity >= 1 && hitl == r.majority && !conflict)
    r.category = Behavior::outlier;
  else
    r.category = Behavior::agreement;
  return r;
}

// ---- pairwise correlation --------------------------------------------------

std::string_view to_string(Pairing p) {
  switch (p) {
    case Pairing::llm_vs_humans: return "llm_vs_humans";
    case Pairing::hitl_vs_humans: return "hitl_vs_humans";
    case Pairing::humans_vs_humans: return "humans_vs_humans";
  }
  return "?";
}

CorrelationSummary pairwise_correlation_report(const ScoreMatrix& m, Pairing pairing) {
  CorrelationSummary s;
  s.pairing = pairing;

  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  const auto count = m.raters.size();
  if (pairing == Pairing::humans_vs_humans) {
    for (std::size_t a = 0; a < count; ++a)
      for (std::size_t b = a + 1; b < count; ++b)
        if (m.raters[a].kind == RaterKind::human && m.raters[b].kind == RaterKind::human) pairs.emplace_back(a, b);
  } else {
    const auto left = pairing == Pairing::llm_vs_humans ? RaterKind::llm : RaterKind::hitl;
    for (std::size_t a = 0; a < count; ++a)
      for (std::size_t b = 0; b < count; ++b)
        if (m.raters[a].kind == left && m.raters[b].kind == RaterKind::human) pairs.emplace_back(a, b);
  }
  if (pairs.empty())
    throw Error(Errc::no_pairs, std::string("no rater pairs for ") + std::string(to_string(pairing)));

  double sum = 0.0;
  std::size_t defined = 0;
  for (const auto& [a, b] : pairs) {
    std::vector<double> x, y;
    for (std::size_t i = 0; i < m.items.size(); ++i)
      if (m.cells[a][i] && m.cells[b][i]) {
        x.push_back(*m.cells[a][i]);
        y.push_back(*m.cells[b][i]);
      }
    PairCorrelation pc{m.raters[a].id, m.raters[b].id, x.size(), std::nullopt};
    if (x.size() >= 2) pc.pearson = pearson(x, y);
    if (pc.pearson) {
      sum += *pc.pearson;
      ++defined;
    } else {
      ++s.skipped;
    }
    s.details.push_back(std::move(pc));
  }
  s.pairs = pairs.size();
  if (defined > 0) s.mean = sum / static_cast<double>(defined);
  return s;
}

}  // namespace coeval
