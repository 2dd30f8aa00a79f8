#pragma once

// Brute-force reference implementations. They follow the textbook formulas
// directly and share no code with the library.

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <vector>

namespace oracle {

using Vec = std::vector<double>;

inline double cosine(const Vec& a, const Vec& b) {
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

inline double best_match(const Vec& c, const std::vector<Vec>& set) {
  double best = -2.0;
  for (const auto& d : set) best = std::max(best, cosine(c, d));
  return best;
}

/// sum_n sum_i max_j sim(det_i, S_n[j]) / (|det| * N)
inline double cc(const std::vector<Vec>& det, const std::vector<std::vector<Vec>>& sampled) {
  double total = 0;
  for (const auto& s : sampled)
    for (const auto& c : det) total += best_match(c, s);
  return total / (static_cast<double>(det.size()) * static_cast<double>(sampled.size()));
}

/// sum_m sum_{n != m} sum_i max_j sim(S_m[i], S_n[j]) / (sum_m |S_m| * (N - 1))
inline double icc(const std::vector<std::vector<Vec>>& sampled) {
  double total = 0, sizes = 0;
  const auto n = sampled.size();
  for (std::size_t m = 0; m < n; ++m) {
    sizes += static_cast<double>(sampled[m].size());
    for (std::size_t k = 0; k < n; ++k) {
      if (k == m) continue;
      for (const auto& c : sampled[m]) total += best_match(c, sampled[k]);
    }
  }
  return total / (sizes * static_cast<double>(n - 1));
}

/// Computational form: (n sum xy - sum x sum y) / sqrt((n sum x^2 - (sum x)^2)(n sum y^2 - (sum y)^2)).
inline std::optional<double> pearson(const Vec& x, const Vec& y) {
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxy += x[i] * y[i];
    sxx += x[i] * x[i];
    syy += y[i] * y[i];
  }
  const double vx = n * sxx - sx * sx;
  const double vy = n * syy - sy * sy;
  if (vx <= 1e-12 * std::max(1.0, n * sxx) || vy <= 1e-12 * std::max(1.0, n * syy)) return std::nullopt;
  return (n * sxy - sx * sy) / std::sqrt(vx * vy);
}

/// Average rank: (# smaller) + (# equal + 1) / 2.
inline Vec ranks(const Vec& v) {
  Vec r(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    double less = 0, equal = 0;
    for (double w : v) {
      if (w < v[i]) ++less;
      if (w == v[i]) ++equal;
    }
    r[i] = less + (equal + 1) / 2;
  }
  return r;
}

inline std::optional<double> spearman(const Vec& x, const Vec& y) { return pearson(ranks(x), ranks(y)); }

enum class Metric { interval, ordinal, nominal };

/// Squared distance between two values; ordinal uses the marginal counts of
/// all pairable values.
inline double delta2(int a, int b, Metric metric, const std::map<int, double>& marginals) {
  switch (metric) {
    case Metric::nominal: return a == b ? 0.0 : 1.0;
    case Metric::interval: return static_cast<double>((a - b) * (a - b));
    case Metric::ordinal: {
      if (a == b) return 0.0;
      const int lo = std::min(a, b), hi = std::max(a, b);
      double s = 0;
      for (const auto& [g, n] : marginals)
        if (g >= lo && g <= hi) s += n;
      s -= (marginals.at(lo) + marginals.at(hi)) / 2;
      return s * s;
    }
  }
  return 0;
}

/// Krippendorff's alpha by enumeration. `units[u]` holds the values present
/// for unit u. Units with fewer than two values are not pairable.
/// D_o = (1/n) sum_u 1/(m_u - 1) sum_{i != j in u} delta2
/// D_e = 1/(n (n - 1)) sum_{i != j over all pairable values} delta2
/// Returns nullopt when D_e == 0.
inline std::optional<double> alpha(const std::vector<std::vector<int>>& units, Metric metric) {
  std::vector<int> all;
  for (const auto& u : units)
    if (u.size() >= 2) all.insert(all.end(), u.begin(), u.end());
  const double n = static_cast<double>(all.size());
  std::map<int, double> marginals;
  for (int v : all) marginals[v] += 1;

  double d_o = 0;
  for (const auto& u : units) {
    if (u.size() < 2) continue;
    double s = 0;
    for (std::size_t i = 0; i < u.size(); ++i)
      for (std::size_t j = 0; j < u.size(); ++j)
        if (i != j) s += delta2(u[i], u[j], metric, marginals);
    d_o += s / static_cast<double>(u.size() - 1);
  }
  d_o /= n;

  double d_e = 0;
  for (std::size_t i = 0; i < all.size(); ++i)
    for (std::size_t j = 0; j < all.size(); ++j)
      if (i != j) d_e += delta2(all[i], all[j], metric, marginals);
  d_e /= n * (n - 1);
  if (d_e == 0) return std::nullopt;
  return 1 - d_o / d_e;
}

}  // namespace oracle
