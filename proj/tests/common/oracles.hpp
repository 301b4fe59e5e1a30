#pragma once

// Slow, direct reimplementations used to cross-check the library. They share
// no code with src/ beyond the plain data types.

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <span>
#include <utility>
#include <vector>

#include "salad/core/types.hpp"

namespace salad::oracle {

inline double rel_err(double got, double want) {
  const double scale = std::max(std::fabs(want), std::fabs(got));
  return scale == 0.0 ? 0.0 : std::fabs(got - want) / scale;
}

/// Pairwise probability that a positive outranks a negative, ties counted half.
inline double auroc(std::span<const double> s, std::span<const int> y) {
  long double wins = 0.0L;
  long double pairs = 0.0L;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!y[i]) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[j]) continue;
      pairs += 1.0L;
      if (s[i] > s[j]) wins += 1.0L;
      if (s[i] == s[j]) wins += 0.5L;
    }
  }
  return static_cast<double>(wins / pairs);
}

struct OracleRegion {
  std::vector<std::size_t> pixels;  // indices into the sample's map
  double saturation = 0.0;
};

struct OracleSample {
  std::vector<float> map;
  std::vector<OracleRegion> regions;  // empty: anomaly-free
};

/// Every distinct score as a threshold (flag pixels strictly above it);
/// trapezoidal area of the upper envelope of (FPR, mean sPRO) up to `limit`,
/// held flat past the last point, divided by `limit`.
inline double auspro(const std::vector<OracleSample>& samples, double limit) {
  std::vector<float> values;
  for (const auto& s : samples) values.insert(values.end(), s.map.begin(), s.map.end());
  std::sort(values.begin(), values.end(), std::greater<>());
  values.erase(std::unique(values.begin(), values.end()), values.end());
  std::vector<double> thresholds(values.begin(), values.end());

  std::map<double, double> best;  // fpr -> max mean sPRO
  best[0.0] = 0.0;
  for (double t : thresholds) {
    long double fp = 0, negatives = 0, spro = 0;
    std::size_t nregions = 0;
    for (const auto& s : samples) {
      if (s.regions.empty()) {
        for (float v : s.map) {
          negatives += 1;
          if (v > t) fp += 1;
        }
        continue;
      }
      for (const auto& r : s.regions) {
        if (r.pixels.empty()) continue;
        long double hit = 0;
        for (auto p : r.pixels) {
          if (s.map[p] > t) hit += 1;
        }
        spro += std::min<long double>(1.0L, hit / r.saturation);
        ++nregions;
      }
    }
    const double fpr = static_cast<double>(fp / negatives);
    const double y = static_cast<double>(spro / nregions);
    auto it = best.find(fpr);
    if (it == best.end()) {
      best[fpr] = y;
    } else {
      it->second = std::max(it->second, y);
    }
  }
  long double area = 0;
  auto prev = best.begin();
  for (auto it = std::next(best.begin()); it != best.end(); ++it, ++prev) {
    const long double x0 = prev->first, y0 = prev->second;
    long double x1 = it->first, y1 = it->second;
    if (x0 >= limit) break;
    if (x1 > limit) {
      y1 = y0 + (y1 - y0) * (limit - x0) / (x1 - x0);
      x1 = limit;
    }
    area += (x1 - x0) * (y0 + y1) / 2;
  }
  const auto last = std::prev(best.end());
  if (last->first < limit) area += (limit - last->first) * last->second;
  return static_cast<double>(area / limit);
}

using Matrix = std::vector<std::vector<long double>>;

/// Gauss-Jordan elimination with partial pivoting.
inline Matrix invert(Matrix a) {
  const std::size_t n = a.size();
  Matrix inv(n, std::vector<long double>(n, 0.0L));
  for (std::size_t i = 0; i < n; ++i) inv[i][i] = 1.0L;
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < n; ++r) {
      if (std::fabs(a[r][col]) > std::fabs(a[piv][col])) piv = r;
    }
    std::swap(a[col], a[piv]);
    std::swap(inv[col], inv[piv]);
    const long double d = a[col][col];
    for (std::size_t j = 0; j < n; ++j) {
      a[col][j] /= d;
      inv[col][j] /= d;
    }
    for (std::size_t r = 0; r < n; ++r) {
      if (r == col) continue;
      const long double f = a[r][col];
      if (f == 0.0L) continue;
      for (std::size_t j = 0; j < n; ++j) {
        a[r][j] -= f * a[col][j];
        inv[r][j] -= f * inv[col][j];
      }
    }
  }
  return inv;
}

struct OracleGaussian {
  std::vector<long double> mu;
  Matrix sigma;      // unbiased
  Matrix sigma_inv;  // of sigma + eps I
  long double eps = 0;
};

/// Fit from the sample rows, regularised with eps = max(1e-8, 1e-3 * mean diag).
inline OracleGaussian fit(const std::vector<std::vector<double>>& rows) {
  const std::size_t n = rows.size();
  const std::size_t d = rows[0].size();
  OracleGaussian g;
  g.mu.assign(d, 0.0L);
  for (const auto& r : rows) {
    for (std::size_t j = 0; j < d; ++j) g.mu[j] += r[j];
  }
  for (auto& m : g.mu) m /= n;
  g.sigma.assign(d, std::vector<long double>(d, 0.0L));
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < d; ++i) {
      for (std::size_t j = 0; j < d; ++j) g.sigma[i][j] += (r[i] - g.mu[i]) * (r[j] - g.mu[j]);
    }
  }
  long double diag = 0;
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < d; ++j) g.sigma[i][j] /= (n - 1);
    diag += g.sigma[i][i];
  }
  g.eps = std::max<long double>(1e-8L, 1e-3L * diag / d);
  Matrix reg = g.sigma;
  for (std::size_t i = 0; i < d; ++i) reg[i][i] += g.eps;
  g.sigma_inv = invert(reg);
  return g;
}

inline double mahalanobis(const OracleGaussian& g, const std::vector<double>& x) {
  const std::size_t d = x.size();
  long double q = 0;
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < d; ++j) q += (x[i] - g.mu[i]) * g.sigma_inv[i][j] * (x[j] - g.mu[j]);
  }
  return static_cast<double>(std::sqrt(std::max<long double>(0, q)));
}

/// Per-class mean of the feature vectors (HWC layout, fw x fh x dim) over the
/// pixels whose nearest-sampled class equals c; empty when absent.
inline std::vector<std::vector<double>> class_means(const std::vector<float>& feats, int fw, int fh, int dim,
                                                    const CompositionMap& map) {
  const int k = map.parts();
  std::vector<std::vector<std::vector<double>>> members(static_cast<std::size_t>(k));
  for (int y = 0; y < fh; ++y) {
    for (int x = 0; x < fw; ++x) {
      const int sx = x * map.width() / fw;
      const int sy = y * map.height() / fh;
      const int c = map(sx, sy);
      if (c == 0) continue;
      const float* v = feats.data() + (static_cast<std::size_t>(y) * fw + x) * dim;
      members[c - 1].emplace_back(v, v + dim);
    }
  }
  std::vector<std::vector<double>> out(static_cast<std::size_t>(k));
  for (int c = 0; c < k; ++c) {
    if (members[c].empty()) continue;
    out[c].assign(dim, 0.0);
    for (int j = 0; j < dim; ++j) {
      long double s = 0;
      for (const auto& v : members[c]) s += v[j];
      out[c][j] = static_cast<double>(s / members[c].size());
    }
  }
  return out;
}

// Losses. probs[p][c] layout, one row per pixel.

inline double clamp_p(double p) { return std::min(1.0, std::max(1e-7, p)); }

inline double focal_multiclass(const std::vector<std::vector<double>>& probs, const std::vector<int>& t, double gamma) {
  long double s = 0;
  for (std::size_t p = 0; p < probs.size(); ++p) {
    const double pt = clamp_p(probs[p][t[p]]);
    s += -std::pow(1.0L - pt, gamma) * std::log(static_cast<long double>(pt));
  }
  return static_cast<double>(s / probs.size());
}

inline double focal_binary(const std::vector<double>& prob, const std::vector<int>& t, double gamma) {
  long double s = 0;
  for (std::size_t p = 0; p < prob.size(); ++p) {
    const double pt = clamp_p(t[p] ? prob[p] : 1.0 - prob[p]);
    s += -std::pow(1.0L - pt, gamma) * std::log(static_cast<long double>(pt));
  }
  return static_cast<double>(s / prob.size());
}

inline double cross_entropy(const std::vector<std::vector<double>>& probs, const std::vector<int>& t) {
  long double s = 0;
  for (std::size_t p = 0; p < probs.size(); ++p) s -= std::log(static_cast<long double>(clamp_p(probs[p][t[p]])));
  return static_cast<double>(s / probs.size());
}

inline double dice(const std::vector<std::vector<double>>& probs, const std::vector<int>& t, int classes) {
  long double total = 0;
  for (int c = 0; c < classes; ++c) {
    long double inter = 0, sp = 0, st = 0;
    for (std::size_t p = 0; p < probs.size(); ++p) {
      const double tc = t[p] == c ? 1.0 : 0.0;
      inter += probs[p][c] * tc;
      sp += probs[p][c];
      st += tc;
    }
    total += (2 * inter + 1) / (sp + st + 1);
  }
  return static_cast<double>(1 - total / classes);
}

inline double l1(const std::vector<double>& a, const std::vector<double>& b) {
  long double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::fabs(static_cast<long double>(a[i]) - b[i]);
  return static_cast<double>(s / a.size());
}

inline std::vector<std::vector<double>> softmax_rows(const std::vector<std::vector<double>>& logits) {
  std::vector<std::vector<double>> out;
  for (const auto& row : logits) {
    const double mx = *std::max_element(row.begin(), row.end());
    long double z = 0;
    for (double v : row) z += std::exp(static_cast<long double>(v - mx));
    std::vector<double> p;
    for (double v : row) p.push_back(static_cast<double>(std::exp(static_cast<long double>(v - mx)) / z));
    out.push_back(std::move(p));
  }
  return out;
}

/// Central differences of f at x, one coordinate at a time.
inline std::vector<double> numeric_gradient(const std::function<double(const std::vector<double>&)>& f,
                                            std::vector<double> x, double h = 1e-6) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = x[i];
    x[i] = orig + h;
    const double up = f(x);
    x[i] = orig - h;
    const double down = f(x);
    x[i] = orig;
    g[i] = (up - down) / (2 * h);
  }
  return g;
}

/// ||a - b|| / max(||a||, ||b||).
inline double relative_l2(const std::vector<double>& a, const std::vector<double>& b) {
  long double diff = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (static_cast<long double>(a[i]) - b[i]) * (static_cast<long double>(a[i]) - b[i]);
    na += static_cast<long double>(a[i]) * a[i];
    nb += static_cast<long double>(b[i]) * b[i];
  }
  const long double scale = std::max(na, nb);
  return scale == 0 ? 0.0 : static_cast<double>(std::sqrt(diff / scale));
}

}  // namespace salad::oracle
