#include "salad/metrics/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <spdlog/spdlog.h>

namespace salad::metrics {

BranchScores branch_scores(const AnomalyMap& a_a, const AnomalyMap& a_c, double s_g) {
  if (a_a.scores.empty() || a_c.scores.empty()) throw ArgumentError("branch_scores: empty anomaly map");
  a_a.validate();
  a_c.validate();
  if (!std::isfinite(s_g)) throw ArgumentError("branch_scores: non-finite global score");
  return {a_a.max(), a_c.max(), s_g};
}

namespace {

MeanStd moments(std::span<const BranchScores> v, double BranchScores::*field, const char* name) {
  double sum = 0.0;
  for (const auto& s : v) sum += s.*field;
  MeanStd m;
  m.mu = sum / static_cast<double>(v.size());
  double sq = 0.0;
  for (const auto& s : v) sq += (s.*field - m.mu) * (s.*field - m.mu);
  m.sigma = std::sqrt(sq / static_cast<double>(v.size()));
  if (m.sigma < kSigmaFloor) {
    spdlog::warn("branch {}: validation scores have (near) zero spread, sigma floored to {}", name, kSigmaFloor);
    m.sigma = kSigmaFloor;
    m.floored = true;
  }
  return m;
}

nlohmann::json ms_json(const MeanStd& m) { return {{"mu", m.mu}, {"sigma", m.sigma}, {"floored", m.floored}}; }

MeanStd ms_from(const nlohmann::json& j) {
  return {j.at("mu").get<double>(), j.at("sigma").get<double>(), j.value("floored", false)};
}

}  // namespace

ScoreStats calibrate(std::span<const BranchScores> validation) {
  if (validation.size() < 2) throw ArgumentError("calibration needs at least 2 validation samples");
  for (const auto& s : validation) {
    if (!std::isfinite(s.a) || !std::isfinite(s.c) || !std::isfinite(s.g)) {
      throw ArgumentError("calibration: non-finite validation score");
    }
  }
  ScoreStats st;
  st.a = moments(validation, &BranchScores::a, "a");
  st.c = moments(validation, &BranchScores::c, "c");
  st.g = moments(validation, &BranchScores::g, "g");
  st.samples = validation.size();
  return st;
}

nlohmann::json ScoreStats::to_json() const {
  return {{"a", ms_json(a)},
          {"c", ms_json(c)},
          {"g", ms_json(g)},
          {"samples", samples},
          {"std_convention", "population"},
          {"source", source}};
}

ScoreStats ScoreStats::from_json(const nlohmann::json& j) {
  ScoreStats s;
  s.a = ms_from(j.at("a"));
  s.c = ms_from(j.at("c"));
  s.g = ms_from(j.at("g"));
  s.samples = j.value("samples", std::size_t{0});
  s.source = j.value("source", "");
  return s;
}

FusionResult fuse(const BranchScores& s, const ScoreStats& stats, const FusionOptions& options) {
  if (!std::isfinite(s.a) || !std::isfinite(s.c) || !std::isfinite(s.g)) {
    throw ArgumentError("fuse: non-finite branch score");
  }
  FusionResult r;
  r.as_a = s.a;
  r.as_c = s.c;
  r.as_g = s.g;
  r.z_a = options.use_a ? (s.a - stats.a.mu) / stats.a.sigma : 0.0;
  r.z_c = options.use_c ? (s.c - stats.c.mu) / stats.c.sigma : 0.0;
  r.z_g = options.use_g ? (s.g - stats.g.mu) / stats.g.sigma : 0.0;
  r.total = r.z_a + r.z_c + r.z_g;
  return r;
}

void MapExtrema::include(const AnomalyMap& a_a, const AnomalyMap& a_c, bool first) {
  const auto [amin, amax] = std::minmax_element(a_a.scores.values().begin(), a_a.scores.values().end());
  const auto [cmin, cmax] = std::minmax_element(a_c.scores.values().begin(), a_c.scores.values().end());
  if (first) {
    a_min = *amin;
    a_max = *amax;
    c_min = *cmin;
    c_max = *cmax;
    return;
  }
  a_min = std::min<double>(a_min, *amin);
  a_max = std::max<double>(a_max, *amax);
  c_min = std::min<double>(c_min, *cmin);
  c_max = std::max<double>(c_max, *cmax);
}

nlohmann::json MapExtrema::to_json() const {
  return {{"a_min", a_min}, {"a_max", a_max}, {"c_min", c_min}, {"c_max", c_max}};
}

MapExtrema MapExtrema::from_json(const nlohmann::json& j) {
  return {j.at("a_min").get<double>(), j.at("a_max").get<double>(), j.at("c_min").get<double>(),
          j.at("c_max").get<double>()};
}

AnomalyMap combined_localization_map(const AnomalyMap& a_a, const AnomalyMap& a_c, const MapExtrema& e) {
  if (!a_a.scores.same_shape(a_c.scores)) throw ShapeError("combined_localization_map: shape mismatch");
  auto norm = [](double v, double lo, double hi) {
    const double span = hi - lo;
    return span > 0.0 ? std::max(0.0, (v - lo) / span) : 0.0;
  };
  AnomalyMap out;
  out.range = MapRange::nonnegative;
  out.scores = Plane<float>(a_a.scores.width(), a_a.scores.height());
  for (std::size_t p = 0; p < out.scores.size(); ++p) {
    out.scores[p] = static_cast<float>(norm(a_a.scores[p], e.a_min, e.a_max) + norm(a_c.scores[p], e.c_min, e.c_max));
  }
  return out;
}

double auroc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw ArgumentError("auroc: scores and labels differ in length");
  std::size_t pos = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0 && labels[i] != 1) throw ArgumentError("auroc: labels must be 0 or 1");
    if (!std::isfinite(scores[i])) throw ArgumentError("auroc: non-finite score");
    pos += static_cast<std::size_t>(labels[i]);
  }
  const std::size_t neg = labels.size() - pos;
  if (pos == 0 || neg == 0) throw ArgumentError("auroc needs both positive and negative samples");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);  // mean of ranks i+1 .. j
    for (std::size_t q = i; q < j; ++q) {
      if (labels[order[q]]) rank_sum += midrank;
    }
    i = j;
  }
  const double u = rank_sum - static_cast<double>(pos) * static_cast<double>(pos + 1) / 2.0;
  return u / (static_cast<double>(pos) * static_cast<double>(neg));
}

double auspro(std::span<const LocalizationSample> samples, const AusproOptions& options) {
  if (!(options.fpr_limit > 0.0 && options.fpr_limit <= 1.0)) throw ArgumentError("fpr_limit must be in (0, 1]");
  std::vector<float> good;
  std::vector<std::vector<float>> regions;
  std::vector<double> saturation;
  std::vector<float> all;
  for (const auto& s : samples) {
    if (!s.map) throw ArgumentError("auspro: missing anomaly map");
    const auto& m = *s.map;
    all.insert(all.end(), m.values().begin(), m.values().end());
    if (s.regions.empty()) {
      good.insert(good.end(), m.values().begin(), m.values().end());
      continue;
    }
    for (const auto& r : s.regions) {
      if (!r.mask.same_shape(m)) throw ShapeError("auspro: region mask shape differs from its map");
      if (!(r.saturation_area > 0.0)) throw ArgumentError("auspro: region without a saturation area");
      std::vector<float> v;
      for (std::size_t p = 0; p < r.mask.size(); ++p) {
        if (r.mask[p]) v.push_back(m[p]);
      }
      if (v.empty()) continue;
      std::sort(v.begin(), v.end());
      regions.push_back(std::move(v));
      saturation.push_back(r.saturation_area);
    }
  }
  if (regions.empty()) throw ArgumentError("auspro: no anomalous regions");
  if (good.empty()) throw ArgumentError("auspro: no anomaly-free samples to measure false positives on");
  std::sort(good.begin(), good.end());
  std::sort(all.begin(), all.end());
  all.erase(std::unique(all.begin(), all.end()), all.end());

  std::vector<float> thresholds;
  if (options.max_thresholds == 0 || all.size() <= options.max_thresholds) {
    thresholds = all;
  } else {
    const std::size_t n = options.max_thresholds;
    for (std::size_t i = 0; i < n; ++i) thresholds.push_back(all[i * (all.size() - 1) / (n - 1)]);
  }

  auto above = [](const std::vector<float>& sorted, float t) {
    return static_cast<double>(sorted.end() - std::upper_bound(sorted.begin(), sorted.end(), t));
  };
  // (fpr, mean sPRO) per threshold; for each FPR level keep the best sPRO.
  std::vector<std::pair<double, double>> curve;
  for (float t : thresholds) {
    const double fpr = above(good, t) / static_cast<double>(good.size());
    double spro = 0.0;
    for (std::size_t r = 0; r < regions.size(); ++r) spro += std::min(1.0, above(regions[r], t) / saturation[r]);
    curve.emplace_back(fpr, spro / static_cast<double>(regions.size()));
  }
  std::sort(curve.begin(), curve.end());
  std::vector<std::pair<double, double>> pts{{0.0, 0.0}};
  for (const auto& p : curve) {
    if (p.first == pts.back().first) {
      pts.back().second = std::max(pts.back().second, p.second);
    } else {
      pts.push_back(p);
    }
  }
  // Pixels at the lowest score are never flagged, so the curve can stop short of
  // the limit; it is held at its last value rather than extrapolated, which keeps
  // a constant map at zero.
  if (pts.back().first < options.fpr_limit) pts.emplace_back(options.fpr_limit, pts.back().second);

  const double limit = options.fpr_limit;
  double area = 0.0;
  for (std::size_t i = 1; i < pts.size(); ++i) {
    const auto [x0, y0] = pts[i - 1];
    auto [x1, y1] = pts[i];
    if (x0 >= limit) break;
    if (x1 > limit) {
      y1 = y0 + (y1 - y0) * (limit - x0) / (x1 - x0);
      x1 = limit;
    }
    area += 0.5 * (x1 - x0) * (y0 + y1);
  }
  return area / limit;
}

}  // namespace salad::metrics
