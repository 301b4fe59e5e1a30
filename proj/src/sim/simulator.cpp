#include "salad/sim/simulator.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "salad/core/random.hpp"

namespace salad::sim {

std::string to_string(SyntheticKind k) {
  switch (k) {
    case SyntheticKind::none: return "none";
    case SyntheticKind::perlin_paste: return "perlin_paste";
    case SyntheticKind::component_inpaint: return "component_inpaint";
    case SyntheticKind::component_removal: return "component_removal";
  }
  return "none";
}

SyntheticKind kind_from_string(const std::string& s) {
  if (s == "none") return SyntheticKind::none;
  if (s == "perlin_paste" || s == "structural") return SyntheticKind::perlin_paste;
  if (s == "component_inpaint" || s == "inpaint") return SyntheticKind::component_inpaint;
  if (s == "component_removal" || s == "removal") return SyntheticKind::component_removal;
  throw ArgumentError("unknown synthetic anomaly kind: " + s);
}

namespace {

constexpr int kOctaves = 3;

double fade(double t) { return t * t * t * (t * (t * 6.0 - 15.0) + 10.0); }

// One octave of gradient noise with `cx` x `cy` lattice cells over the frame.
void add_gradient_noise(std::vector<double>& acc, int height, int width, int cx, int cy,
                        double amplitude, Rng& rng) {
  std::vector<std::array<double, 2>> grad(static_cast<std::size_t>(cx + 1) * (cy + 1));
  for (auto& g : grad) {
    const double a = 2.0 * std::numbers::pi * rng.uniform();
    g = {std::cos(a), std::sin(a)};
  }
  auto corner = [&](int gx, int gy, double dx, double dy) {
    const auto& g = grad[static_cast<std::size_t>(gy) * (cx + 1) + gx];
    return g[0] * dx + g[1] * dy;
  };
  for (int y = 0; y < height; ++y) {
    const double fy = (y + 0.5) * cy / height;
    const int iy = std::min(cy - 1, static_cast<int>(fy));
    const double ty = fy - iy;
    const double wy = fade(ty);
    for (int x = 0; x < width; ++x) {
      const double fx = (x + 0.5) * cx / width;
      const int ix = std::min(cx - 1, static_cast<int>(fx));
      const double tx = fx - ix;
      const double wx = fade(tx);
      const double n00 = corner(ix, iy, tx, ty);
      const double n10 = corner(ix + 1, iy, tx - 1.0, ty);
      const double n01 = corner(ix, iy + 1, tx, ty - 1.0);
      const double n11 = corner(ix + 1, iy + 1, tx - 1.0, ty - 1.0);
      const double top = n00 + wx * (n10 - n00);
      const double bottom = n01 + wx * (n11 - n01);
      acc[static_cast<std::size_t>(y) * width + x] += amplitude * (top + wy * (bottom - top));
    }
  }
}

Mask changed_pixels(const CompositionMap& a, const CompositionMap& b) {
  Mask m(a.width(), a.height());
  for (std::size_t p = 0; p < m.size(); ++p) m[p] = a.classes[p] != b.classes[p];
  return m;
}

// Flood fill over 8-neighbours, restricted to pixels where `allowed` is set.
template <class Allowed>
void flood8(Mask& visited, int w, int h, std::vector<int>& stack, Allowed allowed) {
  while (!stack.empty()) {
    const int p = stack.back();
    stack.pop_back();
    const int x = p % w;
    const int y = p / w;
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        const int nx = x + dx;
        const int ny = y + dy;
        if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
        const int q = ny * w + nx;
        if (visited[q] || !allowed(q)) continue;
        visited[q] = 1;
        stack.push_back(q);
      }
    }
  }
}

SyntheticSample clean(const CompositionMap& c) {
  SyntheticSample s;
  s.augmented = c;
  s.gt_mask = Mask(c.width(), c.height());
  s.kind = SyntheticKind::none;
  return s;
}

}  // namespace

Mask perlin_mask(int height, int width, std::uint64_t seed) {
  if (height < 1 || width < 1) throw ArgumentError("perlin_mask needs positive dimensions");
  Rng rng(seed);
  const int px = rng.range(1, 5);
  const int py = rng.range(1, 5);
  std::vector<double> acc(static_cast<std::size_t>(width) * height, 0.0);
  double amplitude = 1.0;
  for (int o = 0; o < kOctaves; ++o) {
    add_gradient_noise(acc, height, width, 1 << (px + o), 1 << (py + o), amplitude, rng);
    amplitude *= 0.5;
  }
  const auto [lo, hi] = std::minmax_element(acc.begin(), acc.end());
  const double range = *hi - *lo;
  Mask m(width, height);
  if (range <= 0.0) return m;
  for (std::size_t i = 0; i < acc.size(); ++i) m[i] = (acc[i] - *lo) / range > 0.5;
  return m;
}

std::vector<Component> connected_components(const CompositionMap& c, std::size_t min_area) {
  const int w = c.width();
  const int h = c.height();
  Mask visited(w, h);
  std::vector<Component> out;
  std::vector<int> stack;
  std::vector<int> members;
  for (int p = 0; p < w * h; ++p) {
    if (visited[p] || c.classes[p] == 0) continue;
    const std::uint16_t cls = c.classes[p];
    visited[p] = 1;
    members.clear();
    stack.assign(1, p);
    // Collect members while flooding.
    while (!stack.empty()) {
      const int q = stack.back();
      stack.pop_back();
      members.push_back(q);
      const int x = q % w;
      const int y = q / w;
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          const int nx = x + dx;
          const int ny = y + dy;
          if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
          const int r = ny * w + nx;
          if (visited[r] || c.classes[r] != cls) continue;
          visited[r] = 1;
          stack.push_back(r);
        }
      }
    }
    if (members.size() < min_area) continue;
    Component comp;
    comp.mask = Mask(w, h);
    for (int q : members) comp.mask[q] = 1;
    comp.class_id = cls;
    comp.area = members.size();
    out.push_back(std::move(comp));
  }
  return out;
}

SyntheticSample simulate_structural(const CompositionMap& c, std::uint64_t seed) {
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    Rng rng(mix_seed(seed, static_cast<std::uint64_t>(attempt)));
    const auto cls = static_cast<std::uint16_t>(rng.below(static_cast<std::uint64_t>(c.num_classes)));
    const Mask noise = perlin_mask(c.height(), c.width(), rng.next());
    SyntheticSample s;
    s.augmented = c;
    for (std::size_t p = 0; p < noise.size(); ++p) {
      if (noise[p]) s.augmented.classes[p] = cls;
    }
    s.gt_mask = changed_pixels(c, s.augmented);
    if (count(s.gt_mask) == 0) continue;
    s.kind = SyntheticKind::perlin_paste;
    return s;
  }
  return clean(c);
}

SyntheticSample simulate_removal(const CompositionMap& c, std::uint64_t seed, std::size_t min_area) {
  const auto comps = connected_components(c, min_area);
  if (comps.empty()) return clean(c);
  Rng rng(seed);
  const Component& comp = comps[rng.below(comps.size())];
  const int w = c.width();
  const int h = c.height();

  // Ring: pixels within Chebyshev distance 5 of the component, outside it.
  constexpr int kRing = 5;
  std::vector<std::size_t> freq(static_cast<std::size_t>(c.num_classes), 0);
  Mask ring(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!comp.mask(x, y)) continue;
      for (int dy = -kRing; dy <= kRing; ++dy) {
        for (int dx = -kRing; dx <= kRing; ++dx) {
          const int nx = x + dx;
          const int ny = y + dy;
          if (nx < 0 || ny < 0 || nx >= w || ny >= h || comp.mask(nx, ny) || ring(nx, ny)) continue;
          ring(nx, ny) = 1;
          const int cls = c(nx, ny);
          if (cls != comp.class_id) ++freq[cls];
        }
      }
    }
  }
  std::size_t total = 0;
  for (auto f : freq) total += f;
  if (total == 0) return clean(c);
  std::uint64_t draw = rng.below(total);
  std::uint16_t fill = 0;
  for (std::size_t cls = 0; cls < freq.size(); ++cls) {
    if (draw < freq[cls]) {
      fill = static_cast<std::uint16_t>(cls);
      break;
    }
    draw -= freq[cls];
  }

  SyntheticSample s;
  s.kind = SyntheticKind::component_removal;
  s.augmented = c;
  s.gt_mask = Mask(w, h);
  std::vector<int> stack;
  for (int p = 0; p < w * h; ++p) {
    if (!comp.mask[p]) continue;
    s.augmented.classes[p] = fill;
    s.gt_mask[p] = 1;
    stack.push_back(p);
  }
  flood8(s.gt_mask, w, h, stack, [&](int q) { return s.augmented.classes[q] == fill; });
  return s;
}

SyntheticSample simulate_inpaint(const CompositionMap& c, const CompositionMap& source,
                                 std::uint64_t seed, std::size_t min_area) {
  if (!c.classes.same_shape(source.classes)) throw ShapeError("inpaint source shape differs");
  const auto comps = connected_components(source, min_area);
  if (comps.empty()) return clean(c);
  Rng rng(seed);
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    const Component& comp = comps[rng.below(comps.size())];
    SyntheticSample s;
    s.augmented = c;
    bool changed = false;
    for (std::size_t p = 0; p < comp.mask.size(); ++p) {
      if (!comp.mask[p]) continue;
      changed |= s.augmented.classes[p] != comp.class_id;
      s.augmented.classes[p] = static_cast<std::uint16_t>(comp.class_id);
    }
    if (!changed) continue;
    s.kind = SyntheticKind::component_inpaint;
    s.gt_mask = Mask(c.width(), c.height());
    for (std::size_t p = 0; p < s.gt_mask.size(); ++p) {
      s.gt_mask[p] = s.augmented.classes[p] == comp.class_id;
    }
    return s;
  }
  return clean(c);
}

SyntheticSample sample_training_example(const CompositionMap& c, std::span<const CompositionMap> corpus,
                                        std::uint64_t seed) {
  if (corpus.empty()) throw ArgumentError("simulation corpus is empty");
  Rng rng(seed);
  if (rng.bernoulli(0.5)) return clean(c);
  const auto strategy = rng.below(3);
  const std::uint64_t sub = rng.next();
  switch (strategy) {
    case 0: return simulate_structural(c, sub);
    case 1: return simulate_removal(c, sub);
    default: {
      std::vector<std::size_t> others;
      for (std::size_t i = 0; i < corpus.size(); ++i) {
        if (&corpus[i] != &c) others.push_back(i);
      }
      const CompositionMap& source =
          others.empty() ? corpus[rng.below(corpus.size())] : corpus[others[rng.below(others.size())]];
      return simulate_inpaint(c, source, sub);
    }
  }
}

std::string check_invariants(const CompositionMap& source, const SyntheticSample& s) {
  if (!s.augmented.classes.same_shape(source.classes) || !s.gt_mask.same_shape(source.classes)) {
    return "shape mismatch";
  }
  for (std::size_t p = 0; p < s.augmented.classes.size(); ++p) {
    if (s.augmented.classes[p] >= source.num_classes) return "class value outside {0..K}";
  }
  const Mask diff = changed_pixels(source, s.augmented);
  if (s.kind == SyntheticKind::none) {
    if (count(s.gt_mask) != 0) return "clean sample with non-empty gt_mask";
    if (count(diff) != 0) return "clean sample differs from source";
    return {};
  }
  if (count(s.gt_mask) == 0) return "anomalous sample with empty gt_mask";
  if (count(diff) == 0) return "anomalous sample equals source";
  switch (s.kind) {
    case SyntheticKind::perlin_paste:
      if (!(s.gt_mask == diff)) return "perlin gt_mask differs from changed pixels";
      break;
    case SyntheticKind::component_removal:
      for (std::size_t p = 0; p < diff.size(); ++p) {
        if (diff[p] && !s.gt_mask[p]) return "removal gt_mask misses an erased pixel";
      }
      break;
    case SyntheticKind::component_inpaint: {
      // The pasted class is the one all changed pixels now carry.
      int cls = -1;
      for (std::size_t p = 0; p < diff.size(); ++p) {
        if (!diff[p]) continue;
        if (cls >= 0 && s.augmented.classes[p] != cls) return "inpaint changed pixels to several classes";
        cls = s.augmented.classes[p];
      }
      for (std::size_t p = 0; p < diff.size(); ++p) {
        if ((s.augmented.classes[p] == cls) != (s.gt_mask[p] != 0)) {
          return "inpaint gt_mask differs from pasted-class pixels";
        }
      }
      break;
    }
    case SyntheticKind::none: break;
  }
  return {};
}

}  // namespace salad::sim
