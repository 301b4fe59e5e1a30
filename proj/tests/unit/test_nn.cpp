#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "salad/nn/convert.hpp"
#include "salad/nn/layers.hpp"
#include "salad/nn/optim.hpp"
#include "salad/nn/unet.hpp"

using namespace salad;
using namespace salad::nn;

namespace {

Tensor random_tensor(int n, int c, int h, int w, Rng& rng, double scale = 1.0) {
  Tensor t(n, c, h, w);
  for (auto& v : t.data) v = static_cast<float>(scale * rng.normal());
  return t;
}

double weighted_sum(const Tensor& t, const Tensor& r) {
  double s = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) s += static_cast<double>(t.data[i]) * r.data[i];
  return s;
}

// Direct "same" convolution in double.
Tensor naive_conv(const Tensor& x, const Param& w, const Param& b, int out, int k) {
  Tensor y(x.n, out, x.h, x.w);
  const int pad = k / 2;
  for (int n = 0; n < x.n; ++n) {
    for (int o = 0; o < out; ++o) {
      for (int yy = 0; yy < x.h; ++yy) {
        for (int xx = 0; xx < x.w; ++xx) {
          double s = b.value[o];
          for (int c = 0; c < x.c; ++c) {
            for (int ky = 0; ky < k; ++ky) {
              for (int kx = 0; kx < k; ++kx) {
                const int sy = yy + ky - pad, sx = xx + kx - pad;
                if (sy < 0 || sx < 0 || sy >= x.h || sx >= x.w) continue;
                s += static_cast<double>(w.value[((o * x.c + c) * k + ky) * k + kx]) * x.at(n, c, sy, sx);
              }
            }
          }
          y.at(n, o, yy, xx) = static_cast<float>(s);
        }
      }
    }
  }
  return y;
}

}  // namespace

TEST(Conv2d, ForwardMatchesDirectConvolution) {
  Rng rng(1);
  for (int k : {1, 3}) {
    Conv2d conv("c", 3, 5, k, rng);
    std::vector<Param*> ps;
    conv.collect(ps);
    ASSERT_EQ(ps.size(), 2u);
    for (auto& v : ps[1]->value) v = static_cast<float>(rng.normal());
    const Tensor x = random_tensor(2, 3, 7, 9, rng);
    const Tensor y = conv.forward(x);
    const Tensor want = naive_conv(x, *ps[0], *ps[1], 5, k);
    ASSERT_TRUE(y.same_shape(want));
    for (std::size_t i = 0; i < y.size(); ++i) ASSERT_NEAR(y.data[i], want.data[i], 1e-4);
  }
}

TEST(Conv2d, BackwardMatchesFiniteDifferences) {
  // The layer is linear in its input and weights, so a wide step is exact up to rounding.
  Rng rng(2);
  Conv2d conv("c", 2, 3, 3, rng);
  std::vector<Param*> ps;
  conv.collect(ps);
  Tensor x = random_tensor(1, 2, 5, 6, rng);
  const Tensor r = random_tensor(1, 3, 5, 6, rng);
  for (auto* p : ps) p->zero_grad();
  conv.forward(x);
  const Tensor gx = conv.backward(x, r);
  const double h = 0.5;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const float orig = x.data[i];
    x.data[i] = orig + static_cast<float>(h);
    const double up = weighted_sum(conv.forward(x), r);
    x.data[i] = orig - static_cast<float>(h);
    const double down = weighted_sum(conv.forward(x), r);
    x.data[i] = orig;
    ASSERT_NEAR(gx.data[i], (up - down) / (2 * h), 1e-3) << "input " << i;
  }
  for (auto* p : ps) {
    for (std::size_t i = 0; i < p->size(); ++i) {
      const float orig = p->value[i];
      p->value[i] = orig + static_cast<float>(h);
      const double up = weighted_sum(conv.forward(x), r);
      p->value[i] = orig - static_cast<float>(h);
      const double down = weighted_sum(conv.forward(x), r);
      p->value[i] = orig;
      ASSERT_NEAR(p->grad[i], (up - down) / (2 * h), 1e-3) << p->name << " " << i;
    }
  }
}

TEST(UNet, ParameterAndInputGradientsMatchFiniteDifferences) {
  Rng rng(3);
  UNetConfig cfg;
  cfg.in_channels = 2;
  cfg.out_channels = 2;
  cfg.base_width = 4;
  cfg.levels = 2;
  UNet net(cfg, 5);
  Tensor x = random_tensor(1, 2, 8, 8, rng);
  const Tensor r = random_tensor(1, 2, 8, 8, rng);
  auto params = net.params();
  for (auto* p : params) p->zero_grad();
  net.forward(x);
  const Tensor gx = net.backward(r);

  auto loss = [&] { return weighted_sum(net.forward(x), r); };
  std::vector<double> analytic, numeric;
  const float h = 1e-3f;
  auto probe = [&](float& v, double g) {
    const float orig = v;
    v = orig + h;
    const double up = loss();
    v = orig - h;
    const double down = loss();
    v = orig;
    analytic.push_back(g);
    numeric.push_back((up - down) / (2.0 * h));
  };
  for (std::size_t i = 0; i < x.size(); i += 3) probe(x.data[i], gx.data[i]);
  for (auto* p : params) {
    for (std::size_t i = 0; i < p->size(); i += std::max<std::size_t>(1, p->size() / 7)) probe(p->value[i], p->grad[i]);
  }
  // Float arithmetic and the occasional ReLU kink inside the step.
  EXPECT_LT(oracle::relative_l2(analytic, numeric), 2e-2) << analytic.size() << " coordinates";
}

TEST(UNet, ShapesAndDivisibility) {
  UNetConfig cfg;
  cfg.in_channels = 3;
  cfg.out_channels = 4;
  cfg.base_width = 4;
  cfg.levels = 3;
  UNet net(cfg, 1);
  Rng rng(4);
  const Tensor y = net.forward(random_tensor(2, 3, 16, 12, rng));
  EXPECT_EQ(y.n, 2);
  EXPECT_EQ(y.c, 4);
  EXPECT_EQ(y.h, 16);
  EXPECT_EQ(y.w, 12);
  EXPECT_THROW(net.forward(random_tensor(1, 3, 10, 12, rng)), ShapeError);

  ShuffledUNet sh(cfg, 4, 1);
  const Tensor z = sh.forward(random_tensor(1, 3, 64, 64, rng));
  EXPECT_EQ(z.c, 4);
  EXPECT_EQ(z.h, 64);
  EXPECT_THROW(sh.forward(random_tensor(1, 2, 64, 64, rng)), ShapeError);
}

TEST(UNet, SameSeedSameWeights) {
  UNetConfig cfg;
  cfg.base_width = 4;
  cfg.levels = 2;
  UNet a(cfg, 9), b(cfg, 9), c(cfg, 10);
  const auto pa = a.params(), pb = b.params(), pc = c.params();
  ASSERT_EQ(pa.size(), pb.size());
  bool all_same_c = true;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    EXPECT_EQ(pa[i]->value, pb[i]->value);
    all_same_c &= pa[i]->value == pc[i]->value;
  }
  EXPECT_FALSE(all_same_c);
}

TEST(TensorOps, ShuffleRoundTripAndLayout) {
  Rng rng(5);
  const Tensor x = random_tensor(2, 3, 8, 4, rng);
  const Tensor u = pixel_unshuffle(x, 2);
  EXPECT_EQ(u.c, 12);
  EXPECT_EQ(u.h, 4);
  EXPECT_EQ(u.w, 2);
  // Output channel c*r*r + dy*r + dx holds pixel (2y+dy, 2x+dx) of channel c.
  EXPECT_EQ(u.at(1, 2 * 4 + 1 * 2 + 0, 3, 1), x.at(1, 2, 7, 2));
  EXPECT_EQ(pixel_shuffle(u, 2).data, x.data);

  const Tensor b = random_tensor(2, 5, 8, 4, rng);
  const Tensor cat = concat_channels(x, b);
  Tensor ga, gb;
  split_channels(cat, 3, ga, gb);
  EXPECT_EQ(ga.data, x.data);
  EXPECT_EQ(gb.data, b.data);
}

TEST(TensorOps, PoolingAndUpsamplingAdjoints) {
  Rng rng(6);
  const Tensor x = random_tensor(1, 2, 6, 4, rng);
  std::vector<std::uint8_t> arg;
  const Tensor p = max_pool2(x, arg);
  ASSERT_EQ(p.h, 3);
  for (int c = 0; c < 2; ++c) {
    for (int y = 0; y < 3; ++y) {
      for (int xx = 0; xx < 2; ++xx) {
        const float m = std::max({x.at(0, c, 2 * y, 2 * xx), x.at(0, c, 2 * y, 2 * xx + 1), x.at(0, c, 2 * y + 1, 2 * xx),
                                  x.at(0, c, 2 * y + 1, 2 * xx + 1)});
        EXPECT_EQ(p.at(0, c, y, xx), m);
      }
    }
  }
  // <pool_backward(g), x> = <g, pool(x)> for the recorded argmax.
  const Tensor g = random_tensor(1, 2, 3, 2, rng);
  EXPECT_NEAR(weighted_sum(max_pool2_backward(g, arg, 6, 4), x), weighted_sum(g, p), 1e-5);
  // <up(a), b> = <a, up_backward(b)>.
  const Tensor a = random_tensor(1, 2, 3, 2, rng);
  const Tensor bb = random_tensor(1, 2, 6, 4, rng);
  EXPECT_NEAR(weighted_sum(upsample2(a), bb), weighted_sum(a, upsample2_backward(bb)), 1e-5);
}

TEST(TensorOps, LeakyReluAndSigmoid) {
  Tensor x(1, 1, 1, 4);
  x.data = {-2.0f, -0.0f, 0.5f, 3.0f};
  const Tensor y = leaky_relu(x, 0.1f);
  EXPECT_FLOAT_EQ(y.data[0], -0.2f);
  EXPECT_FLOAT_EQ(y.data[3], 3.0f);
  Tensor g(1, 1, 1, 4, 1.0f);
  const Tensor gy = leaky_relu_backward(x, g, 0.1f);
  EXPECT_FLOAT_EQ(gy.data[0], 0.1f);
  EXPECT_FLOAT_EQ(gy.data[2], 1.0f);
  const Tensor s = sigmoid(x);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(s.data[i], 1.0 / (1.0 + std::exp(-x.data[i])), 1e-6);
}

TEST(Convert, SoftmaxOneHotArgmax) {
  Rng rng(7);
  const Tensor logits = random_tensor(1, 4, 3, 5, rng, 3.0);
  const Tensor p = softmax_channels(logits);
  for (int y = 0; y < 3; ++y) {
    for (int x = 0; x < 5; ++x) {
      double s = 0;
      for (int c = 0; c < 4; ++c) s += p.at(0, c, y, x);
      EXPECT_NEAR(s, 1.0, 1e-6);
    }
  }
  Tensor tie(1, 3, 1, 1, 0.5f);
  EXPECT_EQ(argmax_map(tie)(0, 0), 0);

  const auto map = salad::testing::random_composition_map(16, 3, 3);
  const Tensor oh = one_hot(map);
  EXPECT_EQ(oh.c, 4);
  EXPECT_EQ(argmax_map(oh), map);
}

TEST(Optim, DecayScheduleArithmetic) {
  EXPECT_EQ(decay_step(70000, 0.9), 63000);
  EXPECT_EQ(decay_step(2000, 0.9), 1800);
  EXPECT_FLOAT_EQ(step_decay_lr(1e-4f, 62999, 70000, 0.9, 0.1f), 1e-4f);
  EXPECT_FLOAT_EQ(step_decay_lr(1e-4f, 63000, 70000, 0.9, 0.1f), 1e-5f);
}

TEST(Optim, AdamMinimisesAQuadratic) {
  Param p;
  p.name = "p";
  p.shape = {3};
  p.value = {3.0f, -2.0f, 0.5f};
  p.grad.assign(3, 0.0f);
  Adam opt({&p}, {0.05f, 0.9f, 0.999f, 1e-8f, 0.0f});
  for (int i = 0; i < 2000; ++i) {
    opt.zero_grad();
    for (int j = 0; j < 3; ++j) p.grad[j] = 2.0f * (p.value[j] - static_cast<float>(j));
    opt.step();
  }
  for (int j = 0; j < 3; ++j) EXPECT_NEAR(p.value[j], j, 1e-2);
  EXPECT_EQ(opt.steps(), 2000);
}

TEST(Checkpoint, RoundTripAndShapeCheck) {
  salad::testing::TempDir dir("ckpt");
  UNetConfig cfg;
  cfg.base_width = 4;
  cfg.levels = 2;
  UNet a(cfg, 1), b(cfg, 2);
  const nlohmann::json manifest = {{"note", "x"}, {"iterations", 12}};
  save_checkpoint(dir / "a.ckpt", a.params(), manifest);
  EXPECT_EQ(read_checkpoint_manifest(dir / "a.ckpt").at("iterations"), 12);
  const auto got = load_checkpoint(dir / "a.ckpt", b.params());
  EXPECT_EQ(got.at("note"), "x");
  const auto pa = a.params(), pb = b.params();
  for (std::size_t i = 0; i < pa.size(); ++i) EXPECT_EQ(pa[i]->value, pb[i]->value);

  UNetConfig wider = cfg;
  wider.base_width = 8;
  UNet c(wider, 1);
  EXPECT_ANY_THROW(load_checkpoint(dir / "a.ckpt", c.params()));
  EXPECT_THROW(load_checkpoint(dir / "missing.ckpt", b.params()), IoError);
}
