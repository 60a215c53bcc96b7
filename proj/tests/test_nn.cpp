// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>

#include "avjoint/checks.hpp"
#include "avjoint/nn/checkpoint.hpp"
#include "avjoint/nn/layers.hpp"
#include "support.hpp"

using namespace avjoint;
using namespace avjoint::nn;
using testsupport::TempDir;

namespace {

Tensor<double> rand_tensor(std::vector<std::size_t> dims, std::uint64_t seed, double lo = -1, double hi = 1) {
  Tensor<double> t(dims);
  auto v = testsupport::uniform_vec(t.size(), seed, lo, hi);
  std::copy(v.begin(), v.end(), t.data());
  return t;
}

void fill(Param<double>& p, std::uint64_t seed) {
  auto v = testsupport::uniform_vec(p.value.size(), seed);
  std::copy(v.begin(), v.end(), p.value.data());
}

}  // namespace

TEST_SUITE("shapes") {
  TEST_CASE("conv_out_len formula") {
    CHECK(conv_out_len(290, 3, 0, 1) == 288);
    CHECK(conv_out_len(288, 3, 1, 2) == 144);
    CHECK(conv_out_len(64, 3, 1, 2) == 32);
    CHECK_THROWS_AS(conv_out_len(2, 3, 0, 1), InvalidInput);
    std::mt19937_64 rng(1);
    for (int i = 0; i < 200; ++i) {
      std::size_t k = 1 + rng() % 7, pad = rng() % 4, stride = 1 + rng() % 4, len = k + rng() % 50;
      std::size_t expect = (len + 2 * pad - k) / stride + 1;
      REQUIRE(conv_out_len(len, k, pad, stride) == expect);
      AvgPool1d<double> pool(k, pad, stride);
      auto y = pool.forward(Tensor<double>({1, 1, len}, 1.0));
      REQUIRE(y.dim(2) == expect);
    }
  }

  TEST_CASE("tensor shape checks") {
    CHECK_THROWS_AS(Tensor<double>({2, 2}, std::vector<double>{1, 2, 3}), InvalidInput);
    Tensor<double> t({2, 3});
    CHECK_THROWS_AS(t.reshape({4}), InvalidInput);
    t.reshape({3, 2});
    CHECK(t.shape_string() == "[3x2]");
  }
}

TEST_SUITE("conv") {
  TEST_CASE("delta kernel copies input") {
    ParamStore<double> s;
    Conv1d<double> c(s, "c", 1, 1, 2, 0, 1, ParamGroup::AE);
    c.weight().value.storage() = {1, 0};
    auto y = c.forward(Tensor<double>({1, 1, 3}, std::vector<double>{1, 2, 3}));
    CHECK(y.storage() == std::vector<double>{1, 2});
    CHECK(c.out_len(290) == 289);
    Conv1d<double> c3(s, "c3", 1, 1, 3, 0, 1, ParamGroup::AE);
    CHECK(c3.out_len(290) == 288);
  }

  TEST_CASE("conv1d matches a triple-loop oracle") {
    for (std::size_t stride : {1u, 2u})
      for (std::size_t pad : {0u, 1u}) {
        ParamStore<double> s;
        Conv1d<double> c(s, "c", 3, 4, 3, pad, stride, ParamGroup::AE);
        fill(c.weight(), 1);
        fill(c.bias(), 2);
        auto x = rand_tensor({2, 3, 8}, 3);
        auto y = c.forward(x);
        const std::size_t lo = (8 + 2 * pad - 3) / stride + 1;
        REQUIRE(y.dims() == std::vector<std::size_t>{2, 4, lo});
        const auto& w = c.weight().value;
        for (std::size_t n = 0; n < 2; ++n)
          for (std::size_t o = 0; o < 4; ++o)
            for (std::size_t l = 0; l < lo; ++l) {
              double acc = c.bias().value[o];
              for (std::size_t i = 0; i < 3; ++i)
                for (std::size_t k = 0; k < 3; ++k) {
                  long pos = static_cast<long>(l * stride + k) - static_cast<long>(pad);
                  if (pos < 0 || pos >= 8) continue;
                  acc += w[(o * 3 + i) * 3 + k] * x[(n * 3 + i) * 8 + static_cast<std::size_t>(pos)];
                }
              REQUIRE(std::abs(y[(n * 4 + o) * lo + l] - acc) <= 1e-12);
            }
      }
  }

  TEST_CASE("conv2d delta kernel, shape and loop oracle") {
    ParamStore<double> s;
    Conv2d<double> id(s, "id", Conv2dShape{2, 2, 1, 1, 1, 1, 0, 0}, ParamGroup::VE);
    id.weight().value.storage() = {1, 0, 0, 1};
    auto x = rand_tensor({1, 2, 5, 5}, 4);
    CHECK(id.forward(x).storage() == x.storage());

    Conv2d<double> big(s, "big", Conv2dShape{3, 2, 3, 3, 2, 2, 1, 1}, ParamGroup::VE);
    CHECK(big.forward(Tensor<double>({1, 3, 64, 64})).dims() == std::vector<std::size_t>{1, 2, 32, 32});

    Conv2d<double> c(s, "c", Conv2dShape{2, 3, 3, 2, 2, 1, 1, 0}, ParamGroup::VE);
    fill(c.weight(), 5);
    fill(c.bias(), 6);
    auto xi = rand_tensor({2, 2, 6, 5}, 7);
    auto y = c.forward(xi);
    const std::size_t ho = (6 + 2 - 3) / 2 + 1, wo = (5 - 2) / 1 + 1;
    REQUIRE(y.dims() == std::vector<std::size_t>{2, 3, ho, wo});
    const auto& w = c.weight().value;
    for (std::size_t n = 0; n < 2; ++n)
      for (std::size_t o = 0; o < 3; ++o)
        for (std::size_t i = 0; i < ho; ++i)
          for (std::size_t j = 0; j < wo; ++j) {
            double acc = c.bias().value[o];
            for (std::size_t ci = 0; ci < 2; ++ci)
              for (std::size_t ki = 0; ki < 3; ++ki)
                for (std::size_t kj = 0; kj < 2; ++kj) {
                  long yy = static_cast<long>(i * 2 + ki) - 1, xx = static_cast<long>(j + kj);
                  if (yy < 0 || yy >= 6) continue;
                  acc += w[((o * 2 + ci) * 3 + ki) * 2 + kj] * xi[((n * 2 + ci) * 6 + yy) * 5 + xx];
                }
            REQUIRE(std::abs(y[((n * 3 + o) * ho + i) * wo + j] - acc) <= 1e-12);
          }
  }

  TEST_CASE("shape mismatch and missing cache") {
    ParamStore<double> s;
    Conv1d<double> c(s, "c", 2, 4, 3, 0, 1, ParamGroup::AE);
    CHECK_THROWS_AS(c.forward(Tensor<double>({1, 3, 10})), InvalidInput);
    CHECK_THROWS_AS(c.backward(Tensor<double>({1, 4, 8})), InvalidState);
  }
}

TEST_SUITE("linear") {
  TEST_CASE("forward and backward against loops") {
    ParamStore<double> s;
    Linear<double> l(s, "l", 3, 2, ParamGroup::SC);
    fill(l.weight(), 1);
    fill(l.bias(), 2);
    auto x = rand_tensor({2, 3}, 3);
    auto y = l.forward(x);
    const auto& w = l.weight().value;
    for (std::size_t n = 0; n < 2; ++n)
      for (std::size_t o = 0; o < 2; ++o) {
        double acc = l.bias().value[o];
        for (std::size_t f = 0; f < 3; ++f) acc += x[n * 3 + f] * w[o * 3 + f];
        CHECK(std::abs(y[n * 2 + o] - acc) <= 1e-12);
      }
    auto dy = rand_tensor({2, 2}, 4);
    auto dx = l.backward(dy);
    for (std::size_t o = 0; o < 2; ++o)
      for (std::size_t f = 0; f < 3; ++f) {
        double acc = 0;
        for (std::size_t n = 0; n < 2; ++n) acc += dy[n * 2 + o] * x[n * 3 + f];
        CHECK(std::abs(l.weight().grad[o * 3 + f] - acc) <= 1e-12);
      }
    for (std::size_t n = 0; n < 2; ++n)
      for (std::size_t f = 0; f < 3; ++f) {
        double acc = 0;
        for (std::size_t o = 0; o < 2; ++o) acc += dy[n * 2 + o] * w[o * 3 + f];
        CHECK(std::abs(dx[n * 3 + f] - acc) <= 1e-12);
      }
    CHECK(l.bias().grad[0] == doctest::Approx(dy[0] + dy[2]));
  }

  TEST_CASE("frozen parameters accumulate no gradient") {
    ParamStore<double> s;
    Linear<double> l(s, "l", 3, 2, ParamGroup::VE);
    s.set_frozen(ParamGroup::VE, true);
    fill(l.weight(), 1);
    l.forward(rand_tensor({2, 3}, 2));
    l.backward(rand_tensor({2, 2}, 3));
    for (double g : l.weight().grad.storage()) CHECK(g == 0.0);
  }

  TEST_CASE("kaiming init bound") {
    ParamStore<float> s;
    Linear<float> l(s, "l", 150, 40, ParamGroup::SC);
    Rng rng(1);
    l.init(rng);
    const double b = kaiming_bound(150);
    CHECK(b == doctest::Approx(std::sqrt(6.0 / 150)));
    for (float v : l.weight().value.storage()) CHECK(std::abs(v) <= b);
  }
}

TEST_SUITE("pooling") {
  TEST_CASE("avgpool worked example") {
    AvgPool1d<double> p;
    auto y = p.forward(Tensor<double>({1, 1, 4}, std::vector<double>{1, 2, 3, 4}));
    REQUIRE(y.size() == 2);
    CHECK(y[0] == doctest::Approx(1.0));
    CHECK(y[1] == doctest::Approx(3.0));
  }

  TEST_CASE("constant input: interior c, padded edge 2c/3") {
    AvgPool1d<double> p;
    auto y = p.forward(Tensor<double>({1, 1, 21}, 6.0));
    REQUIRE(y.size() == 11);
    CHECK(y[0] == doctest::Approx(4.0));
    for (std::size_t i = 1; i < 10; ++i) CHECK(y[i] == doctest::Approx(6.0));
    CHECK(y[10] == doctest::Approx(4.0));
    CHECK(p.out_len(288) == 144);
  }

  TEST_CASE("global average pool") {
    GlobalAvgPool2d<double> g;
    Tensor<double> x({1, 2, 2, 2}, std::vector<double>{1, 2, 3, 4, -1, -1, -1, 3});
    auto y = g.forward(x);
    CHECK(y[0] == 2.5);
    CHECK(y[1] == 0.0);
    auto dx = g.backward(Tensor<double>({1, 2}, std::vector<double>{4, 8}));
    CHECK(dx[0] == 1.0);
    CHECK(dx[7] == 2.0);
  }
}

TEST_SUITE("batchnorm") {
  TEST_CASE("train mode normalises per channel") {
    ParamStore<double> s;
    BatchNorm<double> bn(s, "bn", 3, ParamGroup::AE);
    fill(bn.gamma(), 1);
    fill(bn.beta(), 2);
    auto x = rand_tensor({8, 3, 5}, 3, -4, 9);
    auto y = bn.forward(x, Mode::Train);
    for (std::size_t c = 0; c < 3; ++c) {
      double m = 0, v = 0;
      for (std::size_t n = 0; n < 8; ++n)
        for (std::size_t l = 0; l < 5; ++l) m += y[(n * 3 + c) * 5 + l] / 40.0;
      for (std::size_t n = 0; n < 8; ++n)
        for (std::size_t l = 0; l < 5; ++l) v += std::pow(y[(n * 3 + c) * 5 + l] - m, 2) / 40.0;
      CHECK(std::abs(m - bn.beta().value[c]) <= 1e-6);
      CHECK(std::sqrt(v) == doctest::Approx(std::abs(bn.gamma().value[c])).epsilon(1e-4));
      CHECK(bn.running_var().value[c] >= 0.0);
    }
  }

  TEST_CASE("standardised batch passes through") {
    ParamStore<double> s;
    BatchNorm<double> bn(s, "bn", 1, ParamGroup::AE);
    Tensor<double> x({4, 1}, std::vector<double>{-1, 1, -1, 1});
    auto y = bn.forward(x, Mode::Train);
    for (std::size_t i = 0; i < 4; ++i) CHECK(std::abs(y[i] - x[i]) <= 1e-5);
  }

  TEST_CASE("running stats update with momentum 0.1") {
    ParamStore<double> s;
    BatchNorm<double> bn(s, "bn", 1, ParamGroup::AE);
    bn.forward(Tensor<double>({2, 1}, std::vector<double>{1, 3}), Mode::Train);
    CHECK(bn.running_mean().value[0] == doctest::Approx(0.2));
  }

  TEST_CASE("eval mode is stateless and uses running stats") {
    ParamStore<double> s;
    BatchNorm<double> bn(s, "bn", 2, ParamGroup::AE);
    bn.running_mean().value.storage() = {1.0, -2.0};
    bn.running_var().value.storage() = {4.0, 0.25};
    auto x = rand_tensor({3, 2}, 5);
    auto a = bn.forward(x, Mode::Eval);
    auto b = bn.forward(x, Mode::Eval);
    CHECK(a.storage() == b.storage());
    CHECK(bn.running_mean().value[0] == 1.0);
    CHECK(a[0] == doctest::Approx((x[0] - 1.0) / std::sqrt(4.0 + 1e-5)));
  }

  TEST_CASE("train mode needs two samples") {
    ParamStore<double> s;
    BatchNorm<double> bn(s, "bn", 2, ParamGroup::AE);
    CHECK_THROWS_AS(bn.forward(Tensor<double>({1, 2}), Mode::Train), InvalidInput);
    CHECK_NOTHROW(bn.forward(Tensor<double>({1, 2}), Mode::Eval));
  }
}

TEST_SUITE("activations") {
  TEST_CASE("relu forward and backward") {
    ReLU<double> r;
    auto y = r.forward(Tensor<double>({1, 3}, std::vector<double>{-1, 0, 2}));
    CHECK(y.storage() == std::vector<double>{0, 0, 2});
    ReLU<double> r2;
    r2.forward(Tensor<double>({1, 2}, std::vector<double>{-1, 2}));
    CHECK(r2.backward(Tensor<double>({1, 2}, 1.0)).storage() == std::vector<double>{0, 1});
    ReLU<double> r3;
    CHECK_THROWS_AS(r3.backward(Tensor<double>({1, 2})), InvalidState);
  }

  TEST_CASE("dropout") {
    Rng rng(1);
    Dropout<double> d0(0.0);
    auto x = rand_tensor({4, 5}, 1);
    CHECK(d0.forward(x, Mode::Train, rng).storage() == x.storage());
    Dropout<double> d(0.5);
    CHECK(d.forward(x, Mode::Eval, rng).storage() == x.storage());
    Tensor<double> ones({100000}, 1.0);
    auto y = d.forward(ones, Mode::Train, rng);
    double mean = 0;
    std::size_t zeros = 0;
    for (double v : y.storage()) {
      mean += v / 1e5;
      zeros += v == 0.0;
      REQUIRE((v == 0.0 || v == 2.0));
    }
    CHECK(std::abs(mean - 1.0) <= 0.02);
    auto dx = d.backward(ones);
    CHECK(dx.storage() == y.storage());
    Rng a(9), b(9);
    CHECK(d.forward(ones, Mode::Train, a).storage() == d.forward(ones, Mode::Train, b).storage());
    CHECK_THROWS_AS(Dropout<double>(1.0), InvalidConfig);
    CHECK_THROWS_AS(Dropout<double>(-0.1), InvalidConfig);
  }
}

TEST_SUITE("softmax") {
  TEST_CASE("uniform logits give ln K") {
    auto r = softmax_cross_entropy(Tensor<double>({3, 10}, 0.0), {0, 4, 9});
    CHECK(r.loss == doctest::Approx(std::log(10.0)).epsilon(1e-15));
    for (double p : r.probs.storage()) CHECK(p == doctest::Approx(0.1));
  }

  TEST_CASE("saturated logit") {
    Tensor<double> z({1, 4}, 0.0);
    z[2] = 1000.0;
    CHECK(softmax_cross_entropy(z, {2}).loss < 1e-12);
  }

  TEST_CASE("matches an extended-precision oracle") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      auto z = rand_tensor({4, 10}, seed, -8, 8);
      std::vector<int> y{1, 0, 9, 5};
      auto r = softmax_cross_entropy(z, y);
      long double loss = 0;
      for (std::size_t n = 0; n < 4; ++n) {
        long double s = 0;
        for (std::size_t k = 0; k < 10; ++k) s += std::exp(static_cast<long double>(z[n * 10 + k]));
        loss += std::log(s) - static_cast<long double>(z[n * 10 + static_cast<std::size_t>(y[n])]);
      }
      loss /= 4;
      CHECK(std::abs(r.loss - static_cast<double>(loss)) <= 1e-10);
    }
  }

  TEST_CASE("rows sum to one for large logits") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      auto z = rand_tensor({5, 7}, seed, -1e4, 1e4);
      auto p = softmax(z);
      for (std::size_t n = 0; n < 5; ++n) {
        double s = 0;
        for (std::size_t k = 0; k < 7; ++k) {
          REQUIRE(std::isfinite(p[n * 7 + k]));
          s += p[n * 7 + k];
        }
        REQUIRE(std::abs(s - 1.0) <= 1e-9);
      }
    }
  }

  TEST_CASE("backward and errors") {
    auto r = softmax_cross_entropy(Tensor<double>({2, 2}, std::vector<double>{0, 0, 1, 1}), {0, 1});
    auto g = softmax_cross_entropy_backward(r.probs, {0, 1});
    CHECK(g[0] == doctest::Approx(-0.25));
    CHECK(g[1] == doctest::Approx(0.25));
    Tensor<double> bad({1, 2}, 0.0);
    bad[1] = std::nan("");
    CHECK_THROWS_AS(softmax_cross_entropy(bad, {0}), NumericalError);
    CHECK_THROWS_AS(softmax_cross_entropy(Tensor<double>({1, 2}), {2}), InvalidInput);
  }

  TEST_CASE("concat and split") {
    Tensor<double> a({2, 2}, std::vector<double>{1, 2, 3, 4}), b({2, 1}, std::vector<double>{5, 6});
    auto c = concat_cols(a, b);
    CHECK(c.storage() == std::vector<double>{1, 2, 5, 3, 4, 6});
    auto [l, r] = split_cols(c, 2);
    CHECK(l.storage() == a.storage());
    CHECK(r.storage() == b.storage());
    CHECK_THROWS_AS(concat_cols(a, Tensor<double>({3, 1})), InvalidInput);
  }
}

TEST_SUITE("gradcheck") {
  TEST_CASE("relative error definition") {
    CHECK(checks::relative_error(1.0, 1.0) == 0.0);
    CHECK(checks::relative_error(0.0, 0.0) == 0.0);
    CHECK(checks::relative_error(1.0, 3.0) == doctest::Approx(0.5));
  }

  TEST_CASE("single linear + CE below 1e-6") {
    ParamStore<double> s;
    Linear<double> l(s, "l", 5, 3, ParamGroup::SC);
    Rng rng(3);
    l.init(rng);
    auto x = rand_tensor({4, 5}, 8);
    std::vector<int> y{0, 2, 1, 2};
    auto loss = [&] { return softmax_cross_entropy(l.forward(x), y).loss; };
    s.zero_grad();
    auto r = softmax_cross_entropy(l.forward(x), y);
    l.backward(softmax_cross_entropy_backward(r.probs, y));
    CHECK(checks::grad_check(loss, s, 1e-5, rng) < 1e-6);
  }

  TEST_CASE("every layer and the composite pass") {
    checks::GradCheckOptions o;
    auto rep = checks::run_grad_check(o);
    CHECK(rep.pass);
    CHECK(rep.max_rel_error < 1e-5);
    CHECK(rep.entries.size() >= 10);
    for (const auto& e : rep.entries) CHECK_MESSAGE(e.pass, e.name);
  }

  TEST_CASE("sabotaged conv gradient is caught") {
    checks::GradCheckOptions o;
    o.sabotage = "conv";
    auto rep = checks::run_grad_check(o);
    CHECK_FALSE(rep.pass);
  }
}

TEST_SUITE("checkpoint") {
  ParamStore<float> make_store() {
    ParamStore<float> s;
    s.add("a.weight", {3, 4}, ParamGroup::AE);
    s.add("a.mean", {3}, ParamGroup::AE, true);
    s.add("v.weight", {2, 2, 3}, ParamGroup::VE).frozen = true;
    for (std::size_t i = 0; i < s.size(); ++i) {
      auto v = testsupport::uniform_vec(s[i].value.size(), i);
      for (std::size_t j = 0; j < v.size(); ++j) s[i].value[j] = static_cast<float>(v[j]);
    }
    return s;
  }

  TEST_CASE("round trip is bit exact") {
    TempDir dir("ckpt");
    auto s = make_store();
    save_weights(dir / "w.avw1", s);
    auto t = make_store();
    for (std::size_t i = 0; i < t.size(); ++i) t[i].value.fill(0.f);
    load_weights(dir / "w.avw1", t);
    for (std::size_t i = 0; i < s.size(); ++i) CHECK(t[i].value.storage() == s[i].value.storage());
    CHECK(encode_weights(s) == testsupport::slurp(dir / "w.avw1"));
  }

  TEST_CASE("every single-byte corruption is rejected") {
    auto s = make_store();
    const auto good = encode_weights(s);
    for (std::size_t i = 0; i < good.size(); ++i) {
      auto bad = good;
      bad[i] = static_cast<char>(bad[i] ^ 0x5a);
      auto t = make_store();
      REQUIRE_THROWS_AS(decode_weights(bad, t), FormatError);
    }
    for (std::size_t cut : {0ul, 5ul, good.size() / 2, good.size() - 1}) {
      auto t = make_store();
      REQUIRE_THROWS_AS(decode_weights(good.substr(0, cut), t), FormatError);
    }
  }

  TEST_CASE("missing entries and shape mismatches") {
    auto s = make_store();
    ParamStore<float> bigger = make_store();
    bigger.add("extra", {1}, ParamGroup::SC);
    CHECK_THROWS_AS(decode_weights(encode_weights(s), bigger), FormatError);
    CHECK_NOTHROW(decode_weights(encode_weights(s), bigger, false));
    ParamStore<float> other;
    other.add("a.weight", {4, 3}, ParamGroup::AE);
    CHECK_THROWS_AS(decode_weights(encode_weights(s), other, false), FormatError);
    TempDir dir("ckpt");
    CHECK_THROWS_AS(load_weights(dir / "nope.avw1", other), Error);
  }
}

TEST_SUITE("params") {
  TEST_CASE("groups, snapshots and duplicates") {
    ParamStore<double> s;
    s.add("x", {2}, ParamGroup::AE);
    s.add("y", {2}, ParamGroup::VE);
    s.add("m", {2}, ParamGroup::SC, true);
    CHECK_THROWS_AS(s.add("x", {1}, ParamGroup::AE), InvalidState);
    s.set_frozen(ParamGroup::VE, true);
    CHECK(s.trainable_groups() == std::set<ParamGroup>{ParamGroup::AE});
    CHECK(s.frozen_groups() == std::set<ParamGroup>{ParamGroup::VE});
    auto snap = s.snapshot();
    s[0].value.fill(3.0);
    s.restore(snap);
    CHECK(s[0].value[0] == 0.0);
    CHECK(std::string(to_string(ParamGroup::SC)) == "SC");
  }
}
