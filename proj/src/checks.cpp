// SPDX-License-Identifier: Apache-2.0
#include "avjoint/checks.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "avjoint/model.hpp"

namespace avjoint::checks {

using nn::Mode;
using nn::ParamStore;
using nn::Tensor;

double relative_error(double analytic, double numeric) noexcept {
  return std::abs(analytic - numeric) / std::max(1e-8, std::abs(analytic) + std::abs(numeric));
}

namespace {

std::vector<std::size_t> sample_coords(std::size_t n, std::size_t max_coords, Rng& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (n <= max_coords) return idx;
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(max_coords);
  std::sort(idx.begin(), idx.end());
  return idx;
}

struct Coord {
  double* value;
  double analytic;
};

double numeric_at(const std::function<double()>& loss, double* v, double eps) {
  const double orig = *v;
  *v = orig + eps;
  const double fp = loss();
  *v = orig - eps;
  const double fm = loss();
  *v = orig;
  return (fp - fm) / (2.0 * eps);
}

bool sabotaged(const std::string& param_name, const GradCheckOptions& o) {
  return o.sabotage == "conv" && param_name.size() >= 11 &&
         param_name.compare(param_name.size() - 11, 11, "conv.weight") == 0;
}

void param_coords(ParamStore<double>& store, std::size_t max_coords, Rng& rng, const GradCheckOptions* o,
                  std::vector<Coord>& out) {
  for (std::size_t i = 0; i < store.size(); ++i) {
    auto& p = store[i];
    if (!p.trainable()) continue;
    const bool shift = o && sabotaged(p.name, *o);
    for (auto k : sample_coords(p.value.size(), max_coords, rng))
      out.push_back({&p.value[k], p.grad[shift ? (k + 1) % p.grad.size() : k]});
  }
}

struct Input {
  Tensor<double>* x;
  Tensor<double> grad;
};

GradCheckEntry check(const std::string& name, ParamStore<double>& store, std::vector<Input> inputs,
                     const std::function<double()>& loss, const GradCheckOptions& o, Rng& rng) {
  std::vector<Coord> coords;
  for (auto& in : inputs)
    for (auto k : sample_coords(in.x->size(), o.max_coords, rng)) coords.push_back({&(*in.x)[k], in.grad[k]});
  param_coords(store, o.max_coords, rng, &o, coords);
  GradCheckEntry e;
  e.name = name;
  e.coords = coords.size();
  for (const auto& c : coords)
    e.max_rel_error = std::max(e.max_rel_error, relative_error(c.analytic, numeric_at(loss, c.value, o.eps)));
  e.pass = e.max_rel_error < o.tolerance;
  return e;
}

Tensor<double> randn(std::vector<std::size_t> dims, Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  Tensor<double> t(std::move(dims));
  for (auto& v : t.storage()) v = g(rng);
  return t;
}

// Values bounded away from zero so ReLU kinks are never crossed.
Tensor<double> rand_off_zero(std::vector<std::size_t> dims, Rng& rng) {
  std::uniform_real_distribution<double> u(0.1, 1.0);
  std::bernoulli_distribution sign(0.5);
  Tensor<double> t(std::move(dims));
  for (auto& v : t.storage()) v = sign(rng) ? u(rng) : -u(rng);
  return t;
}

double dot(const Tensor<double>& a, const Tensor<double>& b) {
  if (a.size() != b.size()) throw InvalidState("grad check projection size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

void randomize(ParamStore<double>& store, Rng& rng) {
  std::uniform_real_distribution<double> small(-0.1, 0.1), gam(0.5, 1.5), var(0.5, 1.5), w(-0.5, 0.5);
  auto ends = [](const std::string& s, const std::string& suf) {
    return s.size() >= suf.size() && s.compare(s.size() - suf.size(), suf.size(), suf) == 0;
  };
  for (std::size_t i = 0; i < store.size(); ++i) {
    auto& p = store[i];
    for (auto& v : p.value.storage()) {
      if (ends(p.name, ".running_var") || ends(p.name, ".gamma")) v = ends(p.name, ".gamma") ? gam(rng) : var(rng);
      else if (ends(p.name, ".running_mean") || ends(p.name, ".bias") || ends(p.name, ".beta")) v = small(rng);
      else if (p.value.rank() >= 2 && p.value.size() < 4096) v = w(rng);
    }
  }
}

}  // namespace

double grad_check(const std::function<double()>& loss, ParamStore<double>& params, double eps, Rng& rng,
                  std::size_t max_coords) {
  std::vector<Coord> coords;
  param_coords(params, max_coords, rng, nullptr, coords);
  double worst = 0.0;
  for (const auto& c : coords) worst = std::max(worst, relative_error(c.analytic, numeric_at(loss, c.value, eps)));
  return worst;
}

GradCheckReport run_grad_check(const GradCheckOptions& o) {
  if (!(o.eps > 0.0)) throw InvalidConfig("grad-check eps must be positive");
  GradCheckReport rep;
  Rng rng = make_rng(o.seed, SeedPurpose::Init, tag_hash("gradcheck"));
  auto add = [&](GradCheckEntry e) {
    rep.max_rel_error = std::max(rep.max_rel_error, e.max_rel_error);
    rep.pass = rep.pass && e.pass;
    rep.entries.push_back(std::move(e));
  };

  {
    ParamStore<double> s;
    nn::Linear<double> l(s, "linear", 5, 4, nn::ParamGroup::SC);
    randomize(s, rng);
    Tensor<double> x = randn({3, 5}, rng), w = randn({3, 4}, rng);
    auto loss = [&] { return dot(l.forward(x), w); };
    l.forward(x);
    Tensor<double> dx = l.backward(w);
    add(check("linear", s, {{&x, dx}}, loss, o, rng));
  }
  {
    ParamStore<double> s;
    nn::Conv1d<double> c(s, "conv1d.conv", 3, 4, 3, 1, 2, nn::ParamGroup::AE);
    randomize(s, rng);
    Tensor<double> x = randn({2, 3, 9}, rng);
    Tensor<double> w = randn(c.forward(x).dims(), rng);
    auto loss = [&] { return dot(c.forward(x), w); };
    c.forward(x);
    Tensor<double> dx = c.backward(w);
    add(check("conv1d", s, {{&x, dx}}, loss, o, rng));
  }
  {
    ParamStore<double> s;
    nn::Conv2d<double> c(s, "conv2d.conv", nn::Conv2dShape{3, 4, 3, 3, 2, 2, 1, 1}, nn::ParamGroup::VE);
    randomize(s, rng);
    Tensor<double> x = randn({2, 3, 7, 7}, rng);
    Tensor<double> w = randn(c.forward(x).dims(), rng);
    auto loss = [&] { return dot(c.forward(x), w); };
    c.forward(x);
    Tensor<double> dx = c.backward(w);
    add(check("conv2d", s, {{&x, dx}}, loss, o, rng));
  }
  {
    ParamStore<double> s;
    nn::AvgPool1d<double> p(3, 1, 2);
    Tensor<double> x = randn({2, 3, 8}, rng);
    Tensor<double> w = randn(p.forward(x).dims(), rng);
    auto loss = [&] { return dot(p.forward(x), w); };
    p.forward(x);
    Tensor<double> dx = p.backward(w);
    add(check("avgpool1d", s, {{&x, dx}}, loss, o, rng));
  }
  for (Mode mode : {Mode::Train, Mode::Eval}) {
    ParamStore<double> s;
    nn::BatchNorm<double> bn(s, "bn", 3, nn::ParamGroup::AE);
    randomize(s, rng);
    Tensor<double> x = randn({4, 3, 5}, rng, 2.0), w = randn({4, 3, 5}, rng);
    auto loss = [&] { return dot(bn.forward(x, mode), w); };
    bn.forward(x, mode);
    Tensor<double> dx = bn.backward(w);
    add(check(mode == Mode::Train ? "batchnorm_train" : "batchnorm_eval", s, {{&x, dx}}, loss, o, rng));
  }
  {
    ParamStore<double> s;
    nn::ReLU<double> r;
    Tensor<double> x = rand_off_zero({3, 7}, rng), w = randn({3, 7}, rng);
    auto loss = [&] { return dot(r.forward(x), w); };
    r.forward(x);
    Tensor<double> dx = r.backward(w);
    add(check("relu", s, {{&x, dx}}, loss, o, rng));
  }
  {
    ParamStore<double> s;
    nn::Dropout<double> d(0.3);
    Tensor<double> x = randn({3, 7}, rng), w = randn({3, 7}, rng);
    // The mask is pinned by re-seeding the stream for every evaluation.
    auto loss = [&] {
      Rng m(1234);
      return dot(d.forward(x, Mode::Train, m), w);
    };
    loss();
    Tensor<double> dx = d.backward(w);
    add(check("dropout", s, {{&x, dx}}, loss, o, rng));
  }
  {
    ParamStore<double> s;
    nn::GlobalAvgPool2d<double> g;
    Tensor<double> x = randn({2, 3, 4, 4}, rng), w = randn({2, 3}, rng);
    auto loss = [&] { return dot(g.forward(x), w); };
    g.forward(x);
    Tensor<double> dx = g.backward(w);
    add(check("global_avgpool2d", s, {{&x, dx}}, loss, o, rng));
  }
  {
    ParamStore<double> s;
    Tensor<double> x = randn({4, 5}, rng, 2.0);
    const std::vector<int> labels{0, 3, 4, 1};
    auto loss = [&] { return static_cast<double>(nn::softmax_cross_entropy(x, labels).loss); };
    Tensor<double> dx = nn::softmax_cross_entropy_backward(nn::softmax_cross_entropy(x, labels).probs, labels);
    add(check("softmax_cross_entropy", s, {{&x, dx}}, loss, o, rng));
  }

  // Composite: full-length acoustic conv stack with shortcuts and input
  // concatenation, fused with frozen visual features, then the classifier.
  // BN runs on randomized running statistics, dropout is off.
  {
    model::ModelConfig mc;
    mc.mode = model::SystemMode::AvJoint;
    mc.ae.in_bins = 290;
    mc.ae.fc1 = 24;
    mc.ae.fc2 = 16;
    mc.ae.dropout = 0.0;
    mc.ve.channels = {4, 6};
    mc.ve.image_size = 8;
    mc.sc.hidden = 12;
    mc.sc.dropout = 0.0;
    mc.sc.n_classes = 5;
    model::AVModel<double> m(mc);
    m.init(o.seed);
    randomize(m.params(), rng);
    model::ModelInput<double> in;
    in.audio = randn({3, 2, 290}, rng);
    in.visual = randn({3, 3, 8, 8}, rng);
    const std::vector<int> labels{1, 4, 2};
    Rng unused(0);
    auto loss = [&] {
      return 3.0 * static_cast<double>(nn::softmax_cross_entropy(m.forward(in, Mode::Eval, unused), labels).loss);
    };
    m.params().zero_grad();
    const auto ce = nn::softmax_cross_entropy(m.forward(in, Mode::Eval, unused), labels);
    Tensor<double> dl = nn::softmax_cross_entropy_backward(ce.probs, labels);
    for (auto& v : dl.storage()) v *= 3.0;
    m.backward(dl);
    add(check("ae_fuse_sc", m.params(), {}, loss, o, rng));

    GradCheckEntry frozen;
    frozen.name = "frozen_ve_no_grad";
    frozen.pass = true;
    for (std::size_t i = 0; i < m.params().size(); ++i) {
      const auto& p = m.params()[i];
      if (p.group != nn::ParamGroup::VE || p.buffer) continue;
      ++frozen.coords;
      for (double g : p.grad.storage())
        if (g != 0.0) frozen.pass = false;
    }
    frozen.max_rel_error = frozen.pass ? 0.0 : 1.0;
    add(frozen);
  }
  return rep;
}

}  // namespace avjoint::checks
