// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <map>
#include <sstream>

#include "avjoint/nn/checkpoint.hpp"
#include "avjoint/train.hpp"
#include "support.hpp"

using namespace avjoint;
using namespace avjoint::train;
using testsupport::TempDir;

namespace {

TrainConfig sched(double t0 = 10, double mult = 2) {
  TrainConfig c;
  c.restart_t0 = t0;
  c.restart_mult = mult;
  return c;
}

// Small separable synthetic set, loaded once per process.
const Dataset& small_ds() {
  static TempDir dir("trainds");
  static Dataset ds = [] {
    data::SyntheticSpec s;
    s.n_classes = 4;
    s.clips_per_class = 6;
    s.clip_seconds = 2.0;
    s.image_size = 16;
    auto m = data::generate_synthetic(s, 3, dir / "data");
    m = data::split_train_val(m, 0.25, 3);
    dsp::FeatureExtractor fx(dsp::FeatureConfig{});
    return load_dataset(m, fx, data::LoadOptions{});
  }();
  return ds;
}

model::ModelConfig small_model() {
  model::ModelConfig mc;
  mc.ae.in_bins = 290;
  mc.ae.fc1 = 64;
  mc.ae.fc2 = 32;
  mc.ve.channels = {4, 8};
  mc.ve.image_size = 16;
  mc.sc.hidden = 32;
  return mc;
}

TrainContext small_ctx(TrainLog* log, std::size_t epochs = 3, std::uint64_t seed = 1) {
  TrainContext ctx;
  ctx.ds = &small_ds();
  ctx.model_cfg = small_model();
  ctx.cfg.batch_size = 16;
  ctx.cfg.max_epochs = epochs;
  ctx.cfg.ve_pretrain_epochs = 2;
  ctx.cfg.seed = seed;
  ctx.log = log;
  return ctx;
}

FramePrediction fp(const std::string& clip, int label, double t, std::vector<double> p) {
  return FramePrediction{clip, label, t, std::move(p)};
}

}  // namespace

TEST_SUITE("schedule") {
  TEST_CASE("restarts hit lr_max and cycle ends hit lr_min") {
    auto c = sched();
    for (double start : {0.0, 10.0, 30.0, 70.0, 150.0}) CHECK(lr_at(start, c) == 1e-2);
    for (double end : {10.0, 30.0, 70.0, 150.0}) {
      CHECK(lr_at(end - 1e-9, c) == doctest::Approx(1e-5).epsilon(1e-6));
      auto pos = cycle_position(end - 1e-9, c);
      CHECK(pos.t_cur < pos.t_i);
    }
    CHECK(c.lr_min + 0.5 * (c.lr_max - c.lr_min) * (1 + std::cos(std::numbers::pi)) == 1e-5);
  }

  TEST_CASE("midpoints") {
    auto c = sched();
    for (double mid : {5.0, 20.0, 50.0, 110.0}) CHECK(std::abs(lr_at(mid, c) - 5.005e-3) <= 1e-9);
  }

  TEST_CASE("cycle positions for T0=10, mult=2") {
    auto c = sched();
    auto p = cycle_position(35.0, c);
    CHECK(p.cycle == 2);
    CHECK(p.t_cur == doctest::Approx(5.0));
    CHECK(p.t_i == 40.0);
    CHECK(cycle_position(9.5, c).cycle == 0);
    CHECK(cycle_position(10.0, c).cycle == 1);
    auto flat = sched(7, 1);
    CHECK(cycle_position(22.0, flat).cycle == 3);
    CHECK(cycle_position(22.0, flat).t_cur == doctest::Approx(1.0));
  }

  TEST_CASE("continuous and decreasing inside a cycle") {
    auto c = sched();
    double prev = lr_at(10.0, c);
    for (int i = 1; i < 2000; ++i) {
      double lr = lr_at(10.0 + i * 0.01, c);
      REQUIRE(lr < prev);
      REQUIRE(prev - lr < 1e-4);
      prev = lr;
    }
  }

  TEST_CASE("config validation and enum names") {
    TrainConfig c;
    c.lr_min = 1.0;
    CHECK_THROWS_AS(c.validate(), InvalidConfig);
    c = {};
    c.batch_size = 0;
    CHECK_THROWS_AS(c.validate(), InvalidConfig);
    CHECK(parse_strategy("joint") == Strategy::Joint);
    CHECK(parse_strategy("audio") == Strategy::AudioOnly);
    CHECK(std::string(to_string(Strategy::Pipeline)) == "pipeline");
    CHECK(parse_input_kind("embedding") == InputKind::Embedding);
    CHECK(parse_ae_mode("pretrained") == AeMode::Pretrained);
    CHECK_THROWS_AS(parse_strategy("e2e"), InvalidConfig);
  }
}

TEST_SUITE("sgd") {
  TEST_CASE("plain step") {
    nn::ParamStore<double> s;
    auto& p = s.add("w", {1}, nn::ParamGroup::SC);
    p.value[0] = 1.0;
    p.grad[0] = 0.5;
    Sgd<double> opt(0.0);
    opt.step(s, 0.1);
    CHECK(p.value[0] == doctest::Approx(0.95).epsilon(1e-15));
    CHECK(p.grad[0] == 0.0);
  }

  TEST_CASE("frozen and buffer entries are untouched") {
    nn::ParamStore<double> s;
    auto& f = s.add("f", {2}, nn::ParamGroup::VE);
    f.frozen = true;
    f.value.fill(1.0);
    f.grad.fill(3.0);
    auto& b = s.add("b", {2}, nn::ParamGroup::AE, true);
    b.value.fill(2.0);
    Sgd<double> opt(0.9);
    opt.step(s, 0.5);
    CHECK(f.value[0] == 1.0);
    CHECK(b.value[1] == 2.0);
  }

  TEST_CASE("momentum matches hand recursion") {
    nn::ParamStore<double> s;
    auto& p = s.add("w", {3}, nn::ParamGroup::AE);
    p.value.storage() = {0.3, -1.2, 2.0};
    const std::vector<std::vector<double>> g{{0.1, -0.4, 0.25}, {-0.2, 0.05, 0.7}, {0.3, 0.3, -0.1}};
    const std::vector<double> lr{0.01, 0.007, 0.003};
    std::vector<double> theta = p.value.storage(), v(3, 0.0);
    Sgd<double> opt(0.9);
    for (std::size_t t = 0; t < g.size(); ++t) {
      p.grad.storage() = g[t];
      opt.step(s, lr[t]);
      for (std::size_t i = 0; i < 3; ++i) {
        v[i] = 0.9 * v[i] + g[t][i];
        theta[i] -= lr[t] * v[i];
        REQUIRE(std::abs(p.value[i] - theta[i]) <= 1e-12);
      }
    }
  }

  TEST_CASE("velocity shape mismatch") {
    nn::ParamStore<double> s;
    s.add("w", {3}, nn::ParamGroup::AE);
    std::vector<nn::Tensor<double>> vel{nn::Tensor<double>({2})};
    CHECK_THROWS_AS(sgd_step(s, vel, 0.1, 0.9), InvalidState);
  }
}

TEST_SUITE("evaluation") {
  TEST_CASE("uniform predictor scores ln K") {
    for (std::size_t k : {2u, 6u, 10u}) {
      std::vector<std::string> names(k, "c");
      std::vector<FramePrediction> f;
      for (std::size_t c = 0; c < k; ++c)
        for (int clip = 0; clip < 3; ++clip)
          for (int i = 0; i < 17; ++i)
            f.push_back(fp("k" + std::to_string(c) + "_" + std::to_string(clip), static_cast<int>(c), 0.256 + 0.171 * i,
                           std::vector<double>(k, 1.0 / static_cast<double>(k))));
      auto r = evaluate_frames(f, names);
      CHECK(std::abs(r.avg_logloss - std::log(static_cast<double>(k))) <= 1e-12);
      CHECK(r.per_class_accuracy[0] == 1.0);
      CHECK(r.per_class_accuracy[1] == 0.0);
      CHECK(r.avg_accuracy == doctest::Approx(1.0 / static_cast<double>(k)));
    }
  }

  TEST_CASE("56 frames of a 10 s clip make 10 segments") {
    std::vector<FramePrediction> f;
    for (int i = 0; i < 56; ++i) f.push_back(fp("c", 1, (i * 2736 + 4096) / 16000.0, {0.3, 0.7}));
    auto r = evaluate_frames(f, {"a", "b"});
    REQUIRE(r.segments.size() == 10);
    std::size_t total = 0;
    for (std::size_t s = 0; s < 10; ++s) {
      CHECK(r.segments[s].segment == s);
      total += r.segments[s].n_frames;
    }
    CHECK(total == 56);
    std::size_t in9 = 0;
    for (const auto& x : f) in9 += x.center_time >= 9.0 && x.center_time < 10.0;
    CHECK(r.segments[9].n_frames == in9);
  }

  TEST_CASE("identical rows average exactly") {
    std::mt19937_64 rng(4);
    for (int trial = 0; trial < 50; ++trial) {
      std::vector<double> row(7);
      double s = 0;
      for (auto& v : row) s += (v = std::uniform_real_distribution<double>(0.01, 1)(rng));
      for (auto& v : row) v /= s;
      std::vector<const std::vector<double>*> rows(1 + rng() % 20, &row);
      REQUIRE(mean_rows(rows) == row);
    }
  }

  TEST_CASE("segment averaging of identical frames equals frame-level evaluation") {
    std::vector<FramePrediction> many, single;
    for (int c = 0; c < 3; ++c)
      for (int sec = 0; sec < 4; ++sec) {
        std::vector<double> p{0.2 + 0.1 * c, 0.5 - 0.05 * sec, 0.0};
        p[2] = 1.0 - p[0] - p[1];
        single.push_back(fp("clip" + std::to_string(c), c, sec + 0.5, p));
        for (int j = 0; j < 6; ++j) many.push_back(fp("clip" + std::to_string(c), c, sec + 0.1 * j, p));
      }
    auto a = evaluate_frames(many, {"x", "y", "z"});
    auto b = evaluate_frames(single, {"x", "y", "z"});
    CHECK(a.avg_logloss == b.avg_logloss);
    CHECK(a.avg_accuracy == b.avg_accuracy);
    for (std::size_t s = 0; s < b.segments.size(); ++s) CHECK(a.segments[s].probs == b.segments[s].probs);
    for (std::size_t s = 0; s < b.segments.size(); ++s) CHECK(b.segments[s].probs == single[s].probs);
  }

  TEST_CASE("averages are unweighted class means and rows sum to one") {
    std::vector<FramePrediction> f{fp("a", 0, 0.5, {0.9, 0.1}), fp("a", 0, 1.5, {0.6, 0.4}), fp("a", 0, 2.5, {0.8, 0.2}),
                                   fp("b", 1, 0.5, {0.7, 0.3})};
    auto r = evaluate_frames(f, {"x", "y"});
    double l0 = -(std::log(0.9) + std::log(0.6) + std::log(0.8)) / 3, l1 = -std::log(0.3);
    CHECK(r.per_class_logloss[0] == doctest::Approx(l0));
    CHECK(r.avg_logloss == doctest::Approx((l0 + l1) / 2));
    CHECK(r.avg_accuracy == doctest::Approx(0.5));
    for (const auto& s : r.segments) CHECK(std::abs(s.probs[0] + s.probs[1] - 1.0) <= 1e-9);
  }

  TEST_CASE("renormalisation only beyond 1e-9 and log clamp") {
    auto r = evaluate_frames({fp("a", 0, 0.1, {0.5, 0.5 + 5e-10}), fp("b", 1, 0.1, {2.0, 2.0})}, {"x", "y"});
    CHECK(r.segments[0].probs[1] == 0.5 + 5e-10);
    CHECK(r.segments[1].probs[0] == 0.5);
    auto z = evaluate_frames({fp("a", 0, 0.1, {0.0, 1.0}), fp("b", 1, 0.1, {0.0, 1.0})}, {"x", "y"});
    CHECK(z.per_class_logloss[0] == doctest::Approx(-std::log(1e-15)));
  }

  TEST_CASE("argmax ties go to the lowest index") {
    CHECK(argmax({0.25, 0.25, 0.25, 0.25}) == 0);
    CHECK(argmax({0.1, 0.45, 0.45}) == 1);
  }

  TEST_CASE("absent classes are skipped from the average") {
    auto r = evaluate_frames({fp("a", 0, 0.1, {0.5, 0.25, 0.25})}, {"x", "y", "z"});
    CHECK(std::isnan(r.per_class_logloss[1]));
    CHECK(r.avg_logloss == doctest::Approx(std::log(2.0)));
  }

  TEST_CASE("input errors") {
    CHECK_THROWS_AS(evaluate_frames({fp("a", 0, 0.1, {1.0})}, {"x", "y"}), InvalidInput);
    CHECK_THROWS_AS(evaluate_frames({fp("a", 5, 0.1, {0.5, 0.5})}, {"x", "y"}), InvalidInput);
    CHECK_THROWS_AS(evaluate_frames({fp("a", 0, 0.1, {0.5, 0.5}), fp("a", 1, 0.2, {0.5, 0.5})}, {"x", "y"}),
                    InvalidInput);
    CHECK_THROWS_AS(evaluate_frames({}, {"x", "y"}), InvalidInput);
  }

  TEST_CASE("report text") {
    auto r = evaluate_frames({fp("a", 0, 0.1, {0.5, 0.5}), fp("b", 1, 0.1, {0.5, 0.5})}, {"x", "y"});
    std::ostringstream os;
    write_report(os, r);
    const auto s = os.str();
    CHECK(s.find("avg_logloss\t0.69314718055994") != std::string::npos);
    CHECK(s.find("[per_class]") != std::string::npos);
    CHECK(s.find("[segments]") != std::string::npos);
  }
}

TEST_SUITE("training") {
  TEST_CASE("joint training beats the uniform loss in the first epoch") {
    for (std::uint64_t seed : {1, 2, 3}) {
      TrainLog log;
      auto ctx = small_ctx(&log, 1, seed);
      // default AE and SC widths
      ctx.model_cfg.ae = model::AcousticEncoderCfg{};
      ctx.model_cfg.ae.in_bins = 290;
      ctx.model_cfg.sc = model::SceneClassifierCfg{};
      train_joint(ctx);
      REQUIRE(log.records.size() == 1);
      CHECK(log.records[0].train_loss < std::log(4.0));
    }
    TrainLog log;
    auto ctx = small_ctx(&log, 1);
    auto res = train_joint(ctx);
    REQUIRE(log.records.size() == 1);
    CHECK(log.records[0].stage == "joint");
    CHECK(log.records[0].lr == 1e-2);
    CHECK(log.records[0].wall_ms == 0);
  }

  TEST_CASE("VE is bitwise frozen through 10 joint epochs while AE and SC move") {
    auto ctx = small_ctx(nullptr, 10);
    ctx.cfg.patience = 100;
    ctx.ve_weights = resolve_visual_encoder(ctx);
    auto init = model::build_model<float>(model_config_for(ctx.model_cfg, Strategy::Joint), ctx.cfg.seed);
    auto res = train_joint(ctx);
    auto& trained = res.model->params();
    for (std::size_t i = 0; i < trained.size(); ++i) {
      const auto& p = trained[i];
      if (p.group == nn::ParamGroup::VE) {
        CHECK_MESSAGE(p.value.storage() == ctx.ve_weights->find(p.name)->value.storage(), p.name);
      } else if (!p.buffer && p.name.find("weight") != std::string::npos) {
        CHECK_MESSAGE(p.value.storage() != init->params().find(p.name)->value.storage(), p.name);
      }
    }
  }

  TEST_CASE("pipeline stage two trains only the classifier") {
    auto ctx = small_ctx(nullptr, 2);
    ctx.ve_weights = resolve_visual_encoder(ctx);
    auto audio = train_audio_only(ctx);
    CHECK(audio.model->params().trainable_groups() == std::set<nn::ParamGroup>{nn::ParamGroup::AE, nn::ParamGroup::SC});
    auto res = train_pipeline_stage2(ctx, *audio.model);
    CHECK(res.model->params().trainable_groups() == std::set<nn::ParamGroup>{nn::ParamGroup::SC});
    for (std::size_t i = 0; i < res.model->params().size(); ++i) {
      const auto& p = res.model->params()[i];
      if (p.group == nn::ParamGroup::AE) CHECK(p.value.storage() == audio.model->params().find(p.name)->value.storage());
    }
  }

  TEST_CASE("same seed, same log and weights") {
    TrainLog a, b, c;
    auto ra = train::train(small_ctx(&a, 2, 7));
    auto rb = train::train(small_ctx(&b, 2, 7));
    auto rc = train::train(small_ctx(&c, 2, 8));
    CHECK(a.to_jsonl() == b.to_jsonl());
    CHECK(nn::encode_weights(ra.model->params()) == nn::encode_weights(rb.model->params()));
    CHECK(a.to_jsonl() != c.to_jsonl());
  }

  TEST_CASE("best validation snapshot is returned") {
    TrainLog log;
    auto ctx = small_ctx(&log, 6);
    auto res = train_audio_only(ctx);
    for (const auto& r : log.records) CHECK(res.best_val_loss <= r.val_loss);
    auto rep = evaluate(*res.model, small_ds().val, small_ds().class_names);
    CHECK(rep.avg_logloss == doctest::Approx(res.best_val_loss).epsilon(1e-5));
    CHECK(log.records[res.best_epoch - 1].val_loss == res.best_val_loss);
  }

  TEST_CASE("patience stops early") {
    TrainLog log;
    auto ctx = small_ctx(&log, 40);
    ctx.cfg.patience = 1;
    auto res = train_audio_only(ctx);
    CHECK(res.epochs_run < 40);
    CHECK(res.epochs_run == log.records.size());
  }

  TEST_CASE("ablation cells I and IV equal the pipeline and joint runs") {
    TrainLog la, lj, lp;
    auto ctx = small_ctx(&la, 2);
    auto cells = run_ablation(ctx);
    CHECK(cells[0].label == "I");
    CHECK(cells[3].label == "IV");
    CHECK(cells[1].input_kind == InputKind::Embedding);
    CHECK(cells[2].ae_mode == AeMode::Pretrained);
    auto joint = train_joint(small_ctx(&lj, 2));
    auto pipe = train_pipeline(small_ctx(&lp, 2));
    CHECK(nn::encode_weights(cells[3].result.model->params()) == nn::encode_weights(joint.model->params()));
    CHECK(nn::encode_weights(cells[0].result.model->params()) == nn::encode_weights(pipe.model->params()));
    auto rj = evaluate(*joint.model, small_ds().test, small_ds().class_names);
    CHECK(rj.avg_logloss == cells[3].report.avg_logloss);
    for (const auto& c : cells) CHECK(c.report.n_segments > 0);
  }

  TEST_CASE("video-only and embedding export") {
    auto ctx = small_ctx(nullptr, 1);
    ctx.cfg.input_kind = InputKind::Embedding;
    auto res = train_video_only(ctx);
    CHECK_FALSE(res.model->params().has_group(nn::ParamGroup::AE));

    auto joint = train_joint(small_ctx(nullptr, 1));
    TempDir dir("emb");
    export_embeddings(*joint.model, small_ds().test, small_ds().class_names, dir / "e.tsv");
    std::istringstream in(testsupport::slurp(dir / "e.tsv"));
    std::string line;
    std::getline(in, line);
    std::size_t cols = 1 + static_cast<std::size_t>(std::count(line.begin(), line.end(), '\t'));
    CHECK(cols == 3 + 2 * (32 + 8));
    std::size_t rows = 0;
    while (std::getline(in, line)) {
      std::vector<std::string> f;
      std::stringstream ss(line);
      for (std::string x; std::getline(ss, x, '\t');) f.push_back(x);
      REQUIRE(f.size() == cols);
      for (std::size_t j = 0; j < 40; ++j) REQUIRE(f[3 + j] == f[3 + 40 + j]);
      ++rows;
    }
    CHECK(rows == small_ds().test.size() * 2);
    export_embeddings(*joint.model, small_ds().test, small_ds().class_names, dir / "e2.tsv");
    CHECK(testsupport::slurp(dir / "e.tsv") == testsupport::slurp(dir / "e2.tsv"));
  }

  TEST_CASE("divergence surfaces as TrainingError") {
    auto ctx = small_ctx(nullptr, 3);
    ctx.cfg.lr_max = 1e12;
    ctx.cfg.lr_min = 1e11;
    CHECK_THROWS_AS(train_audio_only(ctx), TrainingError);
  }

  TEST_CASE("dataset problems") {
    Dataset empty;
    empty.class_names = {"a", "b"};
    TrainContext ctx = small_ctx(nullptr, 1);
    ctx.ds = &empty;
    CHECK_THROWS_AS(train_audio_only(ctx), InvalidInput);
    ctx = small_ctx(nullptr, 1);
    ctx.model_cfg.ae.in_bins = 256;
    CHECK_THROWS_AS(train_audio_only(ctx), InvalidConfig);
  }

  TEST_CASE("jsonl log lines") {
    TrainLog log;
    log.add({"joint", 3, 0.01, 0.5, 0.25, 1.0, 0});
    CHECK(log.to_jsonl() ==
          "{\"stage\":\"joint\",\"epoch\":3,\"lr\":0.01,\"train_loss\":0.5,\"val_loss\":0.25,\"val_acc\":1.0,\"wall_ms\":0}\n");
  }
}
