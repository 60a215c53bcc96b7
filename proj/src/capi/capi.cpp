// SPDX-License-Identifier: Apache-2.0
#include "avjoint.h"

#include <cstdlib>
#include <cstring>
#include <mutex>
#include <sstream>

#include "avjoint/checks.hpp"
#include "avjoint/config.hpp"
#include "avjoint/train.hpp"
#include "binio.hpp"

struct avj_config {
  avjoint::RunConfig cfg;
};

struct avj_model {
  avjoint::RunConfig cfg;
  std::unique_ptr<avjoint::model::AVModel<float>> model;
};

struct avj_report {
  avjoint::train::EvalReport report;
};

namespace {

using namespace avjoint;

thread_local std::string g_last_error;
std::mutex g_log_mu;
avj_log_fn g_log_fn = nullptr;
void* g_log_user = nullptr;

void emit(const std::string& line) {
  std::lock_guard<std::mutex> lock(g_log_mu);
  if (g_log_fn) g_log_fn(line.c_str(), g_log_user);
}

avj_status status_of(ErrorKind k) {
  switch (k) {
    case ErrorKind::InvalidInput: return AVJ_ERR_INVALID_INPUT;
    case ErrorKind::InvalidConfig: return AVJ_ERR_INVALID_CONFIG;
    case ErrorKind::InvalidState: return AVJ_ERR_INVALID_STATE;
    case ErrorKind::Numerical: return AVJ_ERR_NUMERICAL;
    case ErrorKind::Format: return AVJ_ERR_FORMAT;
    case ErrorKind::Io: return AVJ_ERR_IO;
    case ErrorKind::Training: return AVJ_ERR_TRAINING;
  }
  return AVJ_ERR_INTERNAL;
}

template <typename F>
avj_status guarded(F&& f) {
  try {
    g_last_error.clear();
    return f();
  } catch (const Error& e) {
    g_last_error = e.what();
    return status_of(e.kind());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return AVJ_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return AVJ_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown error";
    return AVJ_ERR_INTERNAL;
  }
}

void require(const void* p, const char* what) {
  if (!p) throw InvalidInput(std::string(what) + " must not be NULL");
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.data(), s.size() + 1);
  return out;
}

RunConfig resolved(const RunConfig& in) {
  RunConfig c = in;
  c.finalize();
  c.validate();
  return c;
}

dsp::FeatureExtractor extractor(const RunConfig& c) { return dsp::FeatureExtractor(c.features); }

std::vector<data::Clip> clips_for(const RunConfig& c, const data::Manifest& m, const std::string& split) {
  const auto fx = extractor(c);
  if (split == "all") {
    std::vector<data::Clip> out;
    for (auto s : {data::Split::Train, data::Split::Val, data::Split::Test}) {
      auto part = data::load_clips(m, s, fx, c.data);
      for (auto& clip : part) out.push_back(std::move(clip));
    }
    return out;
  }
  return data::load_clips(m, data::parse_split(split), fx, c.data);
}

train::Dataset load_dataset(const RunConfig& c, const std::string& manifest_path) {
  const auto m = data::read_manifest(manifest_path);
  return train::load_dataset(m, extractor(c), c.data);
}

train::TrainContext context(const RunConfig& c, const train::Dataset& ds, train::TrainLog& log) {
  log.on_epoch = [](const train::EpochRecord& r) {
    train::TrainLog one;
    one.records.push_back(r);
    std::string line = one.to_jsonl();
    if (!line.empty() && line.back() == '\n') line.pop_back();
    emit(line);
  };
  train::TrainContext ctx;
  ctx.ds = &ds;
  ctx.model_cfg = c.model;
  ctx.cfg = c.train;
  ctx.log = &log;
  return ctx;
}

}  // namespace

extern "C" {

const char* avj_version(void) { return "1.0.0"; }

const char* avj_last_error(void) { return g_last_error.c_str(); }

const char* avj_status_name(avj_status s) {
  switch (s) {
    case AVJ_OK: return "ok";
    case AVJ_ERR_INVALID_INPUT: return "invalid input";
    case AVJ_ERR_INVALID_CONFIG: return "invalid config";
    case AVJ_ERR_INVALID_STATE: return "invalid state";
    case AVJ_ERR_NUMERICAL: return "numerical error";
    case AVJ_ERR_FORMAT: return "format error";
    case AVJ_ERR_IO: return "i/o error";
    case AVJ_ERR_TRAINING: return "training error";
    case AVJ_ERR_CHECK_FAILED: return "check failed";
    case AVJ_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

int avj_exit_code(avj_status s) {
  switch (s) {
    case AVJ_OK: return 0;
    case AVJ_ERR_CHECK_FAILED:
    case AVJ_ERR_INVALID_STATE:
    case AVJ_ERR_INTERNAL: return 1;
    case AVJ_ERR_INVALID_INPUT:
    case AVJ_ERR_INVALID_CONFIG: return 2;
    case AVJ_ERR_FORMAT:
    case AVJ_ERR_IO: return 3;
    case AVJ_ERR_NUMERICAL:
    case AVJ_ERR_TRAINING: return 4;
  }
  return 1;
}

void avj_string_free(char* s) { std::free(s); }

void avj_set_log_callback(avj_log_fn fn, void* user) {
  std::lock_guard<std::mutex> lock(g_log_mu);
  g_log_fn = fn;
  g_log_user = user;
}

avj_status avj_config_new(avj_config** out) {
  return guarded([&] {
    require(out, "out");
    *out = new avj_config();
    return AVJ_OK;
  });
}

void avj_config_free(avj_config* cfg) { delete cfg; }

avj_status avj_config_load(avj_config* cfg, const char* path) {
  return guarded([&] {
    require(cfg, "config");
    require(path, "path");
    apply_config_file(cfg->cfg, path);
    return AVJ_OK;
  });
}

avj_status avj_config_set(avj_config* cfg, const char* key, const char* value) {
  return guarded([&] {
    require(cfg, "config");
    require(key, "key");
    require(value, "value");
    config_set(cfg->cfg, key, value);
    return AVJ_OK;
  });
}

int avj_config_is_set(const avj_config* cfg, const char* key) {
  return cfg && key && cfg->cfg.explicit_keys.count(key) ? 1 : 0;
}

avj_status avj_config_get(const avj_config* cfg, const char* key, char** out) {
  return guarded([&] {
    require(cfg, "config");
    require(key, "key");
    require(out, "out");
    *out = dup_string(config_get(cfg->cfg, key));
    return AVJ_OK;
  });
}

avj_status avj_config_dump(const avj_config* cfg, char** out) {
  return guarded([&] {
    require(cfg, "config");
    require(out, "out");
    *out = dup_string(dump_config(resolved(cfg->cfg)));
    return AVJ_OK;
  });
}

avj_status avj_extract_file(const avj_config* cfg, const char* wav_path, const char* avf1_path, size_t* n_frames) {
  return guarded([&] {
    require(cfg, "config");
    require(wav_path, "wav path");
    require(avf1_path, "output path");
    const RunConfig c = resolved(cfg->cfg);
    const std::filesystem::path wav(wav_path);
    const auto frames = extractor(c)(dsp::read_wav(wav), wav.stem().string());
    dsp::write_avf1(avf1_path, frames);
    if (n_frames) *n_frames = frames.size();
    return AVJ_OK;
  });
}

avj_status avj_extract_manifest(const avj_config* cfg, const char* manifest_path, const char* out_dir,
                                size_t* n_clips) {
  return guarded([&] {
    require(cfg, "config");
    require(manifest_path, "manifest path");
    require(out_dir, "output directory");
    const RunConfig c = resolved(cfg->cfg);
    const auto m = data::read_manifest(manifest_path);
    const auto fx = extractor(c);
    std::size_t n = 0;
    for (const auto& e : m.entries) {
      const auto frames = fx(dsp::read_wav(m.resolve(e.audio_path)), e.clip_id);
      dsp::write_avf1(std::filesystem::path(out_dir) / (e.clip_id + ".avf1"), frames);
      ++n;
    }
    if (n_clips) *n_clips = n;
    return AVJ_OK;
  });
}

avj_status avj_synth(const avj_config* cfg, uint64_t seed, const char* out_dir) {
  return guarded([&] {
    require(cfg, "config");
    require(out_dir, "output directory");
    const RunConfig c = resolved(cfg->cfg);
    data::generate_synthetic(c.synth, seed, out_dir);
    return AVJ_OK;
  });
}

avj_status avj_split(const char* manifest_in, double val_fraction, uint64_t seed, const char* manifest_out) {
  return guarded([&] {
    require(manifest_in, "input manifest");
    require(manifest_out, "output manifest");
    if (!(val_fraction > 0.0 && val_fraction < 1.0)) throw InvalidConfig("validation fraction must lie in (0, 1)");
    const auto m = data::read_manifest(manifest_in);
    auto out = data::split_train_val(m, val_fraction, seed);
    // Paths stay valid relative to the new manifest's directory.
    const auto in_dir = std::filesystem::absolute(m.base_dir);
    const auto out_dir = std::filesystem::absolute(std::filesystem::path(manifest_out)).parent_path();
    for (auto& e : out.entries) {
      e.audio_path = std::filesystem::relative(in_dir / e.audio_path, out_dir);
      e.frames_dir = std::filesystem::relative(in_dir / e.frames_dir, out_dir);
    }
    data::write_manifest(manifest_out, out);
    return AVJ_OK;
  });
}

avj_status avj_train(const avj_config* cfg, const char* manifest_path, const char* out_dir, avj_model** out) {
  return guarded([&] {
    require(cfg, "config");
    require(manifest_path, "manifest path");
    require(out_dir, "output directory");
    RunConfig c = resolved(cfg->cfg);
    const std::filesystem::path dir(out_dir);
    const auto ds = load_dataset(c, manifest_path);
    train::TrainLog log;
    auto ctx = context(c, ds, log);
    auto res = train::train(ctx);

    c.model = res.model->config();
    binio::write_file(dir / "resolved_config.txt", dump_config(c));
    res.model->save(dir / "model.avw1");
    binio::write_file(dir / "train_log.jsonl", log.to_jsonl());
    if (!ds.test.empty()) {
      const auto rep = train::evaluate(*res.model, ds.test, ds.class_names);
      train::write_report(dir / "eval_report.txt", rep);
      std::ostringstream os;
      os << "test avg_logloss=" << rep.avg_logloss << " avg_accuracy=" << rep.avg_accuracy
         << " segments=" << rep.n_segments;
      emit(os.str());
    }
    if (out) *out = new avj_model{c, std::move(res.model)};
    return AVJ_OK;
  });
}

avj_status avj_ablate(const avj_config* cfg, const char* manifest_path, const char* out_dir) {
  return guarded([&] {
    require(cfg, "config");
    require(manifest_path, "manifest path");
    require(out_dir, "output directory");
    RunConfig c = resolved(cfg->cfg);
    const std::filesystem::path dir(out_dir);
    const auto ds = load_dataset(c, manifest_path);
    if (ds.test.empty()) throw InvalidInput("ablation needs test clips in the manifest");
    train::TrainLog log;
    auto ctx = context(c, ds, log);
    const auto cells = train::run_ablation(ctx);
    binio::write_file(dir / "resolved_config.txt", dump_config(c));
    binio::write_file(dir / "train_log.jsonl", log.to_jsonl());
    std::ostringstream tsv;
    tsv.precision(17);
    tsv << "cell\tinput_kind\tae_mode\tavg_logloss\tavg_accuracy\tbest_val_loss\tbest_epoch\n";
    for (const auto& cell : cells) {
      cell.result.model->save(dir / ("cell_" + cell.label + ".avw1"));
      train::write_report(dir / ("cell_" + cell.label + "_report.txt"), cell.report);
      tsv << cell.label << "\t" << train::to_string(cell.input_kind) << "\t" << train::to_string(cell.ae_mode) << "\t"
          << cell.report.avg_logloss << "\t" << cell.report.avg_accuracy << "\t" << cell.result.best_val_loss << "\t"
          << cell.result.best_epoch << "\n";
    }
    binio::write_file(dir / "ablation.tsv", tsv.str());
    emit(tsv.str());
    return AVJ_OK;
  });
}

avj_status avj_model_load(const avj_config* cfg, const char* ckpt_path, avj_model** out) {
  return guarded([&] {
    require(cfg, "config");
    require(ckpt_path, "checkpoint path");
    require(out, "out");
    const RunConfig c = resolved(cfg->cfg);
    auto m = std::make_unique<model::AVModel<float>>(c.model);
    m->load(ckpt_path);
    *out = new avj_model{c, std::move(m)};
    return AVJ_OK;
  });
}

avj_status avj_model_save(const avj_model* model, const char* ckpt_path) {
  return guarded([&] {
    require(model, "model");
    require(ckpt_path, "checkpoint path");
    model->model->save(ckpt_path);
    return AVJ_OK;
  });
}

void avj_model_free(avj_model* model) { delete model; }

avj_status avj_evaluate(avj_model* model, const char* manifest_path, const char* split, avj_report** out) {
  return guarded([&] {
    require(model, "model");
    require(manifest_path, "manifest path");
    require(out, "out");
    const auto m = data::read_manifest(manifest_path);
    const auto clips = clips_for(model->cfg, m, split ? split : "test");
    if (clips.empty()) throw InvalidInput("manifest has no clips in split '" + std::string(split ? split : "test") + "'");
    *out = new avj_report{train::evaluate(*model->model, clips, m.class_names)};
    return AVJ_OK;
  });
}

avj_status avj_export_embeddings(avj_model* model, const char* manifest_path, const char* split, const char* out_path) {
  return guarded([&] {
    require(model, "model");
    require(manifest_path, "manifest path");
    require(out_path, "output path");
    const auto m = data::read_manifest(manifest_path);
    const auto clips = clips_for(model->cfg, m, split ? split : "test");
    train::export_embeddings(*model->model, clips, m.class_names, out_path);
    return AVJ_OK;
  });
}

double avj_report_avg_logloss(const avj_report* r) { return r ? r->report.avg_logloss : 0.0; }
double avj_report_avg_accuracy(const avj_report* r) { return r ? r->report.avg_accuracy : 0.0; }
size_t avj_report_segments(const avj_report* r) { return r ? r->report.n_segments : 0; }

avj_status avj_report_write(const avj_report* r, const char* path) {
  return guarded([&] {
    require(r, "report");
    require(path, "path");
    train::write_report(std::filesystem::path(path), r->report);
    return AVJ_OK;
  });
}

avj_status avj_report_text(const avj_report* r, char** out) {
  return guarded([&] {
    require(r, "report");
    require(out, "out");
    std::ostringstream os;
    train::write_report(os, r->report);
    *out = dup_string(os.str());
    return AVJ_OK;
  });
}

void avj_report_free(avj_report* r) { delete r; }

avj_status avj_grad_check(double eps, uint64_t seed, const char* sabotage, char** report) {
  return guarded([&] {
    checks::GradCheckOptions o;
    o.eps = eps;
    o.seed = seed;
    o.sabotage = sabotage ? sabotage : "";
    if (!o.sabotage.empty() && o.sabotage != "conv") throw InvalidConfig("unknown sabotage fixture '" + o.sabotage + "'");
    const auto rep = checks::run_grad_check(o);
    std::ostringstream os;
    char line[160];
    for (const auto& e : rep.entries) {
      std::snprintf(line, sizeof line, "%-24s max_rel_err=%.3e coords=%zu %s\n", e.name.c_str(), e.max_rel_error,
                    e.coords, e.pass ? "ok" : "FAIL");
      os << line;
    }
    std::snprintf(line, sizeof line, "overall max_rel_err=%.3e (eps=%g, tolerance=%g) %s\n", rep.max_rel_error, o.eps,
                  o.tolerance, rep.pass ? "PASS" : "FAIL");
    os << line;
    if (report) *report = dup_string(os.str());
    if (!rep.pass) {
      g_last_error = "gradient check exceeded the tolerance";
      return AVJ_ERR_CHECK_FAILED;
    }
    return AVJ_OK;
  });
}

}  // extern "C"
