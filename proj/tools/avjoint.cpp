// SPDX-License-Identifier: Apache-2.0
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "avjoint.h"

namespace {

namespace fs = std::filesystem;

struct Failure {
  avj_status status;
};

void check(avj_status s, const std::string& what) {
  if (s == AVJ_OK) return;
  std::cerr << "avjoint: " << what << ": " << avj_last_error() << "\n";
  throw Failure{s};
}

struct ConfigHandle {
  avj_config* p = nullptr;
  ConfigHandle() { check(avj_config_new(&p), "config"); }
  ~ConfigHandle() { avj_config_free(p); }
  ConfigHandle(const ConfigHandle&) = delete;
  ConfigHandle& operator=(const ConfigHandle&) = delete;
};

struct ModelHandle {
  avj_model* p = nullptr;
  ~ModelHandle() { avj_model_free(p); }
};

std::string take(char* s) {
  std::string out = s ? s : "";
  avj_string_free(s);
  return out;
}

// Options shared by every subcommand that reads the global config.
struct Common {
  std::string config;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> workers;
  bool print_config = false;

  void attach(CLI::App* app, bool with_seed = true) {
    app->add_option("--config", config, "Config file (section.key = value lines)")->check(CLI::ExistingFile);
    app->add_option("--set", sets, "Override one config key: --set key=value (repeatable)");
    if (with_seed) app->add_option("--seed", seed, "Root seed (falls back to train.seed, then $AVJOINT_SEED)");
    app->add_option("--workers", workers, "Data-loading worker threads");
    app->add_flag("--print-config", print_config, "Print the resolved config to stderr");
  }

  // Precedence: command-line flag > --set > config file > $AVJOINT_SEED > default.
  void apply(avj_config* cfg) const {
    if (!config.empty()) check(avj_config_load(cfg, config.c_str()), "config");
    for (const auto& kv : sets) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) {
        std::cerr << "avjoint: --set expects key=value, got '" << kv << "'\n";
        throw Failure{AVJ_ERR_INVALID_CONFIG};
      }
      check(avj_config_set(cfg, kv.substr(0, eq).c_str(), kv.substr(eq + 1).c_str()), "--set " + kv);
    }
    if (seed) {
      check(avj_config_set(cfg, "train.seed", std::to_string(*seed).c_str()), "--seed");
    } else if (!avj_config_is_set(cfg, "train.seed")) {
      if (const char* env = std::getenv("AVJOINT_SEED"); env && *env)
        check(avj_config_set(cfg, "train.seed", env), "AVJOINT_SEED");
    }
    if (workers) check(avj_config_set(cfg, "data.workers", std::to_string(*workers).c_str()), "--workers");
  }

  void echo(const avj_config* cfg) const {
    if (!print_config) return;
    char* text = nullptr;
    check(avj_config_dump(cfg, &text), "config");
    std::cerr << take(text);
  }
};

void set_if(avj_config* cfg, const char* key, const std::string& v, const char* flag) {
  if (!v.empty()) check(avj_config_set(cfg, key, v.c_str()), flag);
}

std::uint64_t seed_of(const avj_config* cfg) {
  char* s = nullptr;
  check(avj_config_get(cfg, "train.seed", &s), "config");
  return std::stoull(take(s));
}

void log_to_stderr(const char* line, void*) { std::cerr << line << "\n"; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"avjoint: joint audio-visual scene classification"};
  app.require_subcommand(1);
  app.set_version_flag("--version", avj_version());

  // extract
  Common ex_c;
  std::string ex_wav, ex_manifest, ex_out, ex_features;
  auto* ex = app.add_subcommand("extract", "Compute acoustic feature frames (AVF1) for a WAV file or a manifest");
  ex_c.attach(ex, false);
  auto* ex_wav_opt = ex->add_option("--wav", ex_wav, "Input WAV file")->check(CLI::ExistingFile);
  ex->add_option("--manifest", ex_manifest, "Manifest whose clips are all extracted")
      ->check(CLI::ExistingFile)
      ->excludes(ex_wav_opt);
  ex->add_option("--out", ex_out, "Output .avf1 file (with --wav) or directory (with --manifest)")->required();
  ex->add_option("--features", ex_features, "scalogram|fbank");

  // synth
  Common sy_c;
  std::string sy_spec, sy_out, sy_confusion;
  std::optional<std::size_t> sy_classes, sy_clips;
  std::optional<double> sy_seconds;
  auto* sy = app.add_subcommand("synth", "Generate the synthetic cross-modal dataset");
  sy_c.attach(sy);
  sy->add_option("--spec", sy_spec, "Spec file with synth.* keys")->check(CLI::ExistingFile);
  sy->add_option("--out", sy_out, "Output directory")->required();
  sy->add_option("--classes", sy_classes, "Number of classes");
  sy->add_option("--clips-per-class", sy_clips, "Clips per class");
  sy->add_option("--clip-seconds", sy_seconds, "Clip duration in seconds");
  sy->add_option("--confusion", sy_confusion, "none|audio_only_pairs|visual_only_pairs");

  // split
  Common sp_c;
  std::string sp_manifest, sp_out;
  std::optional<double> sp_val;
  auto* sp = app.add_subcommand("split", "Move a stratified fraction of training clips into the validation split");
  sp_c.attach(sp);
  sp->add_option("--manifest", sp_manifest, "Manifest to split")->required()->check(CLI::ExistingFile);
  sp->add_option("--val", sp_val, "Validation fraction per class (default split.val_fraction)");
  sp->add_option("--out", sp_out, "Output manifest (default: rewrite --manifest)");

  // train
  Common tr_c;
  std::string tr_strategy, tr_manifest, tr_out, tr_features;
  std::optional<std::size_t> tr_epochs, tr_batch;
  auto* tr = app.add_subcommand("train", "Train one system");
  tr_c.attach(tr);
  tr->add_option("--strategy", tr_strategy, "joint|pipeline|audio|video");
  tr->add_option("--manifest", tr_manifest, "Dataset manifest")->required()->check(CLI::ExistingFile);
  tr->add_option("--out", tr_out, "Output directory")->required();
  tr->add_option("--epochs", tr_epochs, "Maximum epochs per stage");
  tr->add_option("--batch-size", tr_batch, "Mini-batch size");
  tr->add_option("--features", tr_features, "scalogram|fbank");

  // ablate
  Common ab_c;
  std::string ab_manifest, ab_out, ab_features;
  std::optional<std::size_t> ab_epochs, ab_batch;
  auto* ab = app.add_subcommand("ablate", "Run the embedding/raw-image x pretrained/trainable-AE grid");
  ab_c.attach(ab);
  ab->add_option("--manifest", ab_manifest, "Dataset manifest")->required()->check(CLI::ExistingFile);
  ab->add_option("--out", ab_out, "Output directory")->required();
  ab->add_option("--epochs", ab_epochs, "Maximum epochs per stage");
  ab->add_option("--batch-size", ab_batch, "Mini-batch size");
  ab->add_option("--features", ab_features, "scalogram|fbank");

  // eval
  Common ev_c;
  std::string ev_ckpt, ev_manifest, ev_split = "test", ev_out;
  auto* ev = app.add_subcommand("eval", "Segment-level evaluation of a checkpoint");
  ev_c.attach(ev, false);
  ev->add_option("--ckpt", ev_ckpt, "Checkpoint (.avw1)")->required()->check(CLI::ExistingFile);
  ev->add_option("--manifest", ev_manifest, "Manifest")->required()->check(CLI::ExistingFile);
  ev->add_option("--split", ev_split, "test|val|train|all")->check(CLI::IsMember({"test", "val", "train", "all"}));
  ev->add_option("--out", ev_out, "Write the full report here (default: stdout)");

  // export-emb
  Common ee_c;
  std::string ee_ckpt, ee_manifest, ee_split = "test", ee_out;
  auto* ee = app.add_subcommand("export-emb", "Dump segment-averaged embeddings as TSV");
  ee_c.attach(ee, false);
  ee->add_option("--ckpt", ee_ckpt, "Checkpoint (.avw1)")->required()->check(CLI::ExistingFile);
  ee->add_option("--manifest", ee_manifest, "Manifest")->required()->check(CLI::ExistingFile);
  ee->add_option("--split", ee_split, "test|val|train|all")->check(CLI::IsMember({"test", "val", "train", "all"}));
  ee->add_option("--out", ee_out, "Output TSV")->required();

  // grad-check
  double gc_eps = 1e-5;
  std::uint64_t gc_seed = 0;
  std::string gc_sabotage;
  auto* gc = app.add_subcommand("grad-check", "Finite-difference gradient check of every layer and the full network");
  gc->add_option("--eps", gc_eps, "Finite-difference step");
  gc->add_option("--seed", gc_seed, "Seed for the random test tensors");
  gc->add_option("--sabotage", gc_sabotage, "Test fixture: 'conv' corrupts the conv weight gradient")
      ->check(CLI::IsMember({"conv"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  avj_set_log_callback(log_to_stderr, nullptr);
  try {
    // Resolve the config for eval/export: explicit file, else the training
    // run's echo next to the checkpoint.
    auto eval_config = [](Common& c, const std::string& ckpt, ConfigHandle& h) {
      if (c.config.empty()) {
        const auto sibling = fs::path(ckpt).parent_path() / "resolved_config.txt";
        if (fs::exists(sibling)) c.config = sibling.string();
      }
      c.apply(h.p);
      c.echo(h.p);
    };

    if (*ex) {
      ConfigHandle h;
      ex_c.apply(h.p);
      set_if(h.p, "features.kind", ex_features, "--features");
      ex_c.echo(h.p);
      if (!ex_wav.empty()) {
        std::size_t n = 0;
        check(avj_extract_file(h.p, ex_wav.c_str(), ex_out.c_str(), &n), "extract");
        std::cout << "wrote " << n << " frames to " << ex_out << "\n";
      } else if (!ex_manifest.empty()) {
        std::size_t n = 0;
        check(avj_extract_manifest(h.p, ex_manifest.c_str(), ex_out.c_str(), &n), "extract");
        std::cout << "wrote features for " << n << " clips to " << ex_out << "\n";
      } else {
        std::cerr << "avjoint extract: one of --wav or --manifest is required\n";
        return 2;
      }
    } else if (*sy) {
      ConfigHandle h;
      if (!sy_spec.empty()) check(avj_config_load(h.p, sy_spec.c_str()), "--spec");
      sy_c.apply(h.p);
      if (sy_classes) check(avj_config_set(h.p, "synth.n_classes", std::to_string(*sy_classes).c_str()), "--classes");
      if (sy_clips)
        check(avj_config_set(h.p, "synth.clips_per_class", std::to_string(*sy_clips).c_str()), "--clips-per-class");
      if (sy_seconds)
        check(avj_config_set(h.p, "synth.clip_seconds", std::to_string(*sy_seconds).c_str()), "--clip-seconds");
      set_if(h.p, "synth.confusion_mode", sy_confusion, "--confusion");
      sy_c.echo(h.p);
      check(avj_synth(h.p, seed_of(h.p), sy_out.c_str()), "synth");
      std::cout << "wrote " << (fs::path(sy_out) / "manifest.tsv").string() << "\n";
    } else if (*sp) {
      ConfigHandle h;
      sp_c.apply(h.p);
      if (sp_val) check(avj_config_set(h.p, "split.val_fraction", std::to_string(*sp_val).c_str()), "--val");
      sp_c.echo(h.p);
      char* v = nullptr;
      check(avj_config_get(h.p, "split.val_fraction", &v), "config");
      const double frac = std::stod(take(v));
      const std::string out = sp_out.empty() ? sp_manifest : sp_out;
      check(avj_split(sp_manifest.c_str(), frac, seed_of(h.p), out.c_str()), "split");
      std::cout << "wrote " << out << "\n";
    } else if (*tr || *ab) {
      const bool is_train = tr->parsed();
      Common& c = is_train ? tr_c : ab_c;
      ConfigHandle h;
      c.apply(h.p);
      if (is_train) set_if(h.p, "train.strategy", tr_strategy, "--strategy");
      const auto& epochs = is_train ? tr_epochs : ab_epochs;
      const auto& batch = is_train ? tr_batch : ab_batch;
      if (epochs) check(avj_config_set(h.p, "train.max_epochs", std::to_string(*epochs).c_str()), "--epochs");
      if (batch) check(avj_config_set(h.p, "train.batch_size", std::to_string(*batch).c_str()), "--batch-size");
      set_if(h.p, "features.kind", is_train ? tr_features : ab_features, "--features");
      c.echo(h.p);
      const std::string& manifest = is_train ? tr_manifest : ab_manifest;
      const std::string& out = is_train ? tr_out : ab_out;
      if (is_train) {
        check(avj_train(h.p, manifest.c_str(), out.c_str(), nullptr), "train");
      } else {
        check(avj_ablate(h.p, manifest.c_str(), out.c_str()), "ablate");
      }
      std::cout << "outputs in " << out << " (resolved config: " << (fs::path(out) / "resolved_config.txt").string()
                << ")\n";
    } else if (*ev) {
      ConfigHandle h;
      eval_config(ev_c, ev_ckpt, h);
      ModelHandle m;
      check(avj_model_load(h.p, ev_ckpt.c_str(), &m.p), "eval");
      avj_report* r = nullptr;
      check(avj_evaluate(m.p, ev_manifest.c_str(), ev_split.c_str(), &r), "eval");
      std::unique_ptr<avj_report, void (*)(avj_report*)> guard(r, avj_report_free);
      if (!ev_out.empty()) check(avj_report_write(r, ev_out.c_str()), "eval");
      std::printf("avg_logloss\t%.6f\navg_accuracy\t%.6f\nn_segments\t%zu\n", avj_report_avg_logloss(r),
                  avj_report_avg_accuracy(r), avj_report_segments(r));
    } else if (*ee) {
      ConfigHandle h;
      eval_config(ee_c, ee_ckpt, h);
      ModelHandle m;
      check(avj_model_load(h.p, ee_ckpt.c_str(), &m.p), "export-emb");
      check(avj_export_embeddings(m.p, ee_manifest.c_str(), ee_split.c_str(), ee_out.c_str()), "export-emb");
      std::cout << "wrote " << ee_out << "\n";
    } else if (*gc) {
      char* report = nullptr;
      const avj_status s = avj_grad_check(gc_eps, gc_seed, gc_sabotage.empty() ? nullptr : gc_sabotage.c_str(), &report);
      std::cout << take(report);
      if (s != AVJ_OK) {
        std::cerr << "avjoint: grad-check: " << avj_last_error() << "\n";
        return avj_exit_code(s);
      }
    }
  } catch (const Failure& f) {
    return avj_exit_code(f.status);
  }
  return 0;
}
