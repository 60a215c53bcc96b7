// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

#include "binio.hpp"
#include "train/frames.hpp"

namespace avjoint::train {

namespace {

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string numf(float v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", static_cast<double>(v));
  return buf;
}

}  // namespace

std::size_t argmax(const std::vector<double>& p) noexcept {
  std::size_t best = 0;
  for (std::size_t j = 1; j < p.size(); ++j)
    if (p[j] > p[best]) best = j;
  return best;
}

std::vector<double> mean_rows(const std::vector<const std::vector<double>*>& rows) {
  if (rows.empty()) return {};
  const auto& first = *rows.front();
  std::vector<double> acc(first.size(), 0.0);
  for (const auto* r : rows) {
    if (r->size() != first.size()) throw InvalidInput("rows of unequal width");
    for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += (*r)[j] - first[j];
  }
  std::vector<double> out(first);
  const double n = static_cast<double>(rows.size());
  for (std::size_t j = 0; j < out.size(); ++j) out[j] += acc[j] / n;
  return out;
}

EvalReport evaluate_frames(const std::vector<FramePrediction>& frames, const std::vector<std::string>& class_names) {
  const std::size_t k = class_names.size();
  if (k < 2) throw InvalidInput("evaluation needs at least 2 classes");
  EvalReport r;
  r.class_names = class_names;

  // Segments keep first-appearance order of (clip, second).
  std::map<std::pair<std::string, std::int64_t>, std::size_t> seg_of;
  std::vector<std::vector<const std::vector<double>*>> members;
  for (const auto& f : frames) {
    if (f.probs.size() != k) throw InvalidInput("probability row width does not match the class count");
    if (f.label < 0 || static_cast<std::size_t>(f.label) >= k) throw InvalidInput("label out of range");
    if (!(f.center_time >= 0.0)) throw InvalidInput("frame center time must be non-negative");
    const auto sec = static_cast<std::int64_t>(std::floor(f.center_time));
    auto [it, inserted] = seg_of.emplace(std::make_pair(f.clip_id, sec), r.segments.size());
    if (inserted) {
      SegmentResult s;
      s.clip_id = f.clip_id;
      s.segment = static_cast<std::size_t>(sec);
      s.label = f.label;
      r.segments.push_back(std::move(s));
      members.emplace_back();
    } else if (r.segments[it->second].label != f.label) {
      throw InvalidInput("clip '" + f.clip_id + "' carries more than one label");
    }
    members[it->second].push_back(&f.probs);
  }

  std::vector<double> ll_sum(k, 0.0), acc_sum(k, 0.0);
  r.per_class_segments.assign(k, 0);
  for (std::size_t s = 0; s < r.segments.size(); ++s) {
    auto& seg = r.segments[s];
    if (members[s].empty()) {
      warn("segment " + std::to_string(seg.segment) + " of '" + seg.clip_id + "' has no frames; skipped");
      continue;
    }
    seg.n_frames = members[s].size();
    seg.probs = mean_rows(members[s]);
    double total = 0.0;
    for (double v : seg.probs) total += v;
    if (std::abs(total - 1.0) > 1e-9)
      for (auto& v : seg.probs) v /= total;
    const auto c = static_cast<std::size_t>(seg.label);
    ll_sum[c] += -std::log(std::max(seg.probs[c], 1e-15));
    acc_sum[c] += argmax(seg.probs) == c ? 1.0 : 0.0;
    ++r.per_class_segments[c];
    ++r.n_segments;
  }

  r.per_class_logloss.assign(k, 0.0);
  r.per_class_accuracy.assign(k, 0.0);
  std::size_t present = 0;
  for (std::size_t c = 0; c < k; ++c) {
    if (r.per_class_segments[c] == 0) {
      r.per_class_logloss[c] = NAN;
      r.per_class_accuracy[c] = NAN;
      continue;
    }
    const double n = static_cast<double>(r.per_class_segments[c]);
    r.per_class_logloss[c] = ll_sum[c] / n;
    r.per_class_accuracy[c] = acc_sum[c] / n;
    r.avg_logloss += r.per_class_logloss[c];
    r.avg_accuracy += r.per_class_accuracy[c];
    ++present;
  }
  if (present == 0) throw InvalidInput("no segments to evaluate");
  if (present < k) warn(std::to_string(k - present) + " class(es) have no evaluation segments; averaging over the rest");
  r.avg_logloss /= static_cast<double>(present);
  r.avg_accuracy /= static_cast<double>(present);
  return r;
}

namespace {

model::ModelInput<float> eval_input(AVModel<float>& m, const std::vector<detail::FrameRef>& refs,
                                    const std::vector<std::size_t>& b) {
  model::ModelInput<float> in;
  if (m.config().has_ae()) in.audio = detail::gather_audio(refs, b);
  if (m.config().has_ve()) in.visual = detail::gather_images(refs, b);
  return in;
}

}  // namespace

std::vector<FramePrediction> predict_frames(AVModel<float>& model, const std::vector<data::Clip>& clips,
                                            std::size_t batch_size) {
  const auto refs = detail::frame_refs(clips);
  std::vector<FramePrediction> out;
  out.reserve(refs.size());
  Rng unused(0);
  for (const auto& b : detail::sequential_batches(refs.size(), batch_size)) {
    const auto logits = model.forward(eval_input(model, refs, b), nn::Mode::Eval, unused);
    const std::size_t k = logits.dim(1);
    for (std::size_t r = 0; r < b.size(); ++r) {
      const auto& ref = refs[b[r]];
      out.push_back({ref.clip->clip_id, ref.clip->label, ref.features().frame_center_time,
                     detail::softmax_row(logits.data() + r * k, k)});
    }
  }
  return out;
}

EvalReport evaluate(AVModel<float>& model, const std::vector<data::Clip>& clips,
                    const std::vector<std::string>& class_names, std::size_t batch_size) {
  if (class_names.size() != model.config().sc.n_classes)
    throw InvalidInput("manifest has " + std::to_string(class_names.size()) + " classes but the model predicts " +
                       std::to_string(model.config().sc.n_classes));
  return evaluate_frames(predict_frames(model, clips, batch_size), class_names);
}

void write_report(std::ostream& os, const EvalReport& r) {
  os << "# avjoint evaluation report\n";
  os << "avg_logloss\t" << num(r.avg_logloss) << "\n";
  os << "avg_accuracy\t" << num(r.avg_accuracy) << "\n";
  os << "n_segments\t" << r.n_segments << "\n";
  os << "n_classes\t" << r.class_names.size() << "\n\n";
  os << "[per_class]\nclass\tname\tsegments\tlogloss\taccuracy\n";
  for (std::size_t c = 0; c < r.class_names.size(); ++c)
    os << c << "\t" << r.class_names[c] << "\t" << r.per_class_segments[c] << "\t" << num(r.per_class_logloss[c])
       << "\t" << num(r.per_class_accuracy[c]) << "\n";
  os << "\n[segments]\nclip_id\tsegment\tlabel\tframes";
  for (std::size_t c = 0; c < r.class_names.size(); ++c) os << "\tp_" << c;
  os << "\n";
  for (const auto& s : r.segments) {
    if (s.n_frames == 0) continue;
    os << s.clip_id << "\t" << s.segment << "\t" << s.label << "\t" << s.n_frames;
    for (double p : s.probs) os << "\t" << num(p);
    os << "\n";
  }
}

void write_report(const std::filesystem::path& path, const EvalReport& r) {
  std::ostringstream os;
  write_report(os, r);
  binio::write_file(path, os.str());
}

void export_embeddings(AVModel<float>& model, const std::vector<data::Clip>& clips,
                       const std::vector<std::string>& class_names, const std::filesystem::path& path) {
  const auto& mc = model.config();
  const std::size_t wa = mc.has_ae() ? mc.ae.embed_dim() : 0;
  const std::size_t wv = mc.has_ve() ? mc.ve.embed_dim() : 0;
  const auto refs = detail::frame_refs(clips);

  std::vector<std::vector<double>> rows(refs.size());
  Rng unused(0);
  for (const auto& b : detail::sequential_batches(refs.size(), 256)) {
    Tensor<float> a, v;
    if (wa) a = model.encode_audio(detail::gather_audio(refs, b), nn::Mode::Eval, unused);
    if (wv) v = model.encode_visual(detail::gather_images(refs, b));
    for (std::size_t r = 0; r < b.size(); ++r) {
      auto& row = rows[b[r]];
      row.reserve(wa + wv);
      for (std::size_t j = 0; j < wa; ++j) row.push_back(a[r * wa + j]);
      for (std::size_t j = 0; j < wv; ++j) row.push_back(v[r * wv + j]);
    }
  }

  std::map<std::pair<std::string, std::int64_t>, std::size_t> seg_of;
  struct Seg {
    const data::Clip* clip;
    std::int64_t second;
    std::vector<const std::vector<double>*> members;
  };
  std::vector<Seg> segs;
  for (std::size_t i = 0; i < refs.size(); ++i) {
    const auto sec = static_cast<std::int64_t>(std::floor(refs[i].features().frame_center_time));
    auto [it, inserted] = seg_of.emplace(std::make_pair(refs[i].clip->clip_id, sec), segs.size());
    if (inserted) segs.push_back({refs[i].clip, sec, {}});
    segs[it->second].members.push_back(&rows[i]);
  }

  std::ostringstream os;
  os << "clip_id\tsegment\tlabel";
  for (std::size_t j = 0; j < wa + wv; ++j) os << "\te_" << j;
  for (std::size_t j = 0; j < wa; ++j) os << "\tae_" << j;
  for (std::size_t j = 0; j < wv; ++j) os << "\tve_" << j;
  os << "\n";
  for (const auto& s : segs) {
    const auto e = mean_rows(s.members);
    const auto label = static_cast<std::size_t>(s.clip->label);
    os << s.clip->clip_id << "\t" << s.second << "\t" << (label < class_names.size() ? class_names[label] : std::to_string(label));
    for (double x : e) os << "\t" << numf(static_cast<float>(x));
    for (std::size_t j = 0; j < wa + wv; ++j) os << "\t" << numf(static_cast<float>(e[j]));
    os << "\n";
  }
  try {
    binio::write_file(path, os.str());
  } catch (const IoError& err) {
    throw IoError(std::string("cannot write embedding dump: ") + err.what());
  }
}

}  // namespace avjoint::train
