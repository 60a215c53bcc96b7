// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "avjoint/data.hpp"
#include "avjoint/error.hpp"

namespace avjoint::data {
namespace {

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream ss(line);
  while (std::getline(ss, cur, '\t')) out.push_back(cur);
  if (!line.empty() && line.back() == '\t') out.emplace_back();
  return out;
}

constexpr const char* kColumns[] = {"clip_id", "audio_path", "frames_dir", "label", "split"};

}  // namespace

Split parse_split(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "val") return Split::Val;
  if (s == "test") return Split::Test;
  throw InvalidInput("unknown split '" + s + "' (expected train|val|test)");
}

const char* to_string(Split s) noexcept {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "?";
}

std::size_t Manifest::count(Split s) const {
  return static_cast<std::size_t>(
      std::count_if(entries.begin(), entries.end(), [s](const auto& e) { return e.split == s; }));
}

std::filesystem::path Manifest::resolve(const std::filesystem::path& p) const {
  return p.is_absolute() || base_dir.empty() ? p : base_dir / p;
}

void Manifest::validate() const {
  if (class_names.empty()) throw InvalidInput("manifest declares no classes");
  std::set<std::string> ids;
  for (const auto& e : entries) {
    if (!ids.insert(e.clip_id).second) throw InvalidInput("duplicate clip_id '" + e.clip_id + "'");
    if (e.label < 0 || static_cast<std::size_t>(e.label) >= class_names.size())
      throw InvalidInput("clip '" + e.clip_id + "' has an undeclared label");
  }
}

Manifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  Manifest m;
  m.base_dir = path.parent_path();
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto cols = split_tabs(line);
    const std::string where = path.string() + ":" + std::to_string(line_no);
    if (cols[0] == "#classes") {
      m.class_names.assign(cols.begin() + 1, cols.end());
      continue;
    }
    if (!have_header) {
      if (cols.size() != 5 || !std::equal(cols.begin(), cols.end(), std::begin(kColumns)))
        throw InvalidInput(where + ": expected header 'clip_id\\taudio_path\\tframes_dir\\tlabel\\tsplit'");
      have_header = true;
      continue;
    }
    if (cols.size() != 5) throw InvalidInput(where + ": expected 5 tab-separated columns");
    const auto it = std::find(m.class_names.begin(), m.class_names.end(), cols[3]);
    if (it == m.class_names.end()) throw InvalidInput(where + ": label '" + cols[3] + "' is not a declared class");
    ManifestEntry e;
    e.clip_id = cols[0];
    e.audio_path = cols[1];
    e.frames_dir = cols[2];
    e.label = static_cast<int>(it - m.class_names.begin());
    try {
      e.split = parse_split(cols[4]);
    } catch (const InvalidInput& err) {
      throw InvalidInput(where + ": " + err.what());
    }
    m.entries.push_back(std::move(e));
  }
  if (!have_header) throw InvalidInput(path.string() + ": missing header line");
  m.validate();
  return m;
}

void write_manifest(const std::filesystem::path& path, const Manifest& m) {
  m.validate();
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write manifest " + path.string());
  out << "#classes";
  for (const auto& c : m.class_names) out << '\t' << c;
  out << "\nclip_id\taudio_path\tframes_dir\tlabel\tsplit\n";
  for (const auto& e : m.entries)
    out << e.clip_id << '\t' << e.audio_path.generic_string() << '\t' << e.frames_dir.generic_string()
        << '\t' << m.class_names[static_cast<std::size_t>(e.label)] << '\t' << to_string(e.split) << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

Manifest split_train_val(const Manifest& m, double val_fraction, std::uint64_t seed) {
  if (!(val_fraction > 0.0 && val_fraction < 1.0))
    throw InvalidInput("val_fraction must lie strictly between 0 and 1");
  Manifest out = m;
  for (std::size_t c = 0; c < m.num_classes(); ++c) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < out.entries.size(); ++i)
      if (out.entries[i].label == static_cast<int>(c) && out.entries[i].split != Split::Test) {
        out.entries[i].split = Split::Train;
        idx.push_back(i);
      }
    if (idx.empty()) continue;
    if (idx.size() < 2)
      throw InvalidInput("class '" + m.class_names[c] + "' has fewer than 2 clips to split");
    Rng rng = make_rng(seed, SeedPurpose::Split, c);
    std::shuffle(idx.begin(), idx.end(), rng);
    const auto want = static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(idx.size())));
    const std::size_t n_val = std::clamp<std::size_t>(want, 1, idx.size() - 1);
    for (std::size_t k = 0; k < n_val; ++k) out.entries[idx[k]].split = Split::Val;
  }
  return out;
}

BatchIterator::BatchIterator(std::size_t n, std::size_t batch_size, std::uint64_t seed)
    : order_(n), batch_size_(batch_size) {
  if (n == 0) throw InvalidInput("batches: empty dataset");
  if (batch_size == 0) throw InvalidInput("batches: batch_size must be >= 1");
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  Rng rng(seed);
  std::shuffle(order_.begin(), order_.end(), rng);
}

bool BatchIterator::next(std::vector<std::size_t>& batch) {
  if (pos_ >= order_.size()) return false;
  const std::size_t end = std::min(order_.size(), pos_ + batch_size_);
  batch.assign(order_.begin() + static_cast<std::ptrdiff_t>(pos_), order_.begin() + static_cast<std::ptrdiff_t>(end));
  pos_ = end;
  return true;
}

std::size_t BatchIterator::num_batches() const noexcept {
  return (order_.size() + batch_size_ - 1) / batch_size_;
}

std::vector<std::vector<std::size_t>> batches(std::size_t n, std::size_t batch_size,
                                              std::uint64_t shuffle_seed) {
  BatchIterator it(n, batch_size, shuffle_seed);
  std::vector<std::vector<std::size_t>> out;
  std::vector<std::size_t> b;
  while (it.next(b)) out.push_back(b);
  return out;
}

}  // namespace avjoint::data
