#include "common.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <thread>

#include "cogest/core/hash.hpp"
#include "cogest/nn/checkpoint.hpp"

namespace cogest::cli {

void parallel_for(int n, int workers, const std::function<void(int)>& fn) {
  workers = std::max(1, std::min(workers, n));
  if (workers == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr first;
  std::mutex m;
  auto run = [&] {
    for (int i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(m);
        if (!first) first = std::current_exception();
        next = n;
      }
    }
  };
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) pool.emplace_back(run);
  for (auto& t : pool) t.join();
  if (first) std::rethrow_exception(first);
}

std::string corpus_hash(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const char* sub : {"clips", "audio"}) {
    if (!fs::is_directory(dir / sub)) continue;
    for (const auto& e : fs::directory_iterator(dir / sub)) files.push_back(e.path());
  }
  if (fs::exists(dir / "manifest.json")) files.push_back(dir / "manifest.json");
  std::sort(files.begin(), files.end());
  Fnv1a h;
  for (const auto& f : files) {
    h.update(fs::relative(f, dir).generic_string());
    h.update(hash_file(f));
  }
  return h.hex();
}

Phase parse_phase(const std::string& s) {
  if (s == "align") return Phase::align;
  if (s == "emocls") return Phase::emocls;
  if (s == "gdm") return Phase::gdm;
  if (s == "extractor" || s == "metrics") return Phase::extractor;
  throw UsageError("unknown training phase '" + s + "' (align, emocls, gdm, extractor)");
}

std::string to_string(Phase p) {
  switch (p) {
    case Phase::align: return "align";
    case Phase::emocls: return "emocls";
    case Phase::gdm: return "gdm";
    case Phase::extractor: return "extractor";
  }
  return "?";
}

namespace detail {

nlohmann::json read_json(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw DataError("cannot read " + p.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(p.string() + ": " + e.what());
  }
}

void write_json(const fs::path& p, const nlohmann::json& j) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p);
  if (!out) throw DataError("cannot write " + p.string());
  out << j.dump(1) << "\n";
}

fs::path require_file(const fs::path& p, const std::string& what) {
  if (!fs::exists(p)) throw DependencyError(what + " (missing " + p.string() + ")");
  return p;
}

data::Standardizer load_stats(const fs::path& p) { return data::Standardizer::from_json(read_json(p)); }

text::Vocabulary load_vocab(const fs::path& p) { return text::Vocabulary::from_json(read_json(p)); }

const audio::LogMelProvider& mel() {
  static const audio::LogMelProvider provider;
  return provider;
}

Corpus load_corpus(const fs::path& dir, int frames, const std::optional<data::Standardizer>& stats,
                   const std::optional<text::Vocabulary>& vocab) {
  if (!fs::is_directory(dir)) throw DependencyError("corpus directory " + dir.string() + " does not exist; run prepare first");
  Corpus c{vocab ? *vocab : load_vocab(require_file(dir / kVocabFile, "the corpus vocabulary is required; run prepare first")),
           stats ? *stats : load_stats(require_file(dir / kStatsFile, "the corpus statistics are required; run prepare first")), nullptr};
  c.items = std::make_unique<data::ClipDirExampleSet>(dir, c.vocab, mel(), c.stats, frames);
  return c;
}

std::map<std::string, std::string> checkpoint_hashes(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const char* name : {kAlignCkpt, kNoisyClassifierCkpt, kCleanClassifierCkpt, kHandsClassifierCkpt, kGdmCkpt, kExtractorCkpt}) {
    if (fs::exists(dir / name)) out[name] = nn::Checkpoint::load(dir / name).content_hash();
  }
  return out;
}

LossLog::LossLog(const fs::path& p, bool append) {
  fs::create_directories(p.parent_path());
  const bool fresh = !append || !fs::exists(p);
  out_ = std::make_unique<std::ofstream>(p, fresh ? std::ios::trunc : std::ios::app);
  if (!*out_) throw DataError("cannot write " + p.string());
  if (fresh) *out_ << "phase,step,loss\n";
}

void LossLog::add(const std::string& phase, long step, double loss) {
  *out_ << phase << ',' << step << ',' << std::setprecision(9) << loss << '\n';
  out_->flush();
}

}  // namespace detail
}  // namespace cogest::cli
