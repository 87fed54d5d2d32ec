#include <algorithm>
#include <fstream>
#include <numeric>

#include "cogest/core/schema.hpp"
#include "common.hpp"

namespace cogest::cli {

namespace {

using namespace detail;

std::vector<int> all(int n) {
  std::vector<int> v(static_cast<std::size_t>(n));
  std::iota(v.begin(), v.end(), 0);
  return v;
}

bool wants(const RunConfig& cfg, const std::string& m) { return std::find(cfg.metrics.begin(), cfg.metrics.end(), m) != cfg.metrics.end(); }

}  // namespace

metrics::MetricReport cmd_eval(const RunConfig& cfg, const EvalOptions& opt, const Reporter& report) {
  if (cfg.metrics.empty()) throw UsageError("no metrics selected");
  const fs::path ck = cfg.checkpoints;
  // resolve every dependency before touching the corpora
  if (wants(cfg, "fgd_feature")) require_file(ck / kExtractorCkpt, "fgd_feature needs the extractor checkpoint ('train extractor')");
  if (wants(cfg, "sa")) require_file(ck / kAlignCkpt, "sa needs the align checkpoint");
  if (wants(cfg, "ea") || wants(cfg, "ec")) require_file(ck / kCleanClassifierCkpt, "ea/ec need the clean emotion classifier");
  if (wants(cfg, "hands")) require_file(ck / kHandsClassifierCkpt, "hands metrics need the hands-only classifier (emocls.hands = true)");
  if (wants(cfg, "ec")) require_file(opt.generated / kTargetsFile, "ec needs the emotion targets of the generated corpus");

  const std::optional<data::Standardizer> stats =
      fs::exists(ck / kStatsFile) ? std::optional<data::Standardizer>(load_stats(ck / kStatsFile)) : std::nullopt;
  const Corpus real = load_corpus(opt.real, cfg.frames, stats);
  std::optional<align::LoadedAlignment> al;
  if (wants(cfg, "sa")) al = align::load_alignment(ck / kAlignCkpt);
  const text::Vocabulary vocab = al ? al->vocab : real.vocab;
  const Corpus gen = load_corpus(opt.generated, cfg.frames, real.stats, vocab);
  const metrics::ClipSet real_clips = metrics::ClipSet::from_examples(*real.items, all(real.items->size()));
  const metrics::ClipSet gen_clips = metrics::ClipSet::from_examples(*gen.items, all(gen.items->size()));

  metrics::MetricReport r;
  r.real_count = real_clips.size();
  r.generated_count = gen_clips.size();
  r.config_hash = cfg.hash();
  r.checkpoints = checkpoint_hashes(ck);

  if (wants(cfg, "fgd_raw")) r.fgd_raw = metrics::fgd(real_clips, gen_clips, metrics::FgdSpace::raw);
  if (wants(cfg, "fgd_feature")) {
    const auto fx = metrics::load_extractor(ck / kExtractorCkpt);
    r.fgd_feature = metrics::fgd(real_clips, gen_clips, metrics::FgdSpace::feature, fx.get());
  }
  if (wants(cfg, "sa")) {
    std::vector<int> idx;
    std::vector<std::vector<int>> ids;
    for (int i = 0; i < gen.items->size(); ++i) {
      auto t = gen.items->get(i).transcript;
      if (t.empty()) continue;
      idx.push_back(i);
      ids.push_back(std::move(t));
    }
    if (idx.empty()) throw DataError("no generated clip carries a transcript for sa");
    const auto sa = metrics::semantic_alignment(*al->model, metrics::ClipSet::from_examples(*gen.items, idx), ids);
    r.sa = std::accumulate(sa.begin(), sa.end(), 0.0) / static_cast<double>(sa.size());
  }

  std::vector<int> truth, target;
  if (wants(cfg, "ea") || wants(cfg, "ec") || wants(cfg, "hands")) {
    for (int i = 0; i < gen.items->size(); ++i) truth.push_back(gen.items->emotion(i));
    if (wants(cfg, "ec")) {
      const auto t = read_json(opt.generated / kTargetsFile);
      for (const auto& id : gen.items->ids()) {
        if (!t.contains(id)) throw DataError("no emotion target for generated clip " + id);
        target.push_back(t[id].get<int>());
      }
    } else {
      target = truth;
    }
    if (std::any_of(truth.begin(), truth.end(), [](int e) { return e < 0; })) throw DataError("generated clips need their source emotion labels");
  }
  auto score = [&](const char* file, const metrics::ClipSet& clips, std::optional<double>& ea, std::optional<double>& ec) {
    const auto clf = emotion::load_classifier(ck / file);
    const auto s = metrics::emotion_scores(metrics::classify(*clf.model, clips), truth, target);
    if (wants(cfg, "ea") || wants(cfg, "hands")) ea = s.ea;
    if (wants(cfg, "ec")) ec = s.ec;
  };
  if (wants(cfg, "ea") || wants(cfg, "ec")) score(kCleanClassifierCkpt, gen_clips, r.ea, r.ec);
  if (wants(cfg, "hands")) score(kHandsClassifierCkpt, metrics::hands_only(gen_clips), r.ea_hands, r.ec_hands);

  const auto problems = validate_schema(r.to_json(), metrics::MetricReport::schema());
  if (!problems.empty()) throw NumericalError("metric report violates its schema: " + problems.front());
  const fs::path out = cfg.output;
  write_json(out / "report.json", r.to_json());
  {
    std::ofstream csv(out / "report.csv");
    csv << metrics::MetricReport::csv_header() << "\n" << r.csv_row(opt.generated.filename().string()) << "\n";
  }
  write_run_manifest(out, "eval", cfg, r.checkpoints, {{"real", opt.real.string()}, {"generated", opt.generated.string()}});
  if (report) report(r.table());
  return r;
}

}  // namespace cogest::cli
