#include <algorithm>
#include <map>
#include <numeric>

#include "cogest/nn/checkpoint.hpp"
#include "common.hpp"

namespace cogest::cli {

namespace {

using namespace detail;

// Items sharing a transcript count as the same retrieval target.
std::vector<int> transcript_groups(const data::ExampleSet& items) {
  std::map<std::vector<int>, int> ids;
  std::vector<int> g;
  for (int i = 0; i < items.size(); ++i) {
    const auto t = items.get(i).transcript;
    g.push_back(ids.emplace(t, static_cast<int>(ids.size())).first->second);
  }
  return g;
}

TrainResult finish(const RunConfig& cfg, Phase phase, const fs::path& ckpt, double loss, nlohmann::json report) {
  TrainResult r{ckpt, nn::Checkpoint::load(ckpt).content_hash(), loss, std::move(report)};
  write_run_manifest(cfg.checkpoints, "train " + to_string(phase), cfg, checkpoint_hashes(cfg.checkpoints),
                     {{"phase", to_string(phase)}, {"report", r.report}, {"data", cfg.data}});
  return r;
}

TrainResult train_align(const RunConfig& cfg, const Corpus& c, const Reporter& report, int log_every) {
  align::AlignConfig ac = cfg.align;
  ac.vocab = c.vocab.size();
  ac.seed = mix_seed(cfg.seed, 0x616c);
  align::AlignmentModel<float> model(ac, mix_seed(cfg.seed, 0x616d));
  LossLog log(fs::path(cfg.checkpoints) / "loss_align.csv", false);
  double last = 0;
  const align::AlignReport rep = align::train_alignment(model, *c.items, transcript_groups(*c.items), [&](const std::string& phase, int step, double loss) {
    log.add(phase, step, loss);
    last = loss;
    if (report && log_every > 0 && step % log_every == 0) report(phase + " step " + std::to_string(step) + " loss " + std::to_string(loss));
  });
  if (report) report("held-out retrieval " + std::to_string(rep.retrieval) + " (chance " + std::to_string(rep.chance) + ")");
  const fs::path out = fs::path(cfg.checkpoints) / kAlignCkpt;
  align::save_alignment(out, model, c.vocab, rep);
  return finish(cfg, Phase::align, out, last, rep.to_json());
}

TrainResult train_emocls(const RunConfig& cfg, const Corpus& c, const Reporter& report, int log_every) {
  const diffusion::NoiseSchedule s = cfg.schedule();
  LossLog log(fs::path(cfg.checkpoints) / "loss_emocls.csv", false);
  nlohmann::json reports;
  double last = 0;
  auto run = [&](const std::string& name, const data::ExampleSet& items, bool timed, const char* file, std::uint64_t stream) {
    emotion::ClassifierConfig cc = cfg.classifier;
    cc.time_conditioned = timed;
    emotion::EmotionClassifier<float> clf(cc, mix_seed(cfg.seed, stream));
    emotion::ClassifierTrainConfig tc = cfg.classifier_train;
    tc.seed = mix_seed(cfg.seed, stream + 1);
    const auto rep = emotion::train_classifier(clf, items, timed ? &s : nullptr, tc, [&](int step, double loss) {
      log.add(name, step, loss);
      last = loss;
      if (report && log_every > 0 && step % log_every == 0) report(name + " step " + std::to_string(step) + " loss " + std::to_string(loss));
    });
    if (report) report(name + " held-out accuracy " + std::to_string(rep.accuracy));
    emotion::save_classifier(fs::path(cfg.checkpoints) / file, clf, timed ? &s : nullptr, rep);
    reports[name] = rep.to_json();
  };
  run("noisy", *c.items, true, kNoisyClassifierCkpt, 0x6e);
  run("clean", *c.items, false, kCleanClassifierCkpt, 0x63);
  if (cfg.hands) run("hands", metrics::HandsOnlySet(*c.items), false, kHandsClassifierCkpt, 0x68);
  return finish(cfg, Phase::emocls, fs::path(cfg.checkpoints) / kNoisyClassifierCkpt, last, reports);
}

TrainResult train_gdm(const RunConfig& cfg, const Corpus& c, const TrainOptions& opt, const Reporter& report) {
  const fs::path align_path = fs::path(cfg.checkpoints) / kAlignCkpt;
  if (!fs::exists(align_path)) throw DependencyError("gdm training needs the align phase checkpoint (" + align_path.string() + "); run 'train align' first");
  const align::FrozenTranscriptEncoder sem = align::load_transcript_encoder(align_path);
  if (sem.vocabulary().to_json() != c.vocab.to_json()) throw DependencyError("align checkpoint was trained with a different vocabulary");

  model::DenoiserConfig dc = cfg.denoiser();
  dc.vocab = c.vocab.size();
  dc.semantic_dim = sem.width();
  const diffusion::NoiseSchedule s = cfg.schedule();
  model::Denoiser<float> m(dc, mix_seed(cfg.seed, 0x6764));
  model::GdmTrainConfig tc = cfg.gdm;
  tc.seed = mix_seed(cfg.seed, 0x6765);
  model::GdmTrainer<float> trainer(m, s, tc, sem.as_function());

  const fs::path out = fs::path(cfg.checkpoints) / kGdmCkpt;
  if (opt.resume) {
    if (!fs::exists(out)) throw DependencyError("nothing to resume: " + out.string() + " does not exist");
    const model::LoadedGdm prev = model::load_gdm(out);
    if (prev.schedule.hash() != s.hash()) throw DependencyError("resume checkpoint uses a different noise schedule");
    if (prev.model->config().to_json() != dc.to_json()) throw DependencyError("resume checkpoint uses a different model configuration");
    m.params().import_values(prev.raw.section("model."));
    model::restore_trainer(prev.raw, trainer);
    if (report) report("resuming at step " + std::to_string(trainer.step()));
  }
  LossLog log(fs::path(cfg.checkpoints) / "loss_gdm.csv", opt.resume);

  const int n = c.items->size();
  const int k = std::min(tc.batch, n);
  double last = 0;
  while (trainer.step() < tc.steps) {
    const long step = trainer.step();
    // batch order depends only on (seed, step) so resumed runs see the same data
    Rng pick(mix_seed(cfg.seed ^ 0x6f72646572ULL, static_cast<std::uint64_t>(step)));
    std::vector<int> pool(static_cast<std::size_t>(n));
    std::iota(pool.begin(), pool.end(), 0);
    std::vector<data::Example> batch;
    for (int i = 0; i < k; ++i) {
      const int j = pick.uniform_int(i, n - 1);
      std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(j)]);
      batch.push_back(c.items->get(pool[static_cast<std::size_t>(i)]));
    }
    last = trainer.train_step(data::make_batch(batch, dc.audio_dim));
    log.add("gdm", step, last);
    if (report && opt.log_every > 0 && step % opt.log_every == 0) report("gdm step " + std::to_string(step) + " loss " + std::to_string(last));
    if (opt.checkpoint_every > 0 && trainer.step() % opt.checkpoint_every == 0 && trainer.step() < tc.steps)
      model::save_gdm(out, m, s, c.stats, c.vocab, &trainer);
  }
  model::save_gdm(out, m, s, c.stats, c.vocab, &trainer);
  return finish(cfg, Phase::gdm, out, last, {{"steps", trainer.step()}, {"final_loss", last}});
}

TrainResult train_extractor(const RunConfig& cfg, const Corpus& c, const Reporter& report, int log_every) {
  std::vector<int> all(static_cast<std::size_t>(c.items->size()));
  std::iota(all.begin(), all.end(), 0);
  const metrics::ClipSet real = metrics::ClipSet::from_examples(*c.items, all);
  metrics::ExtractorConfig ec = cfg.extractor;
  ec.seed = mix_seed(cfg.seed, 0x6678);
  metrics::FeatureExtractor fx(ec);
  LossLog log(fs::path(cfg.checkpoints) / "loss_extractor.csv", false);
  double last = 0;
  const auto rep = metrics::train_extractor(fx, real, [&](int step, double loss) {
    log.add("extractor", step, loss);
    last = loss;
    if (report && log_every > 0 && step % log_every == 0) report("extractor step " + std::to_string(step) + " loss " + std::to_string(loss));
  });
  const fs::path out = fs::path(cfg.checkpoints) / kExtractorCkpt;
  metrics::save_extractor(out, fx, rep);
  return finish(cfg, Phase::extractor, out, last, rep.to_json());
}

}  // namespace

TrainResult cmd_train(const RunConfig& cfg, const TrainOptions& opt, const Reporter& report) {
  if (opt.checkpoint_every < 0) throw UsageError("checkpoint interval must be non-negative");
  if (opt.resume && opt.phase != Phase::gdm) throw UsageError("only the gdm phase can be resumed");
  fs::create_directories(cfg.checkpoints);
  // every phase standardizes with the statistics of the training corpus,
  // kept next to the checkpoints so evaluation uses the same ones
  const fs::path stats_path = fs::path(cfg.checkpoints) / kStatsFile;
  const Corpus c = load_corpus(cfg.data, cfg.frames);
  if (!fs::exists(stats_path)) {
    write_json(stats_path, c.stats.to_json());
  } else if (load_stats(stats_path).to_json() != c.stats.to_json()) {
    throw DependencyError("checkpoints in " + cfg.checkpoints + " were trained on a corpus with different statistics");
  }
  if (report) report("training " + to_string(opt.phase) + " on " + std::to_string(c.items->size()) + " clips");
  switch (opt.phase) {
    case Phase::align: return train_align(cfg, c, report, opt.log_every);
    case Phase::emocls: return train_emocls(cfg, c, report, opt.log_every);
    case Phase::gdm: return train_gdm(cfg, c, opt, report);
    case Phase::extractor: return train_extractor(cfg, c, report, opt.log_every);
  }
  throw UsageError("unknown phase");
}

}  // namespace cogest::cli
