#include "cogest/cli/config.hpp"

#include <fstream>

#include "cogest/core/hash.hpp"
#include "cogest/core/schema.hpp"

#ifndef COGEST_VERSION
#define COGEST_VERSION "v0.1.0"
#endif

namespace cogest::cli {

nlohmann::json RunConfig::to_json() const {
  return {{"seed", seed},
          {"paths", {{"data", data}, {"checkpoints", checkpoints}, {"output", output}}},
          {"frames", frames},
          {"workers", workers},
          {"schedule", {{"steps", diffusion_steps}, {"rescale", rescale_betas}, {"eta", eta}}},
          {"model", {{"preset", preset}, {"overrides", model}}},
          {"gdm", gdm.to_json()},
          {"align", align.to_json()},
          {"emocls", {{"model", classifier.to_json()}, {"train", classifier_train.to_json()}, {"hands", hands}}},
          {"guidance", guidance.to_json()},
          {"extractor", extractor.to_json()},
          {"metrics", metrics}};
}

const nlohmann::json& RunConfig::schema() {
  static const nlohmann::json s = {
      {"type", "object"},
      {"required", {"seed"}},
      {"additionalProperties", false},
      {"properties",
       {{"seed", {{"type", "integer"}, {"minimum", 0}}},
        {"paths",
         {{"type", "object"},
          {"additionalProperties", false},
          {"properties", {{"data", {{"type", "string"}}}, {"checkpoints", {{"type", "string"}}}, {"output", {{"type", "string"}}}}}}},
        {"frames", {{"type", "integer"}, {"minimum", 24}}},
        {"workers", {{"type", "integer"}, {"minimum", 1}, {"maximum", 256}}},
        {"schedule",
         {{"type", "object"},
          {"additionalProperties", false},
          {"properties",
           {{"steps", {{"type", "integer"}, {"minimum", 1}}},
            {"rescale", {{"type", "boolean"}}},
            {"eta", {{"type", "number"}, {"minimum", 0}, {"maximum", 1}}}}}}},
        {"model",
         {{"type", "object"},
          {"additionalProperties", false},
          {"properties", {{"preset", {{"type", "string"}, {"enum", {"tiny", "small", "desk", "full"}}}}, {"overrides", {{"type", "object"}}}}}}},
        {"gdm", {{"type", "object"}}},
        {"align", {{"type", "object"}}},
        {"emocls",
         {{"type", "object"},
          {"additionalProperties", false},
          {"properties", {{"model", {{"type", "object"}}}, {"train", {{"type", "object"}}}, {"hands", {{"type", "boolean"}}}}}}},
        {"guidance", {{"type", "object"}}},
        {"extractor", {{"type", "object"}}},
        {"metrics",
         {{"type", "array"},
          {"items", {{"type", "string"}, {"enum", {"fgd_raw", "fgd_feature", "sa", "ea", "ec", "hands"}}}}}}}}};
  return s;
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
  const auto problems = validate_schema(j, schema());
  if (!problems.empty()) {
    std::string msg = "invalid run config:";
    for (const auto& p : problems) msg += "\n  " + p;
    throw UsageError(msg);
  }
  RunConfig c;
  c.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("paths")) {
    const auto& p = j["paths"];
    c.data = p.value("data", c.data);
    c.checkpoints = p.value("checkpoints", c.checkpoints);
    c.output = p.value("output", c.output);
  }
  c.frames = j.value("frames", c.frames);
  c.workers = j.value("workers", c.workers);
  if (j.contains("schedule")) {
    const auto& s = j["schedule"];
    c.diffusion_steps = s.value("steps", c.diffusion_steps);
    c.rescale_betas = s.value("rescale", c.rescale_betas);
    c.eta = s.value("eta", c.eta);
  }
  if (j.contains("model")) {
    c.preset = j["model"].value("preset", c.preset);
    c.model = j["model"].value("overrides", nlohmann::json::object());
  }
  if (j.contains("gdm")) c.gdm = model::GdmTrainConfig::from_json(j["gdm"]);
  if (j.contains("align")) c.align = align::AlignConfig::from_json(j["align"]);
  if (j.contains("emocls")) {
    const auto& e = j["emocls"];
    if (e.contains("model")) c.classifier = emotion::ClassifierConfig::from_json(e["model"]);
    if (e.contains("train")) c.classifier_train = emotion::ClassifierTrainConfig::from_json(e["train"]);
    c.hands = e.value("hands", c.hands);
  }
  if (j.contains("guidance")) c.guidance = emotion::GuidanceConfig::from_json(j["guidance"]);
  if (j.contains("extractor")) c.extractor = metrics::ExtractorConfig::from_json(j["extractor"]);
  if (j.contains("metrics")) c.metrics = j["metrics"].get<std::vector<std::string>>();
  c.denoiser();  // surfaces preset and override errors early
  c.guidance.range(c.diffusion_steps);
  return c;
}

std::string RunConfig::hash() const { return hash_string(to_json().dump()); }

diffusion::NoiseSchedule RunConfig::schedule() const {
  diffusion::ScheduleConfig s;
  if (rescale_betas) {
    s = diffusion::ScheduleConfig::scaled_linear(diffusion_steps);
  } else {
    s.steps = diffusion_steps;
  }
  s.eta = eta;
  return diffusion::NoiseSchedule(s);
}

model::DenoiserConfig RunConfig::denoiser() const {
  nlohmann::json j = model::DenoiserConfig::preset(preset).to_json();
  j.merge_patch(model);
  j["frames"] = frames;
  return model::DenoiserConfig::from_json(j);
}

void apply_override(nlohmann::json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw UsageError("override '" + assignment + "' is not key=value");
  const std::string key = assignment.substr(0, eq), text = assignment.substr(eq + 1);
  nlohmann::json value;
  try {
    value = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error&) {
    value = text;
  }
  nlohmann::json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw UsageError("override key '" + key + "' has an empty component");
    if (!node->is_object()) throw UsageError("override key '" + key + "' descends into a non-object");
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    node = &(*node)[part];
    if (node->is_null()) *node = nlohmann::json::object();
    start = dot + 1;
  }
}

RunConfig load_run_config(const std::optional<std::filesystem::path>& file, const std::vector<std::string>& overrides) {
  nlohmann::json doc = RunConfig{}.to_json();
  doc.erase("seed");
  if (file) {
    std::ifstream in(*file);
    if (!in) throw UsageError("cannot read config " + file->string());
    nlohmann::json user;
    try {
      user = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
      throw UsageError("config " + file->string() + " is not valid JSON: " + e.what());
    }
    if (!user.is_object()) throw UsageError("config " + file->string() + " must be a JSON object");
    doc.merge_patch(user);
  }
  for (const auto& o : overrides) apply_override(doc, o);
  if (!doc.contains("seed")) throw UsageError("a seed is required (config key \"seed\" or --seed)");
  return RunConfig::from_json(doc);
}

std::string version_string() { return COGEST_VERSION; }

void write_run_manifest(const std::filesystem::path& dir, const std::string& command, const RunConfig& cfg,
                        const std::map<std::string, std::string>& checkpoint_hashes, const nlohmann::json& extra) {
  std::filesystem::create_directories(dir);
  nlohmann::json j = {{"command", command},
                      {"version", version_string()},
                      {"config_hash", cfg.hash()},
                      {"config", cfg.to_json()},
                      {"checkpoints", checkpoint_hashes}};
  for (const auto& [k, v] : extra.items()) j[k] = v;
  std::ofstream out(dir / "run_manifest.json");
  if (!out) throw DataError("cannot write " + (dir / "run_manifest.json").string());
  out << j.dump(1) << "\n";
}

}  // namespace cogest::cli
