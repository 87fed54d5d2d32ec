#include "cogest/motion/clip_io.hpp"

#include <bit>
#include <cstdint>
#include <fstream>

#include <json.hpp>

namespace cogest::motion {

static_assert(std::endian::native == std::endian::little, "clip files are little endian");

namespace {

std::filesystem::path with_ext(std::filesystem::path stem, const char* ext) { return stem += ext; }

}  // namespace

void save_clip(const std::filesystem::path& stem, const MotionClip& clip) {
  if (static_cast<int>(clip.mask.size()) != clip.length()) throw ShapeError("mask length differs from frame count");
  if (stem.has_parent_path()) std::filesystem::create_directories(stem.parent_path());
  {
    std::ofstream out(with_ext(stem, ".bin"), std::ios::binary);
    if (!out) throw DataError("cannot write " + with_ext(stem, ".bin").string());
    const std::uint32_t shape[2] = {static_cast<std::uint32_t>(clip.frames.rows()), static_cast<std::uint32_t>(clip.frames.cols())};
    out.write(reinterpret_cast<const char*>(shape), sizeof shape);
    out.write(reinterpret_cast<const char*>(clip.frames.data()), static_cast<std::streamsize>(clip.frames.size() * sizeof(float)));
  }
  nlohmann::json j;
  j["fps"] = clip.fps;
  j["source"] = to_string(clip.source);
  j["mask"] = clip.mask;
  j["skeleton_id"] = clip.skeleton_id;
  if (clip.transcript) j["transcript"] = *clip.transcript;
  if (clip.text) j["text"] = *clip.text;
  if (clip.emotion) j["emotion"] = *clip.emotion;
  if (clip.audio_path) j["audio_path"] = *clip.audio_path;
  std::ofstream out(with_ext(stem, ".json"));
  if (!out) throw DataError("cannot write " + with_ext(stem, ".json").string());
  out << j.dump(1) << '\n';
}

MotionClip load_clip(const std::filesystem::path& stem) {
  MotionClip clip;
  std::ifstream in(with_ext(stem, ".bin"), std::ios::binary);
  if (!in) throw DataError("cannot read " + with_ext(stem, ".bin").string());
  std::uint32_t shape[2] = {0, 0};
  in.read(reinterpret_cast<char*>(shape), sizeof shape);
  if (!in) throw DataError("truncated clip header in " + with_ext(stem, ".bin").string());
  clip.frames.resize(shape[0], shape[1]);
  in.read(reinterpret_cast<char*>(clip.frames.data()), static_cast<std::streamsize>(clip.frames.size() * sizeof(float)));
  if (!in) throw DataError("truncated clip data in " + with_ext(stem, ".bin").string());

  std::ifstream js(with_ext(stem, ".json"));
  if (!js) throw DataError("cannot read " + with_ext(stem, ".json").string());
  nlohmann::json j;
  try {
    js >> j;
    clip.fps = j.at("fps").get<double>();
    clip.source = parse_clip_source(j.at("source").get<std::string>());
    clip.mask = j.at("mask").get<std::vector<float>>();
    clip.skeleton_id = j.at("skeleton_id").get<std::string>();
    if (j.contains("transcript")) clip.transcript = j["transcript"].get<std::string>();
    if (j.contains("text")) clip.text = j["text"].get<std::string>();
    if (j.contains("emotion")) clip.emotion = j["emotion"].get<int>();
    if (j.contains("audio_path")) clip.audio_path = j["audio_path"].get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError("bad clip sidecar " + with_ext(stem, ".json").string() + ": " + e.what());
  }
  if (static_cast<int>(clip.mask.size()) != clip.length()) throw ShapeError("sidecar mask length differs from frame count");
  return clip;
}

}  // namespace cogest::motion
