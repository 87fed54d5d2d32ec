#include "cogest/motion/retarget.hpp"

#include <cmath>

#include "cogest/motion/rotation.hpp"

namespace cogest::motion {

ReprConfig ReprConfig::from_kv(const KeyValueConfig& kv) {
  ReprConfig cfg;
  cfg.contacts.height = kv.get_double("contact.height", cfg.contacts.height);
  cfg.contacts.speed = kv.get_double("contact.speed", cfg.contacts.speed);
  cfg.target_fps = kv.get_double("target_fps", cfg.target_fps);
  if (!(cfg.target_fps > 0)) throw UsageError("target_fps must be positive");
  cfg.name_map = kv.with_prefix("map.");
  return cfg;
}

namespace {

double leg_length(const Skeleton& s, int knee, int ankle) {
  return s.joints[static_cast<std::size_t>(knee)].offset.norm() + s.joints[static_cast<std::size_t>(ankle)].offset.norm();
}

}  // namespace

RawMotion retarget_and_scale(const RawMotion& m, const Skeleton& ref, const std::map<std::string, std::string>& name_map) {
  ref.validate();
  const Skeleton& src = m.skeleton;
  std::vector<int> source_of(static_cast<std::size_t>(ref.size()), -1);
  for (const auto& [from, to] : name_map) {
    const int r = ref.find(to), s = src.find(from);
    if (r < 0) throw RetargetError("name map targets unknown reference joint " + to, {to});
    if (s >= 0) source_of[static_cast<std::size_t>(r)] = s;
  }
  for (int r = 0; r < ref.size(); ++r) {
    if (source_of[static_cast<std::size_t>(r)] < 0) source_of[static_cast<std::size_t>(r)] = src.find(ref.joints[static_cast<std::size_t>(r)].name);
  }
  const int required = std::min(ref.size(), joint::right_wrist + 1);
  std::vector<std::string> missing;
  for (int r = 0; r < required; ++r) {
    if (source_of[static_cast<std::size_t>(r)] < 0) missing.push_back(ref.joints[static_cast<std::size_t>(r)].name);
  }
  if (!missing.empty()) {
    std::string list;
    for (const auto& n : missing) list += (list.empty() ? "" : ", ") + n;
    throw RetargetError("no source joint for: " + list, missing);
  }

  const double src_leg = leg_length(src, source_of[joint::left_knee], source_of[joint::left_ankle]);
  const double ref_leg = leg_length(ref, joint::left_knee, joint::left_ankle);
  if (!(src_leg > 1e-12)) throw RetargetError("source leg length is zero", {});
  const double ratio = ref_leg / src_leg;

  const PoseTrack in = track_from_raw(m);
  PoseTrack out;
  out.frames = in.frames;
  out.joints = ref.size();
  out.local.resize(static_cast<std::size_t>(out.frames * out.joints));
  out.root.resize(out.frames, 3);

  Mat3 facing = Mat3::Identity();
  std::vector<Mat3> g(static_cast<std::size_t>(ref.size()));
  for (int f = 0; f < in.frames; ++f) {
    const auto gs = global_rotations(src, &in.local[static_cast<std::size_t>(f * in.joints)]);
    for (int r = 0; r < ref.size(); ++r) {
      const int s = source_of[static_cast<std::size_t>(r)];
      const int p = ref.joints[static_cast<std::size_t>(r)].parent;
      if (s >= 0) {
        g[static_cast<std::size_t>(r)] = gs[static_cast<std::size_t>(s)];
      } else {
        g[static_cast<std::size_t>(r)] = p < 0 ? Mat3::Identity() : g[static_cast<std::size_t>(p)];
      }
    }
    if (f == 0) {
      const Vec3 fwd = g[0] * Vec3::UnitZ();
      if (std::hypot(fwd.x(), fwd.z()) > 1e-9) facing = axis_rotation(1, -std::atan2(fwd.x(), fwd.z()));
    }
    for (auto& r : g) r = facing * r;
    for (int r = 0; r < ref.size(); ++r) {
      const int p = ref.joints[static_cast<std::size_t>(r)].parent;
      out.at(f, r) = p < 0 ? g[0] : Mat3(g[static_cast<std::size_t>(p)].transpose() * g[static_cast<std::size_t>(r)]);
    }
    out.root.row(f) = (facing * (ratio * in.root.row(f).transpose())).transpose();
  }
  return raw_from_track(out, ref, m.frame_time);
}

RawMotion downsample(const RawMotion& m, double target_fps) {
  const double fps = m.fps();
  if (!(target_fps > 0)) throw UsageError("target fps must be positive");
  if (std::abs(fps - target_fps) < 1e-9) return m;
  if (target_fps > fps) throw DataError("cannot upsample from " + std::to_string(fps) + " to " + std::to_string(target_fps) + " fps");
  const int n = m.frame_count();
  if (n == 0) throw DataError("motion has no frames");
  const double step = fps / target_fps;
  const int out_n = static_cast<int>(std::floor((n - 1) / step + 1e-9)) + 1;
  RawMotion out;
  out.skeleton = m.skeleton;
  out.frame_time = 1.0 / target_fps;
  out.frames.resize(out_n, m.frames.cols());
  for (int k = 0; k < out_n; ++k) {
    const int src = std::min(n - 1, static_cast<int>(std::lround(k * step)));
    out.frames.row(k) = m.frames.row(src);
  }
  return out;
}

MotionClip prepare_bvh_clip(const RawMotion& m, const ReprConfig& cfg) {
  RawMotion r = retarget_and_scale(downsample(m, cfg.target_fps), canonical_skeleton(), cfg.name_map);
  r.skeleton.id = kCanonicalSkeletonId;
  return assemble_unified(r, BodyPartition::canonical(), cfg.contacts);
}

}  // namespace cogest::motion
