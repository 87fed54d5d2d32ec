#include "cogest/motion/unified.hpp"

#include <algorithm>

#include "cogest/motion/rotation.hpp"

namespace cogest::motion {

std::vector<int> layout::joint_columns(const std::vector<int>& joints) {
  std::vector<int> cols;
  for (int j : joints) for (int k = 0; k < 6; ++k) cols.push_back(rot(j) + k);
  for (int j : joints) for (int k = 0; k < 3; ++k) cols.push_back(loc(j) + k);
  for (int j : joints) for (int k = 0; k < 3; ++k) cols.push_back(lin_vel(j) + k);
  for (int j : joints) for (int k = 0; k < 6; ++k) cols.push_back(ang_vel(j) + k);
  return cols;
}

std::string to_string(ClipSource s) {
  switch (s) {
    case ClipSource::gesture: return "gesture";
    case ClipSource::locomotion: return "locomotion";
    case ClipSource::hybrid: return "hybrid";
    case ClipSource::synthetic: return "synthetic";
  }
  return "";
}

ClipSource parse_clip_source(const std::string& s) {
  if (s == "gesture") return ClipSource::gesture;
  if (s == "locomotion") return ClipSource::locomotion;
  if (s == "hybrid") return ClipSource::hybrid;
  if (s == "synthetic") return ClipSource::synthetic;
  throw DataError("unknown clip source " + s);
}

int MotionClip::valid_length() const {
  return static_cast<int>(std::count_if(mask.begin(), mask.end(), [](float m) { return m > 0.5f; }));
}

std::vector<Mat3> global_rotations(const Skeleton& s, const Mat3* local) {
  std::vector<Mat3> g(static_cast<std::size_t>(s.size()));
  for (int j = 0; j < s.size(); ++j) {
    const int p = s.joints[static_cast<std::size_t>(j)].parent;
    g[static_cast<std::size_t>(j)] = p < 0 ? local[j] : Mat3(g[static_cast<std::size_t>(p)] * local[j]);
  }
  return g;
}

Eigen::Matrix<double, Eigen::Dynamic, 3> forward_kinematics(const Skeleton& s, const Mat3* local, const Vec3& root) {
  Eigen::Matrix<double, Eigen::Dynamic, 3> pos(s.size(), 3);
  std::vector<Mat3> g(static_cast<std::size_t>(s.size()));
  for (int j = 0; j < s.size(); ++j) {
    const Joint& joint = s.joints[static_cast<std::size_t>(j)];
    if (joint.parent < 0) {
      g[static_cast<std::size_t>(j)] = local[j];
      pos.row(j) = root.transpose();
    } else {
      const Mat3& gp = g[static_cast<std::size_t>(joint.parent)];
      g[static_cast<std::size_t>(j)] = gp * local[j];
      pos.row(j) = pos.row(joint.parent) + (gp * joint.offset).transpose();
    }
  }
  return pos;
}

PoseTrack track_from_raw(const RawMotion& m) {
  const Skeleton& s = m.skeleton;
  PoseTrack t;
  t.frames = m.frame_count();
  t.joints = s.size();
  t.local.assign(static_cast<std::size_t>(t.frames * t.joints), Mat3::Identity());
  t.root.resize(t.frames, 3);
  std::vector<EulerOrder> orders;
  std::vector<std::vector<int>> rot_cols(static_cast<std::size_t>(s.size()));
  for (int j = 0; j < s.size(); ++j) {
    const Joint& joint = s.joints[static_cast<std::size_t>(j)];
    orders.push_back(joint.rotation_order());
    const int first = s.channel_offset(j);
    for (std::size_t c = 0; c < joint.channels.size(); ++c) {
      const Channel ch = joint.channels[c];
      if (ch == Channel::Xrotation || ch == Channel::Yrotation || ch == Channel::Zrotation) {
        rot_cols[static_cast<std::size_t>(j)].push_back(first + static_cast<int>(c));
      }
    }
  }
  for (int f = 0; f < t.frames; ++f) {
    t.root.row(f) = (s.joints[0].offset + m.root_channels(f)).transpose();
    for (int j = 0; j < s.size(); ++j) {
      const auto& cols = rot_cols[static_cast<std::size_t>(j)];
      if (cols.empty()) continue;
      const Vec3 deg(m.frames(f, cols[0]), m.frames(f, cols[1]), m.frames(f, cols[2]));
      t.at(f, j) = euler_to_matrix(deg, orders[static_cast<std::size_t>(j)]);
    }
  }
  return t;
}

RawMotion raw_from_track(const PoseTrack& t, const Skeleton& s, double frame_time) {
  if (t.joints != s.size()) throw ShapeError("pose track and skeleton joint counts differ");
  RawMotion m;
  m.skeleton = s;
  m.frame_time = frame_time;
  m.frames = MatrixXd::Zero(t.frames, s.channel_count());
  for (int f = 0; f < t.frames; ++f) {
    for (int j = 0; j < s.size(); ++j) {
      const Joint& joint = s.joints[static_cast<std::size_t>(j)];
      const int first = s.channel_offset(j);
      const Vec3 pos = j == 0 ? Vec3(t.root.row(f).transpose() - joint.offset) : joint.offset;
      Vec3 angles = Vec3::Zero();
      if (joint.has_rotation()) angles = matrix_to_euler(t.at(f, j), joint.rotation_order());
      int r = 0;
      for (std::size_t c = 0; c < joint.channels.size(); ++c) {
        const Eigen::Index col = first + static_cast<Eigen::Index>(c);
        switch (joint.channels[c]) {
          case Channel::Xposition: m.frames(f, col) = pos(0); break;
          case Channel::Yposition: m.frames(f, col) = pos(1); break;
          case Channel::Zposition: m.frames(f, col) = pos(2); break;
          default: m.frames(f, col) = angles(r++); break;
        }
      }
    }
  }
  return m;
}

Eigen::Matrix<float, Eigen::Dynamic, 4, Eigen::RowMajor> detect_contacts(const MatrixXd& loc, const ContactConfig& cfg) {
  Eigen::Matrix<float, Eigen::Dynamic, 4, Eigen::RowMajor> c(loc.rows(), 4);
  for (Eigen::Index f = 0; f < loc.rows(); ++f) {
    for (int k = 0; k < 4; ++k) {
      const int col = 3 * cfg.joints[k];
      const double height = loc(f, col + 1);
      const double speed = f == 0 ? 0.0 : (loc.row(f).segment<3>(col) - loc.row(f - 1).segment<3>(col)).norm();
      c(f, k) = (height < cfg.height && speed < cfg.speed) ? 1.0f : 0.0f;
    }
  }
  return c;
}

MotionClip assemble_track(const PoseTrack& t, const ContactConfig& cfg) {
  using namespace layout;
  if (t.joints != kJoints) {
    throw ShapeError("unified representation needs " + std::to_string(kJoints) + " joints, got " + std::to_string(t.joints));
  }
  const Skeleton& s = canonical_skeleton();
  const int n = t.frames;
  MatrixXd rot(n, 6 * kJoints), loc(n, 3 * kJoints);
  for (int f = 0; f < n; ++f) {
    const auto pos = forward_kinematics(s, &t.local[static_cast<std::size_t>(f * kJoints)], t.root.row(f).transpose());
    for (int j = 0; j < kJoints; ++j) {
      rot.row(f).segment<6>(6 * j) = matrix_to_rot6d(t.at(f, j)).transpose();
      loc.row(f).segment<3>(3 * j) = pos.row(j);
    }
  }
  MatrixXd vel = MatrixXd::Zero(n, 3 * kJoints), ang = MatrixXd::Zero(n, 6 * kJoints);
  if (n > 1) {
    vel.bottomRows(n - 1) = loc.bottomRows(n - 1) - loc.topRows(n - 1);
    ang.bottomRows(n - 1) = rot.bottomRows(n - 1) - rot.topRows(n - 1);
  }
  MotionClip clip;
  clip.frames.resize(n, kWidth);
  clip.frames.middleCols(kRot, 6 * kJoints) = rot.cast<float>();
  clip.frames.middleCols(kLoc, 3 * kJoints) = loc.cast<float>();
  clip.frames.middleCols(kLinVel, 3 * kJoints) = vel.cast<float>();
  clip.frames.middleCols(kAngVel, 6 * kJoints) = ang.cast<float>();
  clip.frames.middleCols(kContacts, 4) = detect_contacts(loc, cfg);
  clip.mask.assign(static_cast<std::size_t>(n), 1.0f);
  return clip;
}

MotionClip assemble_unified(const RawMotion& m, const BodyPartition& partition, const ContactConfig& cfg) {
  if (m.skeleton.size() != kCanonicalJoints) {
    throw ShapeError("unified representation needs a retargeted " + std::to_string(kCanonicalJoints) + "-joint skeleton, got " +
                     std::to_string(m.skeleton.size()));
  }
  if (partition.fingers.size() + partition.limbs.size() != static_cast<std::size_t>(kCanonicalJoints)) {
    throw UsageError("body partition does not cover the skeleton");
  }
  if (std::abs(m.fps() - 20.0) > 1e-9) throw DataError("unified representation expects 20 fps input");
  MotionClip clip = assemble_track(track_from_raw(m), cfg);
  clip.skeleton_id = m.skeleton.id.empty() ? kCanonicalSkeletonId : m.skeleton.id;
  return clip;
}

std::vector<Mat3> decode_rotations(const MatrixXf& frames, int f) {
  std::vector<Mat3> r(layout::kJoints);
  for (int j = 0; j < layout::kJoints; ++j) {
    r[static_cast<std::size_t>(j)] = rot6d_to_matrix(frames.row(f).segment<6>(layout::rot(j)).cast<double>().transpose());
  }
  return r;
}

RawMotion clip_to_raw(const MotionClip& clip) {
  const Skeleton& s = canonical_skeleton();
  PoseTrack t;
  t.joints = s.size();
  t.frames = clip.length();
  t.root.resize(t.frames, 3);
  for (int f = 0; f < t.frames; ++f) {
    const auto r = decode_rotations(clip.frames, f);
    t.local.insert(t.local.end(), r.begin(), r.end());
    t.root.row(f) = clip.frames.row(f).segment<3>(layout::loc(0)).cast<double>();
  }
  return raw_from_track(t, s, 1.0 / clip.fps);
}

MotionClip splice_hybrid(const MotionClip& locomotion, const MotionClip& gesture, const BodyPartition& partition) {
  using namespace layout;
  if (locomotion.length() != gesture.length()) {
    throw SpliceError("frame counts differ (" + std::to_string(locomotion.length()) + " vs " + std::to_string(gesture.length()) + ")");
  }
  if (locomotion.frames.cols() != kWidth || gesture.frames.cols() != kWidth) throw SpliceError("clips must be 994 wide");
  if (std::abs(locomotion.fps - gesture.fps) > 1e-9) throw SpliceError("frame rates differ");

  const int n = gesture.length();
  MotionClip out = gesture;
  out.source = ClipSource::hybrid;
  out.text = locomotion.text;
  for (int c : joint_columns(partition.spine3_cut)) out.frames.col(c) = locomotion.frames.col(c);
  out.frames.middleCols(kContacts, 4) = locomotion.frames.middleCols(kContacts, 4);

  std::vector<char> lower(kJoints, 0);
  for (int j : partition.spine3_cut) lower[static_cast<std::size_t>(j)] = 1;
  const Skeleton& s = canonical_skeleton();
  for (int f = 0; f < n; ++f) {
    const float valid = std::min(locomotion.mask[static_cast<std::size_t>(f)], gesture.mask[static_cast<std::size_t>(f)]);
    out.mask[static_cast<std::size_t>(f)] = valid;
    if (valid < 0.5f) {
      out.frames.row(f).setZero();
      continue;
    }
    const auto local = decode_rotations(out.frames, f);
    const auto pos = forward_kinematics(s, local.data(), out.frames.row(f).segment<3>(loc(0)).cast<double>().transpose());
    for (int j = 0; j < kJoints; ++j) {
      if (!lower[static_cast<std::size_t>(j)]) out.frames.row(f).segment<3>(loc(j)) = pos.row(j).cast<float>();
    }
  }
  for (int f = 0; f < n; ++f) {
    const bool prev = f > 0 && out.mask[static_cast<std::size_t>(f - 1)] > 0.5f && out.mask[static_cast<std::size_t>(f)] > 0.5f;
    for (int j = 0; j < kJoints; ++j) {
      if (lower[static_cast<std::size_t>(j)]) continue;
      if (prev) {
        out.frames.row(f).segment<3>(lin_vel(j)) = out.frames.row(f).segment<3>(loc(j)) - out.frames.row(f - 1).segment<3>(loc(j));
      } else {
        out.frames.row(f).segment<3>(lin_vel(j)).setZero();
      }
    }
  }
  return out;
}

MotionClip clip_window(const MotionClip& m, Rng& rng, int target_len, int min_len) {
  const int n = m.length();
  if (n < min_len) throw ClipTooShort(n, min_len);
  MotionClip out = m;
  if (n > target_len) {
    const int start = rng.uniform_int(0, n - target_len);
    out.frames = m.frames.middleRows(start, target_len);
    out.mask.assign(m.mask.begin() + start, m.mask.begin() + start + target_len);
  } else if (n < target_len) {
    out.frames = MatrixXf::Zero(target_len, m.frames.cols());
    out.frames.topRows(n) = m.frames;
    out.mask.assign(static_cast<std::size_t>(target_len), 0.0f);
    std::copy(m.mask.begin(), m.mask.end(), out.mask.begin());
  }
  return out;
}

}  // namespace cogest::motion
