#ifndef COGEST_MOTION_UNIFIED_HPP_
#define COGEST_MOTION_UNIFIED_HPP_

#include <optional>
#include <string>
#include <vector>

#include "cogest/core/error.hpp"
#include "cogest/core/random.hpp"
#include "cogest/core/types.hpp"
#include "cogest/motion/bvh.hpp"
#include "cogest/motion/skeleton.hpp"

namespace cogest::motion {

/// Column layout of one unified frame, joint-major inside each block.
namespace layout {
inline constexpr int kJoints = kCanonicalJoints;
inline constexpr int kRot = 0;
inline constexpr int kLoc = kRot + 6 * kJoints;
inline constexpr int kLinVel = kLoc + 3 * kJoints;
inline constexpr int kAngVel = kLinVel + 3 * kJoints;
inline constexpr int kContacts = kAngVel + 6 * kJoints;
inline constexpr int kWidth = kContacts + 4;
static_assert(kWidth == 994);

constexpr int rot(int j) { return kRot + 6 * j; }
constexpr int loc(int j) { return kLoc + 3 * j; }
constexpr int lin_vel(int j) { return kLinVel + 3 * j; }
constexpr int ang_vel(int j) { return kAngVel + 6 * j; }

/// Every column owned by the given joints (rot6d, loc, lin_vel, ang_vel).
std::vector<int> joint_columns(const std::vector<int>& joints);
}  // namespace layout

enum class ClipSource { gesture, locomotion, hybrid, synthetic };
std::string to_string(ClipSource s);
ClipSource parse_clip_source(const std::string& s);

struct MotionClip {
  MatrixXf frames;          // N x 994
  std::vector<float> mask;  // N validity flags
  double fps = 20.0;
  ClipSource source = ClipSource::gesture;
  std::string skeleton_id = kCanonicalSkeletonId;
  std::optional<std::string> transcript;  // spoken words
  std::optional<std::string> text;        // motion description
  std::optional<int> emotion;
  std::optional<std::string> audio_path;

  int length() const { return static_cast<int>(frames.rows()); }
  int valid_length() const;
};

/// Local joint rotations plus global root position, frame-major.
struct PoseTrack {
  int frames = 0;
  int joints = 0;
  std::vector<Mat3> local;  // frames * joints
  MatrixXd root;            // frames x 3, includes the root offset

  Mat3& at(int f, int j) { return local[static_cast<std::size_t>(f * joints + j)]; }
  const Mat3& at(int f, int j) const { return local[static_cast<std::size_t>(f * joints + j)]; }
};

struct ContactConfig {
  double height = 0.05;  // meters above the ground plane y = 0
  double speed = 0.01;   // meters per frame
  int joints[4] = {joint::left_ankle, joint::right_ankle, joint::left_foot, joint::right_foot};
};

/// Global positions (joints x 3) for one frame.
Eigen::Matrix<double, Eigen::Dynamic, 3> forward_kinematics(const Skeleton& s, const Mat3* local, const Vec3& root);
/// Global rotations for one frame.
std::vector<Mat3> global_rotations(const Skeleton& s, const Mat3* local);

PoseTrack track_from_raw(const RawMotion& m);
RawMotion raw_from_track(const PoseTrack& t, const Skeleton& s, double frame_time);

/// loc: N x 3J global positions. Frame 0 speed counts as zero.
Eigen::Matrix<float, Eigen::Dynamic, 4, Eigen::RowMajor> detect_contacts(const MatrixXd& loc, const ContactConfig& cfg = {});

MotionClip assemble_track(const PoseTrack& t, const ContactConfig& cfg = {});
/// Expects a 55-joint motion on the canonical skeleton at 20 fps.
MotionClip assemble_unified(const RawMotion& m, const BodyPartition& partition, const ContactConfig& cfg = {});

/// Local rotations decoded from the rot6d block (Gram-Schmidt per joint).
std::vector<Mat3> decode_rotations(const MatrixXf& frames, int f);
/// Converts a clip back to channel values on the canonical skeleton.
RawMotion clip_to_raw(const MotionClip& clip);

class SpliceError : public DataError {
 public:
  explicit SpliceError(const std::string& what) : DataError("splice error: " + what) {}
};

/// Lower body (spine3_cut) and contacts from `locomotion`, the rest from
/// `gesture`; upper-body positions and velocities recomputed by FK.
MotionClip splice_hybrid(const MotionClip& locomotion, const MotionClip& gesture, const BodyPartition& partition);

class ClipTooShort : public DataError {
 public:
  ClipTooShort(int length, int min_len)
      : DataError("clip of " + std::to_string(length) + " frames is shorter than " + std::to_string(min_len)) {}
};

/// Random crop (clips longer than target_len) or zero padding with mask 0.
MotionClip clip_window(const MotionClip& m, Rng& rng, int target_len = 180, int min_len = 60);

}  // namespace cogest::motion

#endif  // COGEST_MOTION_UNIFIED_HPP_
