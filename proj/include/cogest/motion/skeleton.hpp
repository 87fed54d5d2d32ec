#ifndef COGEST_MOTION_SKELETON_HPP_
#define COGEST_MOTION_SKELETON_HPP_

#include <optional>
#include <string>
#include <vector>

#include "cogest/core/types.hpp"
#include "cogest/motion/rotation.hpp"

namespace cogest::motion {

enum class Channel { Xposition, Yposition, Zposition, Xrotation, Yrotation, Zrotation };

std::string channel_name(Channel c);
std::optional<Channel> parse_channel(std::string_view s);

struct Joint {
  std::string name;
  int parent = -1;  // -1 marks the root
  Vec3 offset = Vec3::Zero();
  std::vector<Channel> channels;
  std::optional<Vec3> end_site;

  /// Rotation channels in declaration order; identity order when absent.
  EulerOrder rotation_order() const;
  bool has_rotation() const;
};

/// Topologically ordered joint tree (parent index < child index).
struct Skeleton {
  std::string id;
  std::vector<Joint> joints;

  int size() const { return static_cast<int>(joints.size()); }
  int find(std::string_view name) const;  // -1 when absent
  int channel_count() const;
  /// First channel column of joint j within a frame vector.
  int channel_offset(int j) const;
  void validate() const;
};

inline constexpr int kCanonicalJoints = 55;
inline constexpr const char* kCanonicalSkeletonId = "smplx55-canonical-v1";

/// 55-joint SMPL-X-topology reference skeleton in meters, Y up, facing +Z.
/// Root channels: Xposition Yposition Zposition Zrotation Xrotation Yrotation;
/// all other joints: Zrotation Xrotation Yrotation.
const Skeleton& canonical_skeleton();

/// Joint index sets used for decoupling fingers/limbs and for hybrid splicing.
struct BodyPartition {
  std::vector<int> fingers;  // 30 hand joints
  std::vector<int> limbs;    // remaining 25
  std::vector<int> spine3_cut;  // root and every joint at/below the third spine

  static const BodyPartition& canonical();
};

/// Canonical joint indices referenced by name throughout.
namespace joint {
inline constexpr int pelvis = 0, left_hip = 1, right_hip = 2, spine1 = 3, left_knee = 4, right_knee = 5, spine2 = 6,
                     left_ankle = 7, right_ankle = 8, spine3 = 9, left_foot = 10, right_foot = 11, neck = 12,
                     left_collar = 13, right_collar = 14, head = 15, left_shoulder = 16, right_shoulder = 17,
                     left_elbow = 18, right_elbow = 19, left_wrist = 20, right_wrist = 21, jaw = 22, left_eye = 23,
                     right_eye = 24, left_hand_first = 25, right_hand_first = 40;
}  // namespace joint

}  // namespace cogest::motion

#endif  // COGEST_MOTION_SKELETON_HPP_
