#include "cogest/motion/skeleton.hpp"

#include <algorithm>

#include "cogest/core/error.hpp"

namespace cogest::motion {

std::string channel_name(Channel c) {
  switch (c) {
    case Channel::Xposition: return "Xposition";
    case Channel::Yposition: return "Yposition";
    case Channel::Zposition: return "Zposition";
    case Channel::Xrotation: return "Xrotation";
    case Channel::Yrotation: return "Yrotation";
    case Channel::Zrotation: return "Zrotation";
  }
  return "";
}

std::optional<Channel> parse_channel(std::string_view s) {
  if (s == "Xposition") return Channel::Xposition;
  if (s == "Yposition") return Channel::Yposition;
  if (s == "Zposition") return Channel::Zposition;
  if (s == "Xrotation") return Channel::Xrotation;
  if (s == "Yrotation") return Channel::Yrotation;
  if (s == "Zrotation") return Channel::Zrotation;
  return std::nullopt;
}

EulerOrder Joint::rotation_order() const {
  std::string axes;
  for (Channel c : channels) {
    if (c == Channel::Xrotation) axes += 'X';
    if (c == Channel::Yrotation) axes += 'Y';
    if (c == Channel::Zrotation) axes += 'Z';
  }
  if (axes.empty()) return EulerOrder("ZXY");
  if (axes.size() != 3) throw DataError("joint " + name + " must declare zero or three rotation channels");
  return EulerOrder(axes);
}

bool Joint::has_rotation() const {
  return std::any_of(channels.begin(), channels.end(), [](Channel c) {
    return c == Channel::Xrotation || c == Channel::Yrotation || c == Channel::Zrotation;
  });
}

int Skeleton::find(std::string_view name) const {
  for (int i = 0; i < size(); ++i) {
    if (joints[static_cast<std::size_t>(i)].name == name) return i;
  }
  return -1;
}

int Skeleton::channel_count() const {
  int n = 0;
  for (const auto& j : joints) n += static_cast<int>(j.channels.size());
  return n;
}

int Skeleton::channel_offset(int j) const {
  int n = 0;
  for (int i = 0; i < j; ++i) n += static_cast<int>(joints[static_cast<std::size_t>(i)].channels.size());
  return n;
}

void Skeleton::validate() const {
  if (joints.empty()) throw DataError("skeleton has no joints");
  if (joints[0].parent != -1) throw DataError("first joint must be the root");
  for (int i = 1; i < size(); ++i) {
    const int p = joints[static_cast<std::size_t>(i)].parent;
    if (p < 0 || p >= i) throw DataError("joint " + joints[static_cast<std::size_t>(i)].name + " is not topologically ordered");
  }
}

namespace {

const std::vector<Channel> kRootChannels = {Channel::Xposition, Channel::Yposition, Channel::Zposition,
                                            Channel::Zrotation, Channel::Xrotation, Channel::Yrotation};
const std::vector<Channel> kJointChannels = {Channel::Zrotation, Channel::Xrotation, Channel::Yrotation};

Skeleton build_canonical() {
  Skeleton s;
  s.id = kCanonicalSkeletonId;
  auto add = [&s](const std::string& name, int parent, Vec3 offset) {
    Joint j;
    j.name = name;
    j.parent = parent;
    j.offset = offset;
    j.channels = parent < 0 ? kRootChannels : kJointChannels;
    s.joints.push_back(std::move(j));
  };
  add("pelvis", -1, {0.0, 0.93, 0.0});
  add("left_hip", 0, {0.06, -0.09, 0.0});
  add("right_hip", 0, {-0.06, -0.09, 0.0});
  add("spine1", 0, {0.0, 0.11, -0.01});
  add("left_knee", 1, {0.04, -0.385, 0.0});
  add("right_knee", 2, {-0.04, -0.385, 0.0});
  add("spine2", 3, {0.0, 0.13, 0.0});
  add("left_ankle", 4, {0.0, -0.41, -0.04});
  add("right_ankle", 5, {0.0, -0.41, -0.04});
  add("spine3", 6, {0.0, 0.06, 0.02});
  add("left_foot", 7, {0.02, -0.04, 0.12});
  add("right_foot", 8, {-0.02, -0.04, 0.12});
  add("neck", 9, {0.0, 0.21, -0.03});
  add("left_collar", 9, {0.07, 0.12, -0.01});
  add("right_collar", 9, {-0.07, 0.12, -0.01});
  add("head", 12, {0.0, 0.09, 0.05});
  add("left_shoulder", 13, {0.11, 0.03, -0.01});
  add("right_shoulder", 14, {-0.11, 0.03, -0.01});
  add("left_elbow", 16, {0.26, 0.0, -0.02});
  add("right_elbow", 17, {-0.26, 0.0, -0.02});
  add("left_wrist", 18, {0.25, 0.0, 0.0});
  add("right_wrist", 19, {-0.25, 0.0, 0.0});
  add("jaw", 15, {0.0, -0.02, 0.02});
  add("left_eye_smplhf", 15, {0.03, 0.06, 0.08});
  add("right_eye_smplhf", 15, {-0.03, 0.06, 0.08});

  struct Finger {
    const char* name;
    Vec3 base;
    Vec3 mid;
    Vec3 tip;
  };
  const Finger fingers[] = {
      {"index", {0.095, 0.005, 0.025}, {0.035, 0.0, 0.0}, {0.025, 0.0, 0.0}},
      {"middle", {0.1, 0.005, 0.005}, {0.04, 0.0, 0.0}, {0.027, 0.0, 0.0}},
      {"pinky", {0.085, 0.0, -0.035}, {0.025, 0.0, 0.0}, {0.02, 0.0, 0.0}},
      {"ring", {0.095, 0.003, -0.015}, {0.035, 0.0, 0.0}, {0.025, 0.0, 0.0}},
      {"thumb", {0.025, -0.01, 0.03}, {0.03, 0.0, 0.025}, {0.025, 0.0, 0.015}},
  };
  for (int side = 0; side < 2; ++side) {
    const std::string prefix = side == 0 ? "left_" : "right_";
    const int wrist = side == 0 ? joint::left_wrist : joint::right_wrist;
    const Vec3 mirror(side == 0 ? 1.0 : -1.0, 1.0, 1.0);
    for (const auto& f : fingers) {
      const int base = s.size();
      add(prefix + f.name + "1", wrist, f.base.cwiseProduct(mirror));
      add(prefix + f.name + "2", base, f.mid.cwiseProduct(mirror));
      add(prefix + f.name + "3", base + 1, f.tip.cwiseProduct(mirror));
      s.joints.back().end_site = Vec3(0.02, 0.0, 0.0).cwiseProduct(mirror);
    }
  }
  for (int leaf : {joint::left_foot, joint::right_foot}) s.joints[static_cast<std::size_t>(leaf)].end_site = Vec3(0.0, 0.0, 0.05);
  s.joints[joint::jaw].end_site = Vec3(0.0, -0.05, 0.05);
  s.joints[joint::left_eye].end_site = Vec3(0.0, 0.0, 0.02);
  s.joints[joint::right_eye].end_site = Vec3(0.0, 0.0, 0.02);
  s.validate();
  return s;
}

BodyPartition build_partition() {
  BodyPartition p;
  for (int j = 0; j < kCanonicalJoints; ++j) {
    (j >= joint::left_hand_first ? p.fingers : p.limbs).push_back(j);
  }
  p.spine3_cut = {joint::pelvis,     joint::left_hip,    joint::right_hip,  joint::spine1,
                  joint::left_knee,  joint::right_knee,  joint::spine2,     joint::left_ankle,
                  joint::right_ankle, joint::spine3,     joint::left_foot,  joint::right_foot};
  return p;
}

}  // namespace

const Skeleton& canonical_skeleton() {
  static const Skeleton s = build_canonical();
  return s;
}

const BodyPartition& BodyPartition::canonical() {
  static const BodyPartition p = build_partition();
  return p;
}

}  // namespace cogest::motion
