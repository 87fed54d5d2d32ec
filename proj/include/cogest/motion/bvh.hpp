#ifndef COGEST_MOTION_BVH_HPP_
#define COGEST_MOTION_BVH_HPP_

#include <filesystem>
#include <istream>
#include <string>

#include "cogest/core/types.hpp"
#include "cogest/motion/skeleton.hpp"

namespace cogest::motion {

/// Channel values exactly as stored in a BVH MOTION block: one row per frame,
/// one column per declared channel (degrees for rotations, skeleton units
/// for positions).
struct RawMotion {
  Skeleton skeleton;
  MatrixXd frames;
  double frame_time = 1.0 / 20.0;

  int frame_count() const { return static_cast<int>(frames.rows()); }
  /// Frame rate rounded to the nearest integer, e.g. 0.0166667 s -> 60.
  double fps() const;
  /// Root position channels (offset not included) of frame `f`.
  Vec3 root_channels(int f) const;
};

/// Throws ParseError (with line number) on malformed text and DataError when
/// a frame row does not match the declared channel count.
RawMotion parse_bvh(std::istream& in);
RawMotion parse_bvh_string(const std::string& text);
RawMotion load_bvh(const std::filesystem::path& path);

/// Shortest round-trip formatting of every value, so parse(serialize(m))
/// reproduces m exactly.
std::string serialize_bvh(const RawMotion& m);
void save_bvh(const std::filesystem::path& path, const RawMotion& m);

}  // namespace cogest::motion

#endif  // COGEST_MOTION_BVH_HPP_
