#ifndef COGEST_MOTION_RETARGET_HPP_
#define COGEST_MOTION_RETARGET_HPP_

#include <map>
#include <string>
#include <vector>

#include "cogest/core/error.hpp"
#include "cogest/core/kvconfig.hpp"
#include "cogest/motion/bvh.hpp"
#include "cogest/motion/unified.hpp"

namespace cogest::motion {

/// Preprocessing settings read from a key-value file:
///   contact.height = 0.05
///   contact.speed = 0.01
///   target_fps = 20
///   map.<source joint> = <reference joint>
struct ReprConfig {
  ContactConfig contacts;
  double target_fps = 20.0;
  std::map<std::string, std::string> name_map;  // source -> reference

  static ReprConfig from_kv(const KeyValueConfig& kv);
};

class RetargetError : public DataError {
 public:
  RetargetError(const std::string& what, std::vector<std::string> missing)
      : DataError("retarget error: " + what), missing_(std::move(missing)) {}
  const std::vector<std::string>& missing() const { return missing_; }

 private:
  std::vector<std::string> missing_;
};

/// Transfers global joint orientations onto `ref`, scales the root
/// translation by the leg-length ratio, and turns the motion so frame 0 faces
/// +Z. With an empty map joints are matched by name. Reference joints without
/// a source stay at identity, except the first 22 body joints which are
/// required.
RawMotion retarget_and_scale(const RawMotion& m, const Skeleton& ref, const std::map<std::string, std::string>& name_map = {});

/// Nearest-frame resampling.
RawMotion downsample(const RawMotion& m, double target_fps);

/// parse -> retarget -> downsample -> assemble.
MotionClip prepare_bvh_clip(const RawMotion& m, const ReprConfig& cfg);

}  // namespace cogest::motion

#endif  // COGEST_MOTION_RETARGET_HPP_
