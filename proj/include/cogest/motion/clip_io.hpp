#ifndef COGEST_MOTION_CLIP_IO_HPP_
#define COGEST_MOTION_CLIP_IO_HPP_

#include <filesystem>

#include "cogest/motion/unified.hpp"

namespace cogest::motion {

/// Writes `<stem>.bin` (uint32 rows, uint32 cols, float32 data, little
/// endian) and the `<stem>.json` sidecar.
void save_clip(const std::filesystem::path& stem, const MotionClip& clip);
MotionClip load_clip(const std::filesystem::path& stem);

}  // namespace cogest::motion

#endif  // COGEST_MOTION_CLIP_IO_HPP_
