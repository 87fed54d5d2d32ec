#ifndef COGEST_NN_CHECKPOINT_HPP_
#define COGEST_NN_CHECKPOINT_HPP_

#include <filesystem>
#include <map>
#include <string>

#include <json.hpp>

#include "cogest/core/types.hpp"

namespace cogest::nn {

/// Versioned container: a JSON header plus named float64 tensors.
///
/// Layout (little-endian): "CGCKPT01", u64 header length, header bytes,
/// u64 tensor count, then per tensor: u32 name length, name, u64 rows,
/// u64 cols, rows*cols f64 in row-major order.
struct Checkpoint {
  nlohmann::json meta = nlohmann::json::object();
  std::map<std::string, MatrixXd> tensors;

  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);

  /// Tensors with `prefix` stripped, e.g. "encoder." -> names below it.
  std::map<std::string, MatrixXd> section(const std::string& prefix) const;
  void put_section(const std::string& prefix, const std::map<std::string, MatrixXd>& values);

  /// Hash over header and tensor bytes; identifies the checkpoint in manifests.
  std::string content_hash() const;
};

}  // namespace cogest::nn

#endif  // COGEST_NN_CHECKPOINT_HPP_
