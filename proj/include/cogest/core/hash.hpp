#ifndef COGEST_CORE_HASH_HPP_
#define COGEST_CORE_HASH_HPP_

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>

namespace cogest {

// FNV-1a 64; content fingerprints for manifests, not a security primitive.
class Fnv1a {
 public:
  void update(std::span<const std::byte> bytes);
  void update(std::string_view s) { update(std::as_bytes(std::span(s.data(), s.size()))); }
  std::uint64_t digest() const { return h_; }
  std::string hex() const;

 private:
  std::uint64_t h_ = 0xcbf29ce484222325ULL;
};

std::string hash_string(std::string_view s);
std::string hash_file(const std::filesystem::path& p);

}  // namespace cogest

#endif  // COGEST_CORE_HASH_HPP_
