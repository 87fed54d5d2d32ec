#include "cogest/nn/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "cogest/core/error.hpp"
#include "cogest/core/hash.hpp"

namespace cogest::nn {
namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[8] = {'C', 'G', 'C', 'K', 'P', 'T', '0', '1'};

template <typename T>
void write_pod(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw DataError("truncated checkpoint");
  return v;
}

}  // namespace

void Checkpoint::save(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write checkpoint " + path.string());
  os.write(kMagic, sizeof(kMagic));
  const std::string header = meta.dump();
  write_pod<std::uint64_t>(os, header.size());
  os.write(header.data(), static_cast<std::streamsize>(header.size()));
  write_pod<std::uint64_t>(os, tensors.size());
  for (const auto& [name, m] : tensors) {
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_pod<std::uint64_t>(os, static_cast<std::uint64_t>(m.rows()));
    write_pod<std::uint64_t>(os, static_cast<std::uint64_t>(m.cols()));
    os.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
  }
  if (!os) throw DataError("failed writing checkpoint " + path.string());
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DependencyError("cannot open checkpoint " + path.string());
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) throw DataError(path.string() + " is not a checkpoint");
  Checkpoint ck;
  const auto hlen = read_pod<std::uint64_t>(is);
  std::string header(hlen, '\0');
  is.read(header.data(), static_cast<std::streamsize>(hlen));
  if (!is) throw DataError("truncated checkpoint header");
  ck.meta = nlohmann::json::parse(header);
  const auto count = read_pod<std::uint64_t>(is);
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto nlen = read_pod<std::uint32_t>(is);
    std::string name(nlen, '\0');
    is.read(name.data(), nlen);
    const auto rows = read_pod<std::uint64_t>(is);
    const auto cols = read_pod<std::uint64_t>(is);
    MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    is.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
    if (!is) throw DataError("truncated checkpoint tensor " + name);
    ck.tensors.emplace(std::move(name), std::move(m));
  }
  return ck;
}

std::map<std::string, MatrixXd> Checkpoint::section(const std::string& prefix) const {
  std::map<std::string, MatrixXd> out;
  for (const auto& [name, m] : tensors) {
    if (name.rfind(prefix, 0) == 0) out.emplace(name.substr(prefix.size()), m);
  }
  return out;
}

void Checkpoint::put_section(const std::string& prefix, const std::map<std::string, MatrixXd>& values) {
  for (const auto& [name, m] : values) tensors[prefix + name] = m;
}

std::string Checkpoint::content_hash() const {
  Fnv1a h;
  h.update(meta.dump());
  for (const auto& [name, m] : tensors) {
    h.update(name);
    h.update(std::as_bytes(std::span(m.data(), static_cast<std::size_t>(m.size()))));
  }
  return h.hex();
}

}  // namespace cogest::nn
