#include "priorlane/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <unordered_set>

#include "priorlane/errors.hpp"

namespace priorlane {

namespace {

static_assert(std::endian::native == std::endian::little ||
                  std::endian::native == std::endian::big,
              "mixed-endian hosts unsupported");

constexpr bool kHostLE = std::endian::native == std::endian::little;

void put_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v),
                        static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4))
    throw DataError("checkpoint: truncated file");
  return uint32_t(b[0]) | uint32_t(b[1]) << 8 | uint32_t(b[2]) << 16 |
         uint32_t(b[3]) << 24;
}

void put_f64_array(std::ostream& os, const double* v, size_t n) {
  if (kHostLE) {
    os.write(reinterpret_cast<const char*>(v), std::streamsize(n * 8));
    return;
  }
  for (size_t i = 0; i < n; ++i) {
    uint64_t u = std::bit_cast<uint64_t>(v[i]);
    unsigned char b[8];
    for (int s = 0; s < 8; ++s) b[s] = static_cast<unsigned char>(u >> (8 * s));
    os.write(reinterpret_cast<const char*>(b), 8);
  }
}

void get_f64_array(std::istream& is, double* v, size_t n) {
  if (kHostLE) {
    if (!is.read(reinterpret_cast<char*>(v), std::streamsize(n * 8)))
      throw DataError("checkpoint: truncated data block");
    return;
  }
  for (size_t i = 0; i < n; ++i) {
    unsigned char b[8];
    if (!is.read(reinterpret_cast<char*>(b), 8))
      throw DataError("checkpoint: truncated data block");
    uint64_t u = 0;
    for (int s = 0; s < 8; ++s) u |= uint64_t(b[s]) << (8 * s);
    v[i] = std::bit_cast<double>(u);
  }
}

}  // namespace

void save_checkpoint(const std::string& path, const ParamMap& params) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("checkpoint: cannot open '" + path + "' for write");
  os.write("PLCK", 4);
  put_u32(os, kCheckpointVersion);
  put_u32(os, uint32_t(params.size()));
  for (const auto& [name, t] : params.items) {
    put_u32(os, uint32_t(name.size()));
    os.write(name.data(), std::streamsize(name.size()));
    put_u32(os, uint32_t(t.shape().size()));
    for (int e : t.shape()) put_u32(os, uint32_t(e));
    put_f64_array(os, t.data().data(), t.data().size());
  }
  if (!os) throw IoError("checkpoint: write to '" + path + "' failed");
}

void load_checkpoint(const std::string& path, ParamMap& params) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("checkpoint: cannot open '" + path + "'");
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, "PLCK", 4) != 0)
    throw DataError("checkpoint: bad magic in '" + path + "'");
  const uint32_t version = get_u32(is);
  if (version != kCheckpointVersion)
    throw DataError("checkpoint: unsupported version " +
                    std::to_string(version));
  const uint32_t count = get_u32(is);
  std::unordered_set<std::string> loaded;
  for (uint32_t i = 0; i < count; ++i) {
    const uint32_t name_len = get_u32(is);
    std::string name(name_len, '\0');
    if (!is.read(name.data(), name_len))
      throw DataError("checkpoint: truncated name");
    const uint32_t rank = get_u32(is);
    Shape shape(rank);
    for (uint32_t r = 0; r < rank; ++r) shape[r] = int(get_u32(is));
    Tensor* dst = nullptr;
    for (auto& [k, t] : params.items)
      if (k == name) dst = &t;
    if (!dst)
      throw DataError("checkpoint: unknown parameter '" + name + "'");
    if (dst->shape() != shape)
      throw DataError("checkpoint: parameter '" + name + "' has shape " +
                      shape_str(shape) + ", expected " +
                      shape_str(dst->shape()));
    get_f64_array(is, dst->data().data(), dst->data().size());
    loaded.insert(name);
  }
  for (const auto& [k, t] : params.items)
    if (!loaded.count(k))
      throw DataError("checkpoint: missing parameter '" + k + "'");
}

}  // namespace priorlane
