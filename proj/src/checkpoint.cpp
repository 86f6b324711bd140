#include "stril/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace stril {

static_assert(std::endian::native == std::endian::little,
              "checkpoint writer assumes a little-endian host");

namespace {

void write_u32(std::ostream& os, std::uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), 4);
}

std::uint32_t read_u32(std::istream& is) {
  std::uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), 4);
  if (!is) throw std::runtime_error("checkpoint: truncated integer field");
  return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const ParamStore& params) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("checkpoint: cannot open '" + path + "' for writing");
  os.write(kCheckpointMagic, sizeof(kCheckpointMagic) - 1);
  write_u32(os, kCheckpointVersion);
  for (const auto& [name, t] : params) {
    write_u32(os, std::uint32_t(name.size()));
    os.write(name.data(), std::streamsize(name.size()));
    write_u32(os, std::uint32_t(t.rank()));
    for (int d : t.shape()) write_u32(os, std::uint32_t(d));
    os.write(reinterpret_cast<const char*>(t.data()),
             std::streamsize(t.numel() * sizeof(double)));
  }
  if (!os) throw std::runtime_error("checkpoint: write to '" + path + "' failed");
}

ParamStore load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot open '" + path + "'");
  char magic[sizeof(kCheckpointMagic) - 1];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
    throw std::runtime_error("checkpoint: bad magic in '" + path + "'");
  const std::uint32_t version = read_u32(is);
  if (version != kCheckpointVersion)
    throw std::runtime_error("checkpoint: unsupported format version " +
                             std::to_string(version));
  ParamStore params;
  while (true) {
    std::uint32_t name_len = 0;
    is.read(reinterpret_cast<char*>(&name_len), 4);
    if (is.eof()) break;
    if (!is) throw std::runtime_error("checkpoint: truncated record header");
    std::string name(name_len, '\0');
    is.read(name.data(), std::streamsize(name_len));
    const std::uint32_t rank = read_u32(is);
    std::vector<int> shape(rank);
    std::size_t numel = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
      shape[i] = int(read_u32(is));
      numel *= std::size_t(shape[i]);
    }
    std::vector<double> data(numel);
    is.read(reinterpret_cast<char*>(data.data()),
            std::streamsize(numel * sizeof(double)));
    if (!is) throw std::runtime_error("checkpoint: truncated payload for '" + name + "'");
    params.emplace(std::move(name), Tensor(std::move(shape), std::move(data)));
  }
  return params;
}

}  // namespace stril
