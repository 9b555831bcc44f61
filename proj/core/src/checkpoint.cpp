#include "speechut/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace speechut {

static_assert(std::endian::native == std::endian::little,
              "checkpoint writer assumes a little-endian host");

namespace {

template <typename T>
void write_pod(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw CheckpointError("truncated checkpoint");
  return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const Params& params, const std::string& metadata) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw CheckpointError("cannot open checkpoint for writing: " + path);
  os.write("SUTC", 4);
  write_pod<uint32_t>(os, kCheckpointVersion);
  write_pod<uint64_t>(os, metadata.size());
  os.write(metadata.data(), static_cast<std::streamsize>(metadata.size()));
  for (const auto& [name, p] : params.map()) {
    write_pod<uint32_t>(os, static_cast<uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_pod<uint32_t>(os, static_cast<uint32_t>(p.value.rank()));
    for (int64_t e : p.value.shape) write_pod<uint64_t>(os, static_cast<uint64_t>(e));
    os.write(reinterpret_cast<const char*>(p.value.v.data()),
             static_cast<std::streamsize>(p.value.v.size() * sizeof(double)));
  }
  if (!os) throw CheckpointError("write failure on checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("cannot open checkpoint: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "SUTC", 4) != 0)
    throw CheckpointError("bad magic in checkpoint: " + path);
  const uint32_t version = read_pod<uint32_t>(is);
  if (version != kCheckpointVersion)
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  const uint64_t meta_len = read_pod<uint64_t>(is);
  Checkpoint ck;
  ck.metadata.resize(meta_len);
  is.read(ck.metadata.data(), static_cast<std::streamsize>(meta_len));
  if (!is) throw CheckpointError("truncated checkpoint metadata");

  while (true) {
    uint32_t name_len;
    is.read(reinterpret_cast<char*>(&name_len), sizeof(name_len));
    if (is.eof()) break;
    if (!is) throw CheckpointError("truncated tensor record");
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    const uint32_t rank = read_pod<uint32_t>(is);
    std::vector<int64_t> shape(rank);
    for (uint32_t i = 0; i < rank; ++i) shape[i] = static_cast<int64_t>(read_pod<uint64_t>(is));
    Tensor t = Tensor::zeros(shape);
    is.read(reinterpret_cast<char*>(t.v.data()), static_cast<std::streamsize>(t.v.size() * sizeof(double)));
    if (!is) throw CheckpointError("truncated tensor payload for " + name);
    ck.params.add(name, std::move(t));
  }
  return ck;
}

}  // namespace speechut
