#include "ctd/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "ctd/error.hpp"

namespace ctd {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'C', 'T', 'D', 'C'};
constexpr std::uint64_t kMaxMeta = 64ull << 20;
constexpr std::uint32_t kMaxName = 4096;

template <typename T>
void Put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T Take(std::istream& is, const char* what) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof v))
    throw DataError("bad_checkpoint", std::string("truncated checkpoint reading ") + what);
  return v;
}

}  // namespace

const CheckpointEntry* Checkpoint::Find(const std::string& name) const {
  for (const auto& e : entries)
    if (e.name == name) return &e;
  return nullptr;
}

void WriteCheckpoint(std::ostream& os, const Checkpoint& ckpt) {
  os.write(kMagic, 4);
  Put<std::uint32_t>(os, kCheckpointVersion);
  const std::string meta = ckpt.meta.dump();
  Put<std::uint64_t>(os, meta.size());
  os.write(meta.data(), static_cast<std::streamsize>(meta.size()));
  Put<std::uint32_t>(os, static_cast<std::uint32_t>(ckpt.entries.size()));
  for (const auto& e : ckpt.entries) {
    Put<std::uint32_t>(os, static_cast<std::uint32_t>(e.name.size()));
    os.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
    Put<std::uint32_t>(os, static_cast<std::uint32_t>(e.value.rank()));
    for (std::size_t d : e.value.shape()) Put<std::uint64_t>(os, d);
    os.write(reinterpret_cast<const char*>(e.value.data().data()),
             static_cast<std::streamsize>(e.value.size() * sizeof(double)));
  }
  if (!os) throw DataError("io", "failed writing checkpoint");
}

Checkpoint ReadCheckpoint(std::istream& is) {
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
    throw DataError("bad_checkpoint", "not a checkpoint (bad magic)");
  const auto version = Take<std::uint32_t>(is, "version");
  if (version != kCheckpointVersion)
    throw DataError("bad_version", "unsupported checkpoint version " + std::to_string(version));
  const auto meta_len = Take<std::uint64_t>(is, "metadata length");
  if (meta_len > kMaxMeta) throw DataError("bad_checkpoint", "metadata block too large");
  std::string meta(meta_len, '\0');
  if (!is.read(meta.data(), static_cast<std::streamsize>(meta_len)))
    throw DataError("bad_checkpoint", "truncated checkpoint metadata");
  Checkpoint ckpt;
  try {
    ckpt.meta = nlohmann::json::parse(meta);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError("bad_checkpoint", std::string("metadata: ") + e.what());
  }
  const auto count = Take<std::uint32_t>(is, "entry count");
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = Take<std::uint32_t>(is, "name length");
    if (name_len > kMaxName) throw DataError("bad_checkpoint", "entry name too long");
    std::string name(name_len, '\0');
    if (!is.read(name.data(), name_len)) throw DataError("bad_checkpoint", "truncated entry name");
    const auto rank = Take<std::uint32_t>(is, "rank");
    if (rank < 1 || rank > 3)
      throw DataError("bad_checkpoint", name + ": rank " + std::to_string(rank) + " unsupported");
    Shape shape;
    std::uint64_t total = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      const auto dim = Take<std::uint64_t>(is, "dims");
      if (dim == 0 || dim > (1ull << 32)) throw DataError("bad_checkpoint", name + ": bad dimension");
      total *= dim;
      if (total > (1ull << 32)) throw DataError("bad_checkpoint", name + ": entry too large");
      shape.push_back(dim);
    }
    Tensor value(shape);
    if (!is.read(reinterpret_cast<char*>(value.data().data()),
                 static_cast<std::streamsize>(total * sizeof(double))))
      throw DataError("bad_checkpoint", name + ": payload shorter than its dims");
    ckpt.entries.push_back({std::move(name), std::move(value)});
  }
  if (is.peek() != std::char_traits<char>::eof())
    throw DataError("bad_checkpoint", "trailing bytes after last entry");
  return ckpt;
}

void SaveCheckpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("io", "cannot write " + path);
  WriteCheckpoint(os, ckpt);
}

Checkpoint LoadCheckpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("io", "cannot open " + path);
  return ReadCheckpoint(is);
}

}  // namespace ctd
