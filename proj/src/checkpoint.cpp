#include "repflow/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "repflow/errors.hpp"
#include "repflow/pnm.hpp"

namespace repflow {

namespace {

constexpr char kMagic[4] = {'R', 'F', 'W', '1'};

static_assert(sizeof(double) == 8);

template <class T>
void append(std::vector<char>& buf, const T& v) {
  const std::size_t at = buf.size();
  buf.resize(at + sizeof(T));
  std::memcpy(buf.data() + at, &v, sizeof(T));
}

template <class T>
T take(const std::vector<char>& buf, std::size_t& at, const std::string& path) {
  if (at + sizeof(T) > buf.size()) throw IoError(path + ": truncated checkpoint");
  T v;
  std::memcpy(&v, buf.data() + at, sizeof(T));
  at += sizeof(T);
  return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const std::vector<NamedTensor>& tensors) {
  // manifest size must be known before offsets can be assigned
  std::size_t manifest_size = 4 + 8;
  for (const auto& t : tensors) {
    if (t.data.size() != t.element_count())
      throw IoError(path + ": tensor '" + t.name + "' data/dims mismatch");
    manifest_size += 4 + t.name.size() + 4 + 8 * t.dims.size() + 8;
  }

  std::vector<char> buf;
  buf.reserve(manifest_size);
  buf.insert(buf.end(), kMagic, kMagic + 4);
  append(buf, static_cast<std::uint64_t>(tensors.size()));

  std::uint64_t offset = manifest_size;
  for (const auto& t : tensors) {
    append(buf, static_cast<std::uint32_t>(t.name.size()));
    buf.insert(buf.end(), t.name.begin(), t.name.end());
    append(buf, static_cast<std::uint32_t>(t.dims.size()));
    for (auto d : t.dims) append(buf, d);
    append(buf, offset);
    offset += 8 * t.data.size();
  }
  for (const auto& t : tensors) {
    const std::size_t at = buf.size();
    buf.resize(at + 8 * t.data.size());
    std::memcpy(buf.data() + at, t.data.data(), 8 * t.data.size());
  }
  write_file_atomic(path, buf.data(), buf.size());
}

std::vector<NamedTensor> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path + ": cannot open");
  std::vector<char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  std::size_t at = 0;
  if (buf.size() < 12 || std::memcmp(buf.data(), kMagic, 4) != 0)
    throw IoError(path + ": bad magic (not a checkpoint)");
  at = 4;
  const auto count = take<std::uint64_t>(buf, at, path);
  if (count > (1u << 20)) throw IoError(path + ": implausible tensor count");

  std::vector<NamedTensor> tensors(count);
  std::vector<std::uint64_t> offsets(count);
  for (std::size_t i = 0; i < count; ++i) {
    const auto name_len = take<std::uint32_t>(buf, at, path);
    if (at + name_len > buf.size()) throw IoError(path + ": truncated name");
    tensors[i].name.assign(buf.data() + at, name_len);
    at += name_len;
    const auto rank = take<std::uint32_t>(buf, at, path);
    if (rank > 8) throw IoError(path + ": implausible rank");
    tensors[i].dims.resize(rank);
    for (auto& d : tensors[i].dims) d = take<std::uint64_t>(buf, at, path);
    offsets[i] = take<std::uint64_t>(buf, at, path);
  }
  for (std::size_t i = 0; i < count; ++i) {
    const std::uint64_t n = tensors[i].element_count();
    if (offsets[i] + 8 * n > buf.size()) throw IoError(path + ": payload out of bounds");
    tensors[i].data.resize(n);
    std::memcpy(tensors[i].data.data(), buf.data() + offsets[i], 8 * n);
  }
  return tensors;
}

}  // namespace repflow
