#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace repflow {

// Checkpoint container, magic "RFW1". Layout, all integers little-endian:
//
//   bytes 0..3   magic "RFW1"
//   u64          tensor count
//   per tensor:  u32 name length, name bytes, u32 rank, u64 dims[rank],
//                u64 absolute byte offset of this tensor's payload
//   payloads:    raw little-endian float64 values, contiguous per tensor
//
// Round-trips are bit-exact: load(save(x)) == x byte for byte.
struct NamedTensor {
  std::string name;
  std::vector<std::uint64_t> dims;
  std::vector<double> data;  // element count = product of dims

  std::uint64_t element_count() const {
    std::uint64_t n = 1;
    for (auto d : dims) n *= d;
    return n;
  }
};

void save_checkpoint(const std::string& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> load_checkpoint(const std::string& path);

}  // namespace repflow
