#include "repflow/flo.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

#include "repflow/errors.hpp"
#include "repflow/pnm.hpp"

namespace repflow {

static_assert(sizeof(float) == 4 && sizeof(std::int32_t) == 4);

void write_flo(const std::string& path, const FloData& flow) {
  if (flow.width < 1 || flow.height < 1)
    throw IoError(path + ": flow dimensions must be >= 1");
  const std::size_t n = static_cast<std::size_t>(flow.width) * flow.height * 2;
  if (flow.uv.size() != n) throw IoError(path + ": flow body size mismatch");

  std::vector<char> buf(12 + n * 4);
  const std::int32_t w = flow.width, h = flow.height;
  std::memcpy(buf.data(), &kFloMagic, 4);
  std::memcpy(buf.data() + 4, &w, 4);
  std::memcpy(buf.data() + 8, &h, 4);
  std::memcpy(buf.data() + 12, flow.uv.data(), n * 4);
  write_file_atomic(path, buf.data(), buf.size());
}

FloData read_flo(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path + ": cannot open");

  float magic = 0;
  std::int32_t w = 0, h = 0;
  in.read(reinterpret_cast<char*>(&magic), 4);
  in.read(reinterpret_cast<char*>(&w), 4);
  in.read(reinterpret_cast<char*>(&h), 4);
  if (!in) throw IoError(path + ": truncated header");
  if (magic != kFloMagic) throw IoError(path + ": bad magic (not a flow file)");
  if (w < 1 || h < 1 || w > (1 << 20) || h > (1 << 20))
    throw IoError(path + ": implausible dimensions");

  FloData flow;
  flow.width = w;
  flow.height = h;
  const std::size_t n = static_cast<std::size_t>(w) * h * 2;
  flow.uv.resize(n);
  in.read(reinterpret_cast<char*>(flow.uv.data()), static_cast<std::streamsize>(n * 4));
  if (static_cast<std::size_t>(in.gcount()) != n * 4) throw IoError(path + ": truncated body");
  return flow;
}

namespace {

template <class T>
FloData to_flo_impl(const FlowField<T>& field) {
  FloData flow;
  flow.width = field.width();
  flow.height = field.height();
  flow.uv.resize(static_cast<std::size_t>(flow.width) * flow.height * 2);
  for (int y = 0; y < flow.height; ++y) {
    for (int x = 0; x < flow.width; ++x) {
      const std::size_t i = (static_cast<std::size_t>(y) * flow.width + x) * 2;
      flow.uv[i] = static_cast<float>(field.u_x(0, y, x));
      flow.uv[i + 1] = static_cast<float>(field.u_y(0, y, x));
    }
  }
  return flow;
}

}  // namespace

FloData to_flo(const FlowField<float>& field) { return to_flo_impl(field); }
FloData to_flo(const FlowField<double>& field) { return to_flo_impl(field); }

FlowField<float> from_flo(const FloData& flow) {
  FlowField<float> field(flow.height, flow.width);
  for (int y = 0; y < flow.height; ++y) {
    for (int x = 0; x < flow.width; ++x) {
      const std::size_t i = (static_cast<std::size_t>(y) * flow.width + x) * 2;
      field.u_x(0, y, x) = flow.uv[i];
      field.u_y(0, y, x) = flow.uv[i + 1];
    }
  }
  return field;
}

}  // namespace repflow
