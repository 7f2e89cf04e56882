#include "repflow/pnm.hpp"

#include <cctype>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "repflow/errors.hpp"

namespace repflow {

namespace {

// Reads the next header token, skipping whitespace and '#' comments.
std::string next_token(std::istream& in, const std::string& path) {
  int ch = in.get();
  while (ch != EOF) {
    if (ch == '#') {
      while (ch != EOF && ch != '\n') ch = in.get();
    } else if (!std::isspace(ch)) {
      break;
    }
    ch = in.get();
  }
  if (ch == EOF) throw IoError(path + ": truncated header");
  std::string tok;
  while (ch != EOF && !std::isspace(ch)) {
    tok.push_back(static_cast<char>(ch));
    ch = in.get();
  }
  return tok;
}

int parse_dim(const std::string& tok, const std::string& path, const char* what) {
  try {
    const long v = std::stol(tok);
    if (v < 1 || v > 1 << 20) throw IoError(path + ": bad " + what);
    return static_cast<int>(v);
  } catch (const IoError&) {
    throw;
  } catch (...) {
    throw IoError(path + ": bad " + what + " '" + tok + "'");
  }
}

}  // namespace

ImageU8 read_pnm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path + ": cannot open");

  const std::string magic = next_token(in, path);
  int channels;
  if (magic == "P5")
    channels = 1;
  else if (magic == "P6")
    channels = 3;
  else
    throw IoError(path + ": unsupported format '" + magic + "' (binary P5/P6 only)");

  ImageU8 img;
  img.channels = channels;
  img.width = parse_dim(next_token(in, path), path, "width");
  img.height = parse_dim(next_token(in, path), path, "height");
  const int maxval = parse_dim(next_token(in, path), path, "maxval");
  if (maxval > 255) throw IoError(path + ": only 8-bit images supported (maxval <= 255)");
  // exactly one whitespace byte after maxval, already consumed by next_token

  const std::size_t n = static_cast<std::size_t>(img.width) * img.height * channels;
  img.data.resize(n);
  in.read(reinterpret_cast<char*>(img.data.data()), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n) throw IoError(path + ": truncated pixel data");
  return img;
}

void write_file_atomic(const std::string& path, const void* bytes, std::size_t size) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  fs::path dir = target.parent_path();
  if (dir.empty()) dir = ".";

  std::random_device rd;
  const fs::path tmp = dir / (target.filename().string() + ".tmp" + std::to_string(rd()));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(path + ": cannot open for writing");
    out.write(static_cast<const char*>(bytes), static_cast<std::streamsize>(size));
    if (!out) {
      std::error_code ec;
      fs::remove(tmp, ec);
      throw IoError(path + ": write failed");
    }
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw IoError(path + ": rename failed: " + ec.message());
  }
}

void write_pnm(const std::string& path, const ImageU8& img) {
  if (img.channels != 1 && img.channels != 3)
    throw IoError(path + ": image must have 1 or 3 channels");
  if (img.data.size() != static_cast<std::size_t>(img.width) * img.height * img.channels)
    throw IoError(path + ": image data size mismatch");

  std::ostringstream out;
  out << (img.channels == 1 ? "P5" : "P6") << "\n"
      << img.width << " " << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.data.data()),
            static_cast<std::streamsize>(img.data.size()));
  const std::string buf = out.str();
  write_file_atomic(path, buf.data(), buf.size());
}

}  // namespace repflow
