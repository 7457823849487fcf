// Copyright (c) 2026 The AdapterForge Authors.
// SPDX-License-Identifier: Apache-2.0

#include "adapterforge/image.hpp"

#include <cctype>
#include <fstream>

#include "adapterforge/error.hpp"

namespace adapterforge {
namespace {

int read_header_int(std::istream& in) {
  int c = in.peek();
  while (c != EOF) {
    if (std::isspace(c)) {
      in.get();
    } else if (c == '#') {
      std::string skip;
      std::getline(in, skip);
    } else {
      break;
    }
    c = in.peek();
  }
  int v = -1;
  if (!(in >> v)) throw Error(ErrorKind::kFormat, "malformed PGM header");
  return v;
}

}  // namespace

void write_pgm(const std::string& path, const Plane8& image) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path);
  out << "P5\n" << image.width << " " << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.pixels.data()),
            static_cast<std::streamsize>(image.pixels.size()));
  if (!out) throw Error(ErrorKind::kIo, "short write to " + path);
}

Plane8 read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot open " + path);
  char magic[2] = {0, 0};
  in.read(magic, 2);
  if (magic[0] != 'P' || magic[1] != '5') throw Error(ErrorKind::kFormat, path + " is not a binary PGM");
  const int w = read_header_int(in);
  const int h = read_header_int(in);
  const int maxval = read_header_int(in);
  if (w <= 0 || h <= 0 || maxval != 255) throw Error(ErrorKind::kFormat, "unsupported PGM " + path);
  in.get();  // single whitespace after maxval
  Plane8 img(h, w);
  in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (in.gcount() != static_cast<std::streamsize>(img.pixels.size())) {
    throw Error(ErrorKind::kFormat, "truncated PGM " + path);
  }
  return img;
}

}  // namespace adapterforge
