#pragma once

#include <fstream>
#include <string>

#include "joem/error.hpp"
#include "joem/feature_map.hpp"

namespace joem {

/// Write a label mask as a binary PGM (P5), one byte per pixel = class id.
inline void write_pgm(const LabelMask& mask, const std::string& path) {
  for (int id : mask.ids) {
    if (id < 0 || id > 255) {
      fail(ErrorKind::invalid_input,
           "write_pgm: class id " + std::to_string(id) + " does not fit a byte");
    }
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::io_failure, "cannot write " + path);
  out << "P5\n" << mask.width << " " << mask.height << "\n255\n";
  for (int id : mask.ids) {
    const char byte = static_cast<char>(static_cast<unsigned char>(id));
    out.write(&byte, 1);
  }
  if (!out) fail(ErrorKind::io_failure, "failed while writing " + path);
}

/// CSV export of a mask: one row per image row, comma-separated class ids.
inline void write_mask_csv(const LabelMask& mask, const std::string& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::io_failure, "cannot write " + path);
  for (int i = 0; i < mask.height; ++i) {
    for (int j = 0; j < mask.width; ++j) {
      if (j) out << ',';
      out << mask.at(i, j);
    }
    out << '\n';
  }
}

inline LabelMask read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::io_failure, "cannot open " + path);
  std::string magic;
  in >> magic;
  if (magic != "P5") fail(ErrorKind::io_failure, path + ": expected binary PGM (P5)");
  int width = 0, height = 0, maxval = 0;
  in >> width >> height >> maxval;
  if (!in || width <= 0 || height <= 0 || maxval <= 0 || maxval > 255) {
    fail(ErrorKind::io_failure, path + ": bad PGM header");
  }
  in.get();  // single whitespace byte after the header
  LabelMask mask(height, width);
  for (std::size_t k = 0; k < mask.ids.size(); ++k) {
    char byte = 0;
    if (!in.get(byte)) fail(ErrorKind::io_failure, path + ": truncated PGM data");
    mask.ids[k] = static_cast<unsigned char>(byte);
  }
  return mask;
}

}  // namespace joem
