#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "joem/error.hpp"

namespace joem {

/// One named dense tensor inside the binary container.
struct NamedTensor {
  std::string name;
  std::vector<std::uint64_t> dims;
  std::vector<double> data;

  std::uint64_t element_count() const {
    std::uint64_t n = 1;
    for (std::uint64_t d : dims) n *= d;
    return n;
  }
};

/// Little-endian binary container used for both model checkpoints and
/// dataset feature files:
///   magic "JOEMTF01" | u32 tensor count |
///   per tensor: u32 name length | name | u32 rank | u64 dims[] | f64 data[]
struct TensorFile {
  std::vector<NamedTensor> tensors;

  const NamedTensor& require(const std::string& name) const {
    for (const NamedTensor& t : tensors) {
      if (t.name == name) return t;
    }
    fail(ErrorKind::io_failure, "tensor file: missing tensor `" + name + "`");
  }

  bool contains(const std::string& name) const {
    for (const NamedTensor& t : tensors) {
      if (t.name == name) return true;
    }
    return false;
  }
};

namespace detail {

inline constexpr char kTensorMagic[8] = {'J', 'O', 'E', 'M', 'T', 'F', '0', '1'};

inline void require_little_endian() {
  const std::uint32_t probe = 1;
  char byte0 = 0;
  std::memcpy(&byte0, &probe, 1);
  if (byte0 != 1) {
    fail(ErrorKind::io_failure, "tensor file io requires a little-endian host");
  }
}

template <typename T>
void write_raw(std::ofstream& out, const T& value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_raw(std::ifstream& in, const std::string& path) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) fail(ErrorKind::io_failure, path + ": truncated tensor file");
  return value;
}

}  // namespace detail

inline void write_tensor_file(const std::string& path, const TensorFile& file) {
  detail::require_little_endian();
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::io_failure, "cannot write " + path);
  out.write(detail::kTensorMagic, sizeof(detail::kTensorMagic));
  detail::write_raw(out, static_cast<std::uint32_t>(file.tensors.size()));
  for (const NamedTensor& t : file.tensors) {
    if (t.data.size() != t.element_count()) {
      fail(ErrorKind::invalid_input,
           "tensor `" + t.name + "`: data size does not match dims");
    }
    detail::write_raw(out, static_cast<std::uint32_t>(t.name.size()));
    out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    detail::write_raw(out, static_cast<std::uint32_t>(t.dims.size()));
    for (std::uint64_t d : t.dims) detail::write_raw(out, d);
    out.write(reinterpret_cast<const char*>(t.data.data()),
              static_cast<std::streamsize>(t.data.size() * sizeof(double)));
  }
  if (!out) fail(ErrorKind::io_failure, "failed while writing " + path);
}

inline TensorFile read_tensor_file(const std::string& path) {
  detail::require_little_endian();
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::io_failure, "cannot open " + path);
  char magic[8] = {};
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, detail::kTensorMagic, sizeof(magic)) != 0) {
    fail(ErrorKind::io_failure, path + ": not a joem tensor file");
  }
  const auto count = detail::read_raw<std::uint32_t>(in, path);
  TensorFile file;
  file.tensors.reserve(count);
  for (std::uint32_t k = 0; k < count; ++k) {
    NamedTensor t;
    const auto name_len = detail::read_raw<std::uint32_t>(in, path);
    t.name.resize(name_len);
    in.read(t.name.data(), name_len);
    const auto rank = detail::read_raw<std::uint32_t>(in, path);
    t.dims.resize(rank);
    for (std::uint32_t d = 0; d < rank; ++d) {
      t.dims[d] = detail::read_raw<std::uint64_t>(in, path);
    }
    const std::uint64_t n = t.element_count();
    t.data.resize(n);
    in.read(reinterpret_cast<char*>(t.data.data()),
            static_cast<std::streamsize>(n * sizeof(double)));
    if (!in) fail(ErrorKind::io_failure, path + ": truncated tensor data");
    file.tensors.push_back(std::move(t));
  }
  return file;
}

}  // namespace joem
