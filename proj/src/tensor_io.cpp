// SPDX-License-Identifier: Apache-2.0
#include "gdn/tensor_io.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>

namespace gdn {

namespace {

void put_u32(std::ostream& out, std::uint32_t v) {
  std::array<char, 4> b{};
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xffu);
  out.write(b.data(), 4);
}

std::uint32_t get_u32(std::istream& in) {
  std::array<unsigned char, 4> b{};
  if (!in.read(reinterpret_cast<char*>(b.data()), 4)) throw FormatError("GDT1: truncated header");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void put_f64(std::ostream& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  std::array<char, 8> b{};
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((bits >> (8 * i)) & 0xffu);
  out.write(b.data(), 8);
}

double decode_f64(const unsigned char* b) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return std::bit_cast<double>(bits);
}

std::uint32_t checked_dim(std::size_t d) {
  if (d > std::numeric_limits<std::uint32_t>::max()) throw FormatError("GDT1: dimension exceeds 32 bits");
  return static_cast<std::uint32_t>(d);
}

}  // namespace

template <typename T>
void write_gdt1(std::ostream& out, const BasicTensor<T>& t) {
  if (t.empty()) throw FormatError("GDT1: cannot write an empty tensor");
  out.write("GDT1", 4);
  put_u32(out, checked_dim(t.n()));
  put_u32(out, checked_dim(t.c()));
  put_u32(out, checked_dim(t.h()));
  put_u32(out, checked_dim(t.w()));
  for (T v : t.values()) put_f64(out, static_cast<double>(v));
  if (!out) throw FormatError("GDT1: write failed");
}

template <typename T>
BasicTensor<T> read_gdt1(std::istream& in) {
  std::array<char, 4> magic{};
  if (!in.read(magic.data(), 4)) throw FormatError("GDT1: truncated header");
  if (std::memcmp(magic.data(), "GDT1", 4) != 0) throw FormatError("GDT1: bad magic");
  Shape4 s;
  s.n = get_u32(in);
  s.c = get_u32(in);
  s.h = get_u32(in);
  s.w = get_u32(in);
  if (s.size() == 0) throw FormatError("GDT1: zero dimension");
  std::vector<unsigned char> raw(8 * s.size());
  if (!in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()))) {
    throw FormatError("GDT1: truncated payload for shape " + to_string(s));
  }
  std::vector<T> data(s.size());
  for (std::size_t i = 0; i < data.size(); ++i) data[i] = static_cast<T>(decode_f64(raw.data() + 8 * i));
  return BasicTensor<T>(s, std::move(data));
}

template <typename T>
void save_gdt1(const std::filesystem::path& path, const BasicTensor<T>& t) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  write_gdt1(out, t);
}

template <typename T>
BasicTensor<T> load_gdt1(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return read_gdt1<T>(in);
}

template void write_gdt1<float>(std::ostream&, const BasicTensor<float>&);
template void write_gdt1<double>(std::ostream&, const BasicTensor<double>&);
template BasicTensor<float> read_gdt1<float>(std::istream&);
template BasicTensor<double> read_gdt1<double>(std::istream&);
template void save_gdt1<float>(const std::filesystem::path&, const BasicTensor<float>&);
template void save_gdt1<double>(const std::filesystem::path&, const BasicTensor<double>&);
template BasicTensor<float> load_gdt1<float>(const std::filesystem::path&);
template BasicTensor<double> load_gdt1<double>(const std::filesystem::path&);

}  // namespace gdn
