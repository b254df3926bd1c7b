// SPDX-License-Identifier: Apache-2.0
//
// GDT1 binary tensor records:
//   "GDT1" | u32le n | u32le c | u32le h | u32le w | n*c*h*w f64le (row-major)
//
// Records are always stored in 64-bit precision; f32 tensors are widened on
// write and narrowed on read.

#pragma once

#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "gdn/tensor.hpp"

namespace gdn {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::size_t kGdt1HeaderBytes = 4 + 4 * 4;

template <typename T>
void write_gdt1(std::ostream& out, const BasicTensor<T>& t);

template <typename T>
BasicTensor<T> read_gdt1(std::istream& in);

template <typename T>
void save_gdt1(const std::filesystem::path& path, const BasicTensor<T>& t);

template <typename T>
BasicTensor<T> load_gdt1(const std::filesystem::path& path);

// Byte size of one record with the given shape.
inline std::size_t gdt1_record_bytes(const Shape4& s) { return kGdt1HeaderBytes + 8 * s.size(); }

}  // namespace gdn
