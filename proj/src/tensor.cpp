// SPDX-License-Identifier: Apache-2.0
#include "gdn/tensor.hpp"

#include "gdn/kernels/parallel.hpp"

namespace gdn {

std::string to_string(const Shape4& s) {
  return "(" + std::to_string(s.n) + "," + std::to_string(s.c) + "," + std::to_string(s.h) + "," +
         std::to_string(s.w) + ")";
}

template <typename T>
BasicMatrix<T> matmul(const BasicMatrix<T>& a, const BasicMatrix<T>& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul shape mismatch: " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                     " times " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  }
  BasicMatrix<T> c(a.rows(), b.cols());
  kernels::parallel::matmul<T>(a.values(), b.values(), c.values(), a.rows(), a.cols(), b.cols());
  return c;
}

template <typename T>
BasicMatrix<T> transpose(const BasicMatrix<T>& a) {
  BasicMatrix<T> t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

template <typename T>
BasicTensor<T> elementwise(const BasicTensor<T>& a, const BasicTensor<T>& b, ElementwiseOp op) {
  if (a.shape() != b.shape()) {
    throw ShapeError("elementwise shape mismatch: " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  }
  BasicTensor<T> out(a.shape());
  auto x = a.values();
  auto y = b.values();
  auto z = out.values();
  switch (op) {
    case ElementwiseOp::kAdd:
      for (std::size_t i = 0; i < z.size(); ++i) z[i] = x[i] + y[i];
      break;
    case ElementwiseOp::kSub:
      for (std::size_t i = 0; i < z.size(); ++i) z[i] = x[i] - y[i];
      break;
    case ElementwiseOp::kMul:
      for (std::size_t i = 0; i < z.size(); ++i) z[i] = x[i] * y[i];
      break;
  }
  return out;
}

template <typename T>
BasicTensor<T> scale(const BasicTensor<T>& a, T s) {
  BasicTensor<T> out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out.values()[i] = a.values()[i] * s;
  return out;
}

namespace {
void check_index(const Shape4& s, std::size_t n, std::size_t c) {
  if (n >= s.n || c >= s.c) {
    throw ShapeError("channel index (" + std::to_string(n) + "," + std::to_string(c) + ") out of range for " +
                     to_string(s));
  }
}
}  // namespace

template <typename T>
BasicMatrix<T> slice_channel(const BasicTensor<T>& a, std::size_t n, std::size_t c) {
  check_index(a.shape(), n, c);
  auto p = a.plane(n, c);
  return BasicMatrix<T>(a.h(), a.w(), std::vector<T>(p.begin(), p.end()));
}

template <typename T>
void set_channel(BasicTensor<T>& a, std::size_t n, std::size_t c, const BasicMatrix<T>& m) {
  check_index(a.shape(), n, c);
  if (m.rows() != a.h() || m.cols() != a.w()) {
    throw ShapeError("set_channel: matrix " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) +
                     " does not fit plane of " + to_string(a.shape()));
  }
  std::copy(m.values().begin(), m.values().end(), a.plane(n, c).begin());
}

#define GDN_INSTANTIATE(T)                                                                           \
  template BasicMatrix<T> matmul<T>(const BasicMatrix<T>&, const BasicMatrix<T>&);                   \
  template BasicMatrix<T> transpose<T>(const BasicMatrix<T>&);                                       \
  template BasicTensor<T> elementwise<T>(const BasicTensor<T>&, const BasicTensor<T>&, ElementwiseOp); \
  template BasicTensor<T> scale<T>(const BasicTensor<T>&, T);                                        \
  template BasicMatrix<T> slice_channel<T>(const BasicTensor<T>&, std::size_t, std::size_t);         \
  template void set_channel<T>(BasicTensor<T>&, std::size_t, std::size_t, const BasicMatrix<T>&);

GDN_INSTANTIATE(float)
GDN_INSTANTIATE(double)
#undef GDN_INSTANTIATE

}  // namespace gdn
