#pragma once

#include <cassert>
#include <cstdint>
#include <initializer_list>
#include <vector>

namespace sgg::nn {

// Dense row-major 2D float tensor. Everything that flows through the tape is
// 2D; scalars are (1,1) and vectors are single-row or single-column.
struct Tensor {
  int rows = 0, cols = 0;
  std::vector<float> data;

  Tensor() = default;
  Tensor(int r, int c) : rows(r), cols(c), data(static_cast<size_t>(r) * c, 0.f) {}

  static Tensor zeros(int r, int c) { return Tensor(r, c); }
  static Tensor full(int r, int c, float v) {
    Tensor t(r, c);
    std::fill(t.data.begin(), t.data.end(), v);
    return t;
  }
  static Tensor from(int r, int c, std::initializer_list<float> vals) {
    Tensor t(r, c);
    assert(vals.size() == t.data.size());
    std::copy(vals.begin(), vals.end(), t.data.begin());
    return t;
  }
  static Tensor row(std::initializer_list<float> vals) {
    Tensor t(1, static_cast<int>(vals.size()));
    std::copy(vals.begin(), vals.end(), t.data.begin());
    return t;
  }

  int64_t numel() const { return static_cast<int64_t>(rows) * cols; }
  bool empty() const { return data.empty(); }

  float& at(int r, int c) {
    assert(r >= 0 && r < rows && c >= 0 && c < cols);
    return data[static_cast<size_t>(r) * cols + c];
  }
  float at(int r, int c) const {
    assert(r >= 0 && r < rows && c >= 0 && c < cols);
    return data[static_cast<size_t>(r) * cols + c];
  }

  bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }
};

}  // namespace sgg::nn
