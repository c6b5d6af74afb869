#pragma once

#include <algorithm>
#include <cstddef>
#include <string>
#include <vector>

namespace vidyn::nn {

using Vec = std::vector<double>;

inline void zero(Vec& v) { std::fill(v.begin(), v.end(), 0.0); }

// Row-major dense matrix over a flat buffer.
struct Mat {
  std::size_t rows = 0;
  std::size_t cols = 0;
  Vec a;

  Mat() = default;
  Mat(std::size_t r, std::size_t c) : rows(r), cols(c), a(r * c, 0.0) {}

  void resize(std::size_t r, std::size_t c) {
    rows = r;
    cols = c;
    a.assign(r * c, 0.0);
  }

  double* data() { return a.data(); }
  const double* data() const { return a.data(); }
  double* row(std::size_t i) { return a.data() + i * cols; }
  const double* row(std::size_t i) const { return a.data() + i * cols; }
  double& operator()(std::size_t i, std::size_t j) { return a[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const {
    return a[i * cols + j];
  }
  std::size_t size() const { return a.size(); }
  void zero() { std::fill(a.begin(), a.end(), 0.0); }
};

// Named view of one parameter tensor's flat storage. Models enumerate their
// tensors in one canonical order; the optimizer and the checkpoint format
// both walk that order, so the layout is defined in exactly one place.
struct ParamView {
  std::string name;
  double* data;
  std::size_t size;
};

struct ConstParamView {
  std::string name;
  const double* data;
  std::size_t size;
};

}  // namespace vidyn::nn
