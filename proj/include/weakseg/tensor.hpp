#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace weakseg {

// Dense n-dimensional array of 64-bit reals, row-major.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty unless gradients are tracked

  Tensor() = default;
  explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
    data.assign(numel_of(shape), 0.0);
  }
  Tensor(std::vector<int> s, std::vector<double> d)
      : shape(std::move(s)), data(std::move(d)) {
    if (static_cast<int64_t>(data.size()) != numel_of(shape))
      throw std::invalid_argument("tensor: shape/data size mismatch");
  }

  static int64_t numel_of(const std::vector<int>& s) {
    int64_t n = 1;
    for (int e : s) {
      if (e <= 0) throw std::invalid_argument("tensor: non-positive extent");
      n *= e;
    }
    return n;
  }

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  int dim(int i) const { return shape[static_cast<size_t>(i)]; }
  int ndim() const { return static_cast<int>(shape.size()); }

  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
  }
  void zero_grad() {
    if (!grad.empty()) grad.assign(data.size(), 0.0);
  }

  double& at(int i) { return data[static_cast<size_t>(i)]; }
  double at(int i) const { return data[static_cast<size_t>(i)]; }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }
};

// C = A(m×k) * B(k×n), accumulated into pre-sized out (row-major).
void matmul(const double* a, const double* b, double* c, int m, int k, int n);
// C += A^T(m×k -> k×m) * B(m×n)
void matmul_at_b(const double* a, const double* b, double* c, int m, int k, int n);
// C += A(m×k) * B^T(n×k -> k×n)
void matmul_a_bt(const double* a, const double* b, double* c, int m, int k, int n);

bool all_finite(const std::vector<double>& v);

// Counter-based deterministic RNG (splitmix-style mixing of key+counter).
class Rng {
 public:
  explicit Rng(uint64_t seed, uint64_t stream = 0)
      : key_(seed ^ (0x9e3779b97f4a7c15ULL * (stream + 1))), counter_(0) {}

  uint64_t next_u64() {
    uint64_t z = key_ + 0x9e3779b97f4a7c15ULL * (++counter_);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }
  // uniform in [0,1)
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  int uniform_int(int lo, int hi) {  // inclusive range
    return lo + static_cast<int>(next_u64() % static_cast<uint64_t>(hi - lo + 1));
  }
  // standard normal via Box-Muller
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
  }
  double normal(double mean, double stddev) { return mean + stddev * normal(); }

 private:
  uint64_t key_;
  uint64_t counter_;
};

}  // namespace weakseg
