#include "mflow/fft.hpp"

#include <cmath>
#include <cstdint>
#include <numbers>

#include "mflow/error.hpp"
#include "mflow/parallel.hpp"

namespace mflow::fft {
namespace {

// Twiddle table: w[k] = exp(-2 pi i k / n), k < n/2.
std::vector<std::complex<double>> twiddles(int n) {
  std::vector<std::complex<double>> w(static_cast<std::size_t>(n / 2));
  const double step = -2.0 * std::numbers::pi / n;
  for (int k = 0; k < n / 2; ++k) w[static_cast<std::size_t>(k)] = std::polar(1.0, step * k);
  return w;
}

void bit_reverse_permute(std::complex<double>* a, int n) {
  for (int i = 1, j = 0; i < n; ++i) {
    int bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
}

// Iterative radix-2 on a contiguous line. `w` holds the n/2 roots for size n;
// stage m reuses every (n/m)-th entry.
void transform_line(std::complex<double>* a, int n, const std::vector<std::complex<double>>& w,
                    bool invert) {
  bit_reverse_permute(a, n);
  for (int m = 2; m <= n; m <<= 1) {
    const int half = m >> 1;
    const int stride = n / m;
    for (int block = 0; block < n; block += m) {
      for (int k = 0; k < half; ++k) {
        std::complex<double> tw = w[static_cast<std::size_t>(k * stride)];
        if (invert) tw = std::conj(tw);
        std::complex<double> u = a[block + k];
        std::complex<double> v = a[block + k + half] * tw;
        a[block + k] = u + v;
        a[block + k + half] = u - v;
      }
    }
  }
  if (invert) {
    const double scale = 1.0 / n;
    for (int i = 0; i < n; ++i) a[i] *= scale;
  }
}

void transform_all_axes(std::complex<double>* data, const std::vector<int>& dims, bool invert) {
  const int nd = static_cast<int>(dims.size());
  std::int64_t total = 1;
  for (int n : dims) {
    if (!is_pow2(n)) throw Error(errc::unsupported, "FFT size must be a power of two");
    total *= n;
  }
  for (int axis = 0; axis < nd; ++axis) {
    const int n = dims[static_cast<std::size_t>(axis)];
    if (n == 1) continue;
    std::int64_t stride = 1;
    for (int a = axis + 1; a < nd; ++a) stride *= dims[static_cast<std::size_t>(a)];
    const std::int64_t n_lines = total / n;
    const auto w = twiddles(n);
    // Line l covers indices base + k*stride where base enumerates the
    // positions with the axis coordinate fixed to zero.
    parallel_for(n_lines, [&](std::int64_t l) {
      const std::int64_t outer = l / stride;
      const std::int64_t inner = l % stride;
      const std::int64_t base = outer * stride * n + inner;
      std::vector<std::complex<double>> line(static_cast<std::size_t>(n));
      for (int k = 0; k < n; ++k) line[static_cast<std::size_t>(k)] = data[base + k * stride];
      transform_line(line.data(), n, w, invert);
      for (int k = 0; k < n; ++k) data[base + k * stride] = line[static_cast<std::size_t>(k)];
    });
  }
}

}  // namespace

bool is_pow2(int n) { return n > 0 && (n & (n - 1)) == 0; }

int next_pow2(int n) {
  int p = 1;
  while (p < n) p <<= 1;
  return p;
}

void forward(std::complex<double>* data, const std::vector<int>& dims) {
  transform_all_axes(data, dims, false);
}

void inverse(std::complex<double>* data, const std::vector<int>& dims) {
  transform_all_axes(data, dims, true);
}

void forward_1d(std::complex<double>* data, int n) { forward(data, {n}); }
void inverse_1d(std::complex<double>* data, int n) { inverse(data, {n}); }

}  // namespace mflow::fft
