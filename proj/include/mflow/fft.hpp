#pragma once

#include <complex>
#include <vector>

namespace mflow::fft {

bool is_pow2(int n);
int next_pow2(int n);

/// In-place complex FFT over every axis of a row-major array with the given
/// per-axis sizes (each a power of two). Forward uses the e^{-i x.xi}
/// convention; inverse applies the 1/N normalization.
void forward(std::complex<double>* data, const std::vector<int>& dims);
void inverse(std::complex<double>* data, const std::vector<int>& dims);

/// Single contiguous line transform, exposed for tests.
void forward_1d(std::complex<double>* data, int n);
void inverse_1d(std::complex<double>* data, int n);

}  // namespace mflow::fft
