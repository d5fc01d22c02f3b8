#pragma once

#include <complex>
#include <cstddef>
#include <vector>

namespace netsar {

using cdouble = std::complex<double>;

/// In-place iterative radix-2 FFT. Size must be a power of two.
void fft_pow2(std::vector<cdouble>& data, bool inverse);

std::size_t next_pow2(std::size_t n);

/// Linear convolution of a with b via zero-padded FFT.
std::vector<cdouble> fft_convolve(const std::vector<cdouble>& a, const std::vector<cdouble>& b);

/// Linear cross-correlation lags of two real arrays: out[k] = sum_i a[i] * b[i + k - (nb-1)],
/// k in [0, na + nb - 1). Used by image coregistration.
std::vector<double> xcorr_real(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace netsar
