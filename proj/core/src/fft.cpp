#include "netsar/fft.hpp"

#include <cmath>

#include "netsar/geometry.hpp"

namespace netsar {

std::size_t next_pow2(std::size_t n) {
    std::size_t p = 1;
    while (p < n) p <<= 1;
    return p;
}

void fft_pow2(std::vector<cdouble>& a, bool inverse) {
    const std::size_t n = a.size();
    if (n < 2) return;
    // bit-reversal permutation
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = 2.0 * kPi / double(len) * (inverse ? 1.0 : -1.0);
        const cdouble wlen(std::cos(ang), std::sin(ang));
        for (std::size_t i = 0; i < n; i += len) {
            cdouble w(1.0, 0.0);
            for (std::size_t k = 0; k < len / 2; ++k) {
                const cdouble u = a[i + k];
                const cdouble v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
                w *= wlen;
            }
        }
    }
    if (inverse) {
        const double inv = 1.0 / double(n);
        for (auto& x : a) x *= inv;
    }
}

std::vector<cdouble> fft_convolve(const std::vector<cdouble>& a, const std::vector<cdouble>& b) {
    if (a.empty() || b.empty()) return {};
    const std::size_t out_len = a.size() + b.size() - 1;
    const std::size_t n = next_pow2(out_len);
    std::vector<cdouble> fa(n), fb(n);
    std::copy(a.begin(), a.end(), fa.begin());
    std::copy(b.begin(), b.end(), fb.begin());
    fft_pow2(fa, false);
    fft_pow2(fb, false);
    for (std::size_t i = 0; i < n; ++i) fa[i] *= fb[i];
    fft_pow2(fa, true);
    fa.resize(out_len);
    return fa;
}

std::vector<double> xcorr_real(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.empty() || b.empty()) return {};
    std::vector<cdouble> ca(a.size()), cb(b.size());
    for (std::size_t i = 0; i < a.size(); ++i) ca[i] = a[i];
    // reverse b so a convolution computes a correlation
    for (std::size_t i = 0; i < b.size(); ++i) cb[i] = b[b.size() - 1 - i];
    const auto conv = fft_convolve(ca, cb);
    std::vector<double> out(conv.size());
    for (std::size_t i = 0; i < conv.size(); ++i) out[i] = conv[i].real();
    return out;
}

}  // namespace netsar
