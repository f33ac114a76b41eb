#include "whisperline/fft.hpp"

#include <cmath>

#include "whisperline/error.hpp"

namespace whisperline {

namespace {
constexpr double kPi = 3.14159265358979323846;

bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }
}  // namespace

void fft_radix2(std::vector<std::complex<double>>& x) {
  const std::size_t n = x.size();
  if (!is_pow2(n)) throw ShapeError("fft size must be a power of two");

  // bit-reversal permutation
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(x[i], x[j]);
  }

  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * kPi / static_cast<double>(len);
    const std::complex<double> wlen(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t k = 0; k < len / 2; ++k) {
        const std::complex<double> u = x[i + k];
        const std::complex<double> v = x[i + k + len / 2] * w;
        x[i + k] = u + v;
        x[i + k + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
}

std::vector<double> fft_magnitudes(const std::vector<double>& frame) {
  const std::size_t n = frame.size();
  if (!is_pow2(n)) throw ShapeError("fft size must be a power of two");
  std::vector<std::complex<double>> buf(n);
  for (std::size_t i = 0; i < n; ++i) buf[i] = frame[i];
  fft_radix2(buf);
  std::vector<double> mag(n / 2 + 1);
  for (std::size_t k = 0; k <= n / 2; ++k) mag[k] = std::abs(buf[k]);
  return mag;
}

std::vector<double> dct2_orthonormal(const std::vector<double>& x) {
  const std::size_t n = x.size();
  if (!is_pow2(n)) throw ShapeError("dct size must be a power of two");

  // Makhoul's single-FFT DCT-II: permute even samples forward and odd
  // samples reversed, FFT, then rotate each bin by exp(-i*pi*k/(2n)).
  std::vector<std::complex<double>> v(n);
  for (std::size_t i = 0; i < (n + 1) / 2; ++i) v[i] = x[2 * i];
  for (std::size_t i = 0; i < n / 2; ++i) v[n - 1 - i] = x[2 * i + 1];
  fft_radix2(v);

  std::vector<double> out(n);
  const double scale0 = std::sqrt(1.0 / static_cast<double>(n));
  const double scale = std::sqrt(2.0 / static_cast<double>(n));
  for (std::size_t k = 0; k < n; ++k) {
    const double ang = -kPi * static_cast<double>(k) / (2.0 * static_cast<double>(n));
    const double c = v[k].real() * std::cos(ang) - v[k].imag() * std::sin(ang);
    out[k] = (k == 0 ? scale0 : scale) * c;
  }
  return out;
}

}  // namespace whisperline
