#ifndef WHISPERLINE_FFT_HPP
#define WHISPERLINE_FFT_HPP

#include <complex>
#include <vector>

namespace whisperline {

// In-place iterative radix-2 Cooley-Tukey. Size must be a power of two.
void fft_radix2(std::vector<std::complex<double>>& x);

// Magnitudes |X_k| for k = 0..n/2 of a real frame (n a power of two).
std::vector<double> fft_magnitudes(const std::vector<double>& frame);

// Orthonormal DCT-II (the MFCC transform). Direct matrix application.
std::vector<double> dct2_orthonormal(const std::vector<double>& x);

}  // namespace whisperline

#endif  // WHISPERLINE_FFT_HPP
