#pragma once

#include <complex>
#include <span>
#include <vector>

namespace mbtf::dsp {

// Real-input DFT of length n (output n/2+1 bins) and its inverse, backed by
// FFTW. Plans are cached per size; planning is serialized, execution is
// reentrant.
void rfft(std::span<const double> in, std::span<std::complex<double>> out);

// Inverse without the 1/n factor. The imaginary parts of the DC and Nyquist
// bins are ignored.
void irfft_unnormalized(std::span<const std::complex<double>> in, std::span<double> out);

}  // namespace mbtf::dsp
