#include "mbtf/dsp/fft.hpp"

#include <fftw3.h>

#include <cstring>
#include <map>
#include <memory>
#include <mutex>

#include "mbtf/error.hpp"

namespace mbtf::dsp {

namespace {

struct Plans {
  fftw_plan forward = nullptr;
  fftw_plan inverse = nullptr;
};

std::mutex& plan_mutex() {
  static std::mutex m;
  return m;
}

const Plans& plans_for(int n) {
  static std::map<int, Plans> cache;
  std::lock_guard lock(plan_mutex());
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;
  double* r = fftw_alloc_real(static_cast<std::size_t>(n));
  fftw_complex* c = fftw_alloc_complex(static_cast<std::size_t>(n / 2 + 1));
  Plans p;
  p.forward = fftw_plan_dft_r2c_1d(n, r, c, FFTW_ESTIMATE);
  p.inverse = fftw_plan_dft_c2r_1d(n, c, r, FFTW_ESTIMATE);
  fftw_free(r);
  fftw_free(c);
  return cache.emplace(n, p).first->second;
}

struct Buffers {
  explicit Buffers(int n)
      : real(fftw_alloc_real(static_cast<std::size_t>(n)), fftw_free),
        cplx(fftw_alloc_complex(static_cast<std::size_t>(n / 2 + 1)), fftw_free) {}
  std::unique_ptr<double, decltype(&fftw_free)> real;
  std::unique_ptr<fftw_complex, decltype(&fftw_free)> cplx;
};

}  // namespace

void rfft(std::span<const double> in, std::span<std::complex<double>> out) {
  const int n = static_cast<int>(in.size());
  if (n == 0 || out.size() != static_cast<std::size_t>(n / 2 + 1)) throw ValidationError("rfft: size mismatch");
  const Plans& p = plans_for(n);
  Buffers b(n);
  std::memcpy(b.real.get(), in.data(), sizeof(double) * in.size());
  fftw_execute_dft_r2c(p.forward, b.real.get(), b.cplx.get());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = {b.cplx.get()[k][0], b.cplx.get()[k][1]};
}

void irfft_unnormalized(std::span<const std::complex<double>> in, std::span<double> out) {
  const int n = static_cast<int>(out.size());
  if (n == 0 || in.size() != static_cast<std::size_t>(n / 2 + 1)) throw ValidationError("irfft: size mismatch");
  const Plans& p = plans_for(n);
  Buffers b(n);
  for (std::size_t k = 0; k < in.size(); ++k) {
    b.cplx.get()[k][0] = in[k].real();
    b.cplx.get()[k][1] = in[k].imag();
  }
  b.cplx.get()[0][1] = 0.0;
  if (n % 2 == 0) b.cplx.get()[n / 2][1] = 0.0;
  fftw_execute_dft_c2r(p.inverse, b.cplx.get(), b.real.get());
  std::memcpy(out.data(), b.real.get(), sizeof(double) * out.size());
}

}  // namespace mbtf::dsp
