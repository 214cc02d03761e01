#pragma once

#include <vector>

#include "mbtf/dsp/audio.hpp"

namespace mbtf::dsp {

struct PqmfConfig {
  int num_bands = 4;
  int prototype_len = 128;  // taps
  double kaiser_beta = 9.0;
  double cutoff = 0.0;  // normalized to Nyquist; 0 means "search for the best value"

  void validate() const;

  // 32*C taps with the cutoff found by the design search.
  static PqmfConfig designed(int num_bands);
};

// Analysis and synthesis filters derived from one prototype lowpass. The
// cascade analysis -> synthesis is a delay of prototype_len - 1 samples.
class PqmfBank {
 public:
  explicit PqmfBank(const PqmfConfig& cfg);

  const PqmfConfig& config() const { return cfg_; }
  int num_bands() const { return cfg_.num_bands; }
  int delay() const { return cfg_.prototype_len - 1; }
  const std::vector<double>& prototype() const { return proto_; }
  const std::vector<double>& analysis_filter(int k) const { return h_[k]; }
  const std::vector<double>& synthesis_filter(int k) const { return f_[k]; }

  // Band length is ceil(N / C).
  SubbandSignals analysis(const AudioBuffer& audio) const;
  AudioBuffer synthesis(const SubbandSignals& bands) const;
  // Adjoint of synthesis: maps a gradient on the output samples back onto
  // the band samples.
  SubbandSignals synthesis_adjoint(const std::vector<double>& grad, int band_rate) const;

 private:
  PqmfConfig cfg_;
  std::vector<double> proto_;
  std::vector<std::vector<double>> h_, f_;
};

// Kaiser-windowed ideal lowpass of the given length; cutoff relative to Nyquist.
std::vector<double> kaiser_lowpass(int taps, double cutoff, double beta);

// Round-trip reconstruction error (relative energy, all impulse phases) of a
// bank built from `cfg`. The design search minimizes this.
double pqmf_reconstruction_error(const PqmfConfig& cfg);

SubbandSignals pqmf_analysis(const AudioBuffer& audio, const PqmfConfig& cfg);
AudioBuffer pqmf_synthesis(const SubbandSignals& bands, const PqmfConfig& cfg);

// Shared bank for a designed configuration (built once per band count).
const PqmfBank& default_bank(int num_bands);

}  // namespace mbtf::dsp
