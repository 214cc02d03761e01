#pragma once

#include <string>
#include <vector>

namespace mbtf::mbtfnet {

// Topology and runtime settings. Text form is one `key = value` per line;
// lists are comma separated, `#` starts a comment.
struct MbtfConfig {
  int num_bands = 4;
  std::vector<int> encoder_channels{8, 64, 64, 64, 128, 128};
  std::vector<int> freq_strides{2, 2, 2, 2, 2, 2};
  int encoder_kf = 5, encoder_kt = 2;
  int tdb_per_block = 6;
  int tdb_kf = 3, tdb_kt = 3;
  int dprnn_layers = 2;
  int rnn_units = 256;
  int stcm_layers = 1;
  int stcm_channels = 64;
  int stcm_depth = 4;
  int dpcb_count = 4;  // one per sub-band
  int fdb_per_dpcb = 5, tdb_per_dpcb = 5;
  int dpcb_kf = 3, dpcb_kt = 3;
  int dpcb_width = 16;
  int z_adapter_channels = 2;  // per-band feature maps projected from Z
  bool causal = false;

  int frame_len = 256, hop = 128, fft_size = 256;  // sub-band STFT

  int embed_dim = 192;
  int snr_gru_layers = 2, snr_rnn_units = 256;
  double alpha = 0.9;
  double chunk_seconds = 1.0;

  int freq_bins() const { return fft_size / 2 + 1; }
  // Frequency extent entering each encoder block, plus the latent K at the end.
  std::vector<int> encoder_freqs() const;
  int latent_k() const { return encoder_freqs().back(); }
  int latent_n() const { return encoder_channels.back(); }
  int input_channels() const { return 2 * num_bands; }

  void validate() const;

  std::string to_text() const;
  static MbtfConfig parse(const std::string& text);
  static MbtfConfig load(const std::string& path);

  static MbtfConfig paper_default() { return {}; }
  // Small topology used by tests and the toy training runs.
  static MbtfConfig toy(bool causal = false);
};

bool operator==(const MbtfConfig& a, const MbtfConfig& b);

}  // namespace mbtf::mbtfnet
