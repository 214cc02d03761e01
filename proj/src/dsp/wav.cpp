#include "mbtf/dsp/wav.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <vector>

#include "mbtf/dsp/resample.hpp"
#include "mbtf/error.hpp"

namespace mbtf::dsp {

namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

std::uint32_t le32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
std::uint16_t le16(const unsigned char* p) { return static_cast<std::uint16_t>(p[0] | (p[1] << 8)); }

void put32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}
void put16(std::vector<unsigned char>& out, std::uint16_t v) {
  out.push_back(static_cast<unsigned char>(v & 0xFF));
  out.push_back(static_cast<unsigned char>(v >> 8));
}
void put_tag(std::vector<unsigned char>& out, const char* tag) { out.insert(out.end(), tag, tag + 4); }

}  // namespace

AudioBuffer read_wav(const std::string& path, const WavReadOptions& opt) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open WAV file '" + path + "'");
  const std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (buf.size() < 12 || std::memcmp(buf.data(), "RIFF", 4) != 0 || std::memcmp(buf.data() + 8, "WAVE", 4) != 0) {
    throw DataError("'" + path + "' is not a RIFF/WAVE file");
  }
  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  const unsigned char* data = nullptr;
  std::size_t data_len = 0;
  std::size_t pos = 12;
  while (pos + 8 <= buf.size()) {
    const unsigned char* hdr = buf.data() + pos;
    const std::size_t len = le32(hdr + 4);
    const std::size_t body = pos + 8;
    const std::size_t avail = std::min(len, buf.size() - body);
    if (std::memcmp(hdr, "fmt ", 4) == 0) {
      if (avail < 16) throw DataError("'" + path + "': truncated fmt chunk");
      const unsigned char* f = buf.data() + body;
      format = le16(f);
      channels = le16(f + 2);
      rate = le32(f + 4);
      bits = le16(f + 14);
      if (format == kFormatExtensible) {
        if (avail < 26) throw DataError("'" + path + "': truncated extensible fmt chunk");
        format = le16(f + 24);
      }
    } else if (std::memcmp(hdr, "data", 4) == 0) {
      data = buf.data() + body;
      data_len = avail;
    }
    pos = body + len + (len & 1);
  }
  if (channels == 0 || rate == 0) throw DataError("'" + path + "': missing or invalid fmt chunk");
  if (!data) throw DataError("'" + path + "': missing data chunk");
  const bool pcm = format == kFormatPcm && (bits == 16 || bits == 24);
  const bool flt = format == kFormatFloat && bits == 32;
  if (!pcm && !flt) {
    throw DataError("'" + path + "': unsupported encoding (format " + std::to_string(format) + ", " +
                    std::to_string(bits) + " bits)");
  }
  const std::size_t width = bits / 8;
  const std::size_t frame = width * channels;
  const std::size_t frames = data_len / frame;
  AudioBuffer out;
  out.sample_rate = static_cast<int>(rate);
  out.samples.resize(frames);
  for (std::size_t i = 0; i < frames; ++i) {
    const unsigned char* s = data + i * frame;
    if (flt) {
      float v;
      std::uint32_t u = le32(s);
      std::memcpy(&v, &u, 4);
      out.samples[i] = v;
    } else if (bits == 16) {
      out.samples[i] = static_cast<std::int16_t>(le16(s)) / 32768.0;
    } else {
      std::int32_t v = static_cast<std::int32_t>((static_cast<std::uint32_t>(s[0]) << 8) |
                                                 (static_cast<std::uint32_t>(s[1]) << 16) |
                                                 (static_cast<std::uint32_t>(s[2]) << 24)) >>
                       8;
      out.samples[i] = v / 8388608.0;
    }
  }
  for (double v : out.samples) {
    if (!std::isfinite(v)) throw DataError("'" + path + "': non-finite sample");
  }
  if (out.sample_rate != kNativeRate) {
    if (!opt.resample) {
      throw DataError("'" + path + "': sample rate " + std::to_string(out.sample_rate) + " Hz, expected " +
                      std::to_string(kNativeRate) + " (enable resampling to convert)");
    }
    out = resample(out, kNativeRate);
  }
  return out;
}

void write_wav(const std::string& path, const AudioBuffer& audio, WavFormat fmt) {
  audio.validate();
  const std::uint16_t bits = fmt == WavFormat::pcm16 ? 16 : fmt == WavFormat::pcm24 ? 24 : 32;
  const std::uint16_t width = bits / 8;
  const std::uint32_t data_len = static_cast<std::uint32_t>(audio.size() * width);
  std::vector<unsigned char> out;
  out.reserve(44 + data_len);
  put_tag(out, "RIFF");
  put32(out, 36 + data_len);
  put_tag(out, "WAVE");
  put_tag(out, "fmt ");
  put32(out, 16);
  put16(out, fmt == WavFormat::float32 ? kFormatFloat : kFormatPcm);
  put16(out, 1);
  put32(out, static_cast<std::uint32_t>(audio.sample_rate));
  put32(out, static_cast<std::uint32_t>(audio.sample_rate) * width);
  put16(out, width);
  put16(out, bits);
  put_tag(out, "data");
  put32(out, data_len);
  for (double v : audio.samples) {
    if (fmt == WavFormat::float32) {
      const float f = static_cast<float>(v);
      std::uint32_t u;
      std::memcpy(&u, &f, 4);
      put32(out, u);
    } else {
      const double c = std::clamp(v, -1.0, 1.0);
      if (fmt == WavFormat::pcm16) {
        const long q = std::clamp(std::lround(c * 32768.0), -32768L, 32767L);
        put16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(q)));
      } else {
        const long q = std::clamp(std::lround(c * 8388608.0), -8388608L, 8388607L);
        const auto u = static_cast<std::uint32_t>(q);
        out.push_back(static_cast<unsigned char>(u & 0xFF));
        out.push_back(static_cast<unsigned char>((u >> 8) & 0xFF));
        out.push_back(static_cast<unsigned char>((u >> 16) & 0xFF));
      }
    }
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write WAV file '" + path + "'");
  f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  if (!f) throw DataError("write failed for '" + path + "'");
}

}  // namespace mbtf::dsp
