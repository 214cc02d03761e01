#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mbtf/nn/tensor.hpp"

namespace mbtf::nn {

// Named float32 tensors plus string metadata (topology descriptor, trained
// threshold, cleanliness statistics, ...). Immutable once constructed.
class ModelWeights {
 public:
  static constexpr std::uint32_t kVersion = 1;

  ModelWeights() = default;
  ModelWeights(std::map<std::string, Tensor<float>> tensors, std::map<std::string, std::string> metadata)
      : tensors_(std::move(tensors)), metadata_(std::move(metadata)) {}

  const std::map<std::string, Tensor<float>>& tensors() const { return tensors_; }
  const std::map<std::string, std::string>& metadata() const { return metadata_; }

  bool contains(const std::string& path) const { return tensors_.count(path) != 0; }
  const Tensor<float>& at(const std::string& path) const;
  std::optional<std::string> meta(const std::string& key) const;

  std::string topology() const { return meta("topology").value_or(""); }

  // Copy with additional/overridden entries; the original stays untouched.
  ModelWeights with(const std::map<std::string, Tensor<float>>& tensors,
                    const std::map<std::string, std::string>& metadata) const;

  std::vector<std::uint8_t> serialize() const;
  static ModelWeights deserialize(const std::vector<std::uint8_t>& bytes);

  void save(const std::filesystem::path& path) const;
  static ModelWeights load(const std::filesystem::path& path);

  friend bool operator==(const ModelWeights& a, const ModelWeights& b) {
    return a.tensors_ == b.tensors_ && a.metadata_ == b.metadata_;
  }

 private:
  std::map<std::string, Tensor<float>> tensors_;
  std::map<std::string, std::string> metadata_;
};

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);

}  // namespace mbtf::nn
