#pragma once

// Binary latent-dump format ("AFVL") and its text manifest sidecar.
//
// Dump layout, all integers little-endian:
//   offset  size  field
//   0       4     magic "AFVL"
//   4       2     version (u16, currently 1)
//   6       4     n_samples (u32)
//   10      4     channels (u32)
//   14      4     height (u32)
//   18      4     width (u32)
//   22      1     dtype_code (u8, 0 = f32 LE)
//   23      ...   n_samples * C*H*W f32 values, row-major, sample by sample
//
// The manifest lives next to the dump at "<path>.manifest".

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace afv {

struct Shape {
  std::uint32_t channels = 0;
  std::uint32_t height = 0;
  std::uint32_t width = 0;

  std::size_t size() const { return std::size_t{channels} * height * width; }
  std::size_t spatial() const { return std::size_t{height} * width; }
  bool operator==(const Shape&) const = default;
};

struct LatentTensor {
  Shape shape;
  std::vector<float> values;

  LatentTensor() = default;
  LatentTensor(Shape s, std::vector<float> v);

  std::size_t size() const { return values.size(); }
  std::uint32_t channel_of(std::size_t k) const {
    return static_cast<std::uint32_t>(k / shape.spatial());
  }
  // Throws ValidationError unless L = C*H*W and every value is finite.
  void validate() const;
};

struct LatentDataset {
  std::vector<LatentTensor> samples;
  std::vector<int> labels;
  std::vector<bool> attack_success;
  std::map<int, std::string> class_names;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
  Shape shape() const;
  void validate() const;
  bool operator==(const LatentDataset&) const;
};

inline constexpr char kDumpMagic[4] = {'A', 'F', 'V', 'L'};
inline constexpr std::uint16_t kDumpVersion = 1;
inline constexpr std::size_t kDumpHeaderBytes = 23;
inline constexpr std::uint8_t kDtypeF32 = 0;

struct DumpHeader {
  std::uint16_t version = kDumpVersion;
  std::uint32_t n_samples = 0;
  Shape shape;
  std::uint8_t dtype_code = kDtypeF32;
};

std::filesystem::path manifest_path(const std::filesystem::path& dump);

// Writes the dump and its manifest; returns the dump's byte count.
std::uint64_t write_dump(const LatentDataset& dataset, const std::filesystem::path& path);

LatentDataset read_dump(const std::filesystem::path& path);

DumpHeader read_dump_header(const std::filesystem::path& path);

}  // namespace afv
