#pragma once

#include <filesystem>
#include <string>

#include "afv/latent_io.hpp"
#include "afv/random.hpp"

namespace testing_support {

// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("afv_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline afv::LatentDataset gaussian_dataset(afv::Shape shape, std::size_t n, std::uint64_t seed, int label = 0,
                                           double mean = 0.0, double sd = 1.0) {
  afv::Rng rng(seed);
  afv::LatentDataset ds;
  ds.class_names[label] = label == 0 ? "clean" : "attack";
  for (std::size_t i = 0; i < n; ++i) {
    afv::LatentTensor t;
    t.shape = shape;
    for (std::size_t k = 0; k < shape.size(); ++k) t.values.push_back(static_cast<float>(rng.normal(mean, sd)));
    ds.samples.push_back(std::move(t));
    ds.labels.push_back(label);
    ds.attack_success.push_back(true);
  }
  return ds;
}

inline std::string slurp(const std::filesystem::path& p) {
  std::FILE* f = std::fopen(p.string().c_str(), "rb");
  std::string s;
  if (!f) return s;
  char buf[65536];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, f)) > 0) s.append(buf, n);
  std::fclose(f);
  return s;
}

}  // namespace testing_support
