#pragma once

#include <cstdint>
#include <filesystem>
#include <istream>
#include <vector>

#include "xbarsim/core.hpp"
#include "xbarsim/nn.hpp"

namespace xbarsim {

struct Dataset {
  Matrix features;  // one sample per row
  std::vector<int> labels;
  int num_classes = 0;

  Eigen::Index size() const noexcept { return features.rows(); }
  Samples samples() const;  // one-hot targets
};

double accuracy(const Mlp& net, const Dataset& data, const Backend& backend = ExactBackend{});

struct DatasetSplit {
  Dataset train;
  Dataset test;
};

// Ten 8x8 digit glyphs, each jittered per seed, sampled with random contrast
// and Gaussian pixel noise, clipped to [0, 1].
DatasetSplit synthetic_digits(std::uint64_t seed, int train_size = 600, int test_size = 200,
                              double pixel_noise = 0.3);

// One sample per line: feature values then an integer label. Comma, semicolon,
// tab and space delimiters are accepted; a non-numeric first line is a header.
Dataset parse_delimited(std::istream& in);
Dataset load_delimited(const std::filesystem::path& path);

}  // namespace xbarsim
