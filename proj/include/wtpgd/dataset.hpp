#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "wtpgd/rng.hpp"
#include "wtpgd/tensor.hpp"

namespace wtpgd {

/// Labelled points with pixels in [0, 1].
///
/// Text format: a header line `N d C`, then N lines of d comma-separated
/// reals followed by an integer label.
struct Dataset {
  std::size_t dim = 0;
  std::size_t classes = 0;
  std::vector<double> pixels;  // size() * dim, row-major
  std::vector<std::size_t> labels;

  std::size_t size() const { return labels.size(); }
  /// Point i as a flat tensor, or reshaped to `shape` when given.
  Tensor input(std::size_t i, const Shape& shape = {}) const;
  void push_back(std::span<const double> x, std::size_t label);
  Dataset select(const std::vector<std::size_t>& indices) const;
  Dataset head(std::size_t count) const;
  bool operator==(const Dataset&) const = default;
};

Dataset parse_dataset(std::istream& in, const std::string& source = "<stream>");
Dataset read_dataset(const std::filesystem::path& path);
void write_dataset(std::ostream& out, const Dataset& data);
void write_dataset(const std::filesystem::path& path, const Dataset& data);

/// Two interleaved half-moons in [0, 1]^2 with Gaussian jitter.
Dataset make_moons(std::size_t count, double noise, Rng& rng);

/// Random split into (train, held-out) with `holdout_fraction` of the points held out.
std::pair<Dataset, Dataset> split_dataset(const Dataset& data, double holdout_fraction, Rng& rng);

}  // namespace wtpgd
