#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace apot {

/// Row-major feature matrix plus integer labels in [0, classes).
struct Dataset {
  std::size_t features = 0;
  std::size_t classes = 0;
  std::vector<double> x;
  std::vector<int> y;

  std::size_t size() const { return y.size(); }
  std::span<const double> row(std::size_t i) const {
    return std::span<const double>(x).subspan(i * features, features);
  }
};

/// Two interleaving half-circles with Gaussian jitter.
Dataset make_two_moons(std::size_t n, double noise, std::uint64_t seed);

/// Two isotropic unit-variance Gaussian blobs in `dims` dimensions whose
/// centres are `separation` apart.
Dataset make_two_clusters(std::size_t n, double separation, std::uint64_t seed,
                          std::size_t dims = 2);

/// "label,f1,...,fn" rows. A first line whose label is not an integer is
/// treated as a header.
Dataset load_csv_dataset(const std::string& path);

/// Affine map of every feature column onto [0, upper] (constant columns map
/// to 0). Quantized activations are unsigned, so model inputs must be >= 0.
void min_max_scale(Dataset& ds, double upper = 1.0);

}  // namespace apot
