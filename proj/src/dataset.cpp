#include "apot/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "apot/errors.hpp"

namespace apot {

Dataset make_two_moons(std::size_t n, double noise, std::uint64_t seed) {
  if (n < 2) throw ConfigError("two_moons: need at least 2 points");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> angle(0.0, std::numbers::pi);
  std::normal_distribution<double> jitter(0.0, noise);
  Dataset ds;
  ds.features = 2;
  ds.classes = 2;
  for (std::size_t i = 0; i < n; ++i) {
    const int label = static_cast<int>(i % 2);
    const double t = angle(rng);
    double px = std::cos(t);
    double py = std::sin(t);
    if (label == 1) {
      px = 1.0 - px;
      py = 0.5 - py;
    }
    ds.x.push_back(px + jitter(rng));
    ds.x.push_back(py + jitter(rng));
    ds.y.push_back(label);
  }
  return ds;
}

Dataset make_two_clusters(std::size_t n, double separation, std::uint64_t seed,
                          std::size_t dims) {
  if (n < 2) throw ConfigError("two_clusters: need at least 2 points");
  if (dims == 0) throw ConfigError("two_clusters: need at least 1 dimension");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> unit(0.0, 1.0);
  Dataset ds;
  ds.features = dims;
  ds.classes = 2;
  // Centres at +-c * (1, ..., 1) with |2c * (1, ..., 1)| = separation.
  const double half = 0.5 * separation / std::sqrt(static_cast<double>(dims));
  for (std::size_t i = 0; i < n; ++i) {
    const int label = static_cast<int>(i % 2);
    const double c = label == 0 ? -half : half;
    for (std::size_t d = 0; d < dims; ++d) ds.x.push_back(c + unit(rng));
    ds.y.push_back(label);
  }
  return ds;
}

Dataset load_csv_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open dataset '" + path + "'");
  Dataset ds;
  std::string line;
  int line_no = 0;
  int max_label = -1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (fields.size() < 2) {
      throw InputError("dataset line " + std::to_string(line_no) + ": need label and features");
    }
    int label = 0;
    try {
      std::size_t used = 0;
      label = std::stoi(fields[0], &used);
      if (used != fields[0].size()) throw std::invalid_argument("label");
    } catch (const std::exception&) {
      if (ds.y.empty() && ds.features == 0) continue;  // header
      throw InputError("dataset line " + std::to_string(line_no) + ": bad label '" +
                       fields[0] + "'");
    }
    if (label < 0) throw InputError("dataset line " + std::to_string(line_no) + ": negative label");
    if (ds.features == 0) ds.features = fields.size() - 1;
    if (fields.size() - 1 != ds.features) {
      throw InputError("dataset line " + std::to_string(line_no) + ": inconsistent feature count");
    }
    for (std::size_t f = 1; f < fields.size(); ++f) {
      try {
        const double v = std::stod(fields[f]);
        if (!std::isfinite(v)) throw std::invalid_argument("non-finite");
        ds.x.push_back(v);
      } catch (const std::exception&) {
        throw InputError("dataset line " + std::to_string(line_no) + ": bad feature '" +
                         fields[f] + "'");
      }
    }
    ds.y.push_back(label);
    max_label = std::max(max_label, label);
  }
  if (ds.y.empty()) throw InputError("dataset '" + path + "' has no rows");
  ds.classes = static_cast<std::size_t>(std::max(2, max_label + 1));
  return ds;
}

void min_max_scale(Dataset& ds, double upper) {
  if (!(upper > 0.0) || !std::isfinite(upper)) throw ConfigError("scale upper bound must be positive");
  for (std::size_t f = 0; f < ds.features; ++f) {
    double lo = INFINITY;
    double hi = -INFINITY;
    for (std::size_t i = 0; i < ds.size(); ++i) {
      lo = std::min(lo, ds.x[i * ds.features + f]);
      hi = std::max(hi, ds.x[i * ds.features + f]);
    }
    const double span = hi - lo;
    for (std::size_t i = 0; i < ds.size(); ++i) {
      double& v = ds.x[i * ds.features + f];
      v = span > 0.0 ? upper * ((v - lo) / span) : 0.0;
    }
  }
}

}  // namespace apot
