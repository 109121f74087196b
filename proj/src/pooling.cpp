#include "signhmm/pooling.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace signhmm {

FeatureTensor::FeatureTensor(int c, int h, int w, std::vector<double> values)
    : channels(c), height(h), width(w), data(std::move(values)) {
  if (c < 1 || h < 1 || w < 1) throw std::invalid_argument("feature tensor dimensions must be positive");
  if (data.size() != static_cast<std::size_t>(c) * h * w) {
    throw std::invalid_argument("feature tensor holds " + std::to_string(data.size()) + " values, shape needs " +
                                std::to_string(static_cast<std::size_t>(c) * h * w));
  }
  if (!std::all_of(data.begin(), data.end(), [](double v) { return std::isfinite(v); })) {
    throw std::invalid_argument("feature tensor holds non-finite values");
  }
}

PoolKind parse_pool_kind(std::string_view name) {
  if (name == "gap") return PoolKind::Average;
  if (name == "gmp") return PoolKind::Max;
  throw std::invalid_argument("unknown pooling kind '" + std::string(name) + "'");
}

Eigen::VectorXd global_pool(const FeatureTensor& t, PoolKind kind) {
  const std::size_t plane = static_cast<std::size_t>(t.height) * t.width;
  Eigen::VectorXd out(t.channels);
  for (int c = 0; c < t.channels; ++c) {
    const auto first = t.data.begin() + static_cast<std::ptrdiff_t>(c * plane);
    const auto last = first + static_cast<std::ptrdiff_t>(plane);
    if (kind == PoolKind::Max) {
      out[c] = *std::max_element(first, last);
    } else {
      double sum = 0.0;
      for (auto it = first; it != last; ++it) sum += *it;
      out[c] = sum / static_cast<double>(plane);
    }
  }
  return out;
}

}  // namespace signhmm
