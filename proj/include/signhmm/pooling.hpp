#pragma once

#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace signhmm {

// C x H x W activations, channel-major.
struct FeatureTensor {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<double> data;

  FeatureTensor() = default;
  FeatureTensor(int c, int h, int w, std::vector<double> values);

  double at(int c, int y, int x) const { return data[(static_cast<std::size_t>(c) * height + y) * width + x]; }
};

enum class PoolKind { Average, Max };

PoolKind parse_pool_kind(std::string_view name);

// Collapses each channel's spatial map to its mean (GAP) or max (GMP).
Eigen::VectorXd global_pool(const FeatureTensor& t, PoolKind kind);

}  // namespace signhmm
