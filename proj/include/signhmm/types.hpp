#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>

#include <Eigen/Core>

namespace signhmm {

// T x d, one frame per row. Row-major so a frame is a contiguous span.
using Frames = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline std::span<const double> frame_at(const Frames& frames, Eigen::Index t) {
  return {frames.row(t).data(), static_cast<std::size_t>(frames.cols())};
}

enum class Modality { Rgb, Depth, Skeletal, Concat };

std::string_view to_string(Modality m);
Modality parse_modality(std::string_view name);

struct FeatureSequence {
  Modality modality = Modality::Rgb;
  Frames frames;

  Eigen::Index length() const { return frames.rows(); }
  Eigen::Index dim() const { return frames.cols(); }
};

// Throws std::invalid_argument if the sequence is empty or holds NaN/Inf.
void validate_sequence(const FeatureSequence& seq);

}  // namespace signhmm
