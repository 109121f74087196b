#pragma once

#include <Eigen/Core>
#include <json.hpp>

#include "signhmm/types.hpp"

namespace signhmm {

inline constexpr int kDefaultPcaDim = 64;

struct PcaProjector {
  Eigen::VectorXd mean;         // D
  Eigen::MatrixXd axes;         // D x k, orthonormal columns
  Eigen::VectorXd eigenvalues;  // k, descending

  Eigen::Index input_dim() const { return axes.rows(); }
  Eigen::Index output_dim() const { return axes.cols(); }
};

// Top-k eigenvectors of the sample covariance. Each axis is signed so that
// its largest-magnitude entry is positive.
PcaProjector pca_fit(const Frames& frames, int k);

Eigen::VectorXd pca_project(const PcaProjector& p, const Eigen::VectorXd& x);
Frames pca_project_frames(const PcaProjector& p, const Frames& frames);
Eigen::VectorXd pca_reconstruct(const PcaProjector& p, const Eigen::VectorXd& code);

nlohmann::json to_json(const PcaProjector& p);
PcaProjector pca_from_json(const nlohmann::json& j);

}  // namespace signhmm
