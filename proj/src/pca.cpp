#include "signhmm/pca.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include <Eigen/Eigenvalues>

namespace signhmm {

PcaProjector pca_fit(const Frames& frames, int k) {
  const Eigen::Index m = frames.rows();
  const Eigen::Index d = frames.cols();
  if (m < 2) throw std::invalid_argument("pca_fit: need at least two frames");
  if (k < 1 || k > std::min<Eigen::Index>(m - 1, d)) {
    throw std::invalid_argument("pca_fit: k=" + std::to_string(k) + " outside [1, " +
                                std::to_string(std::min<Eigen::Index>(m - 1, d)) + "]");
  }

  PcaProjector p;
  p.mean = frames.colwise().mean().transpose();
  const Eigen::MatrixXd centered = frames.rowwise() - p.mean.transpose();
  const Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(m - 1);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  if (solver.info() != Eigen::Success) throw std::runtime_error("pca_fit: eigen-decomposition failed");

  // Eigen returns ascending eigenvalues.
  p.axes.resize(d, k);
  p.eigenvalues.resize(k);
  for (int c = 0; c < k; ++c) {
    const Eigen::Index src = d - 1 - c;
    Eigen::VectorXd axis = solver.eigenvectors().col(src);
    Eigen::Index peak = 0;
    axis.cwiseAbs().maxCoeff(&peak);
    if (axis[peak] < 0.0) axis = -axis;
    p.axes.col(c) = axis;
    p.eigenvalues[c] = solver.eigenvalues()[src];
  }
  return p;
}

Eigen::VectorXd pca_project(const PcaProjector& p, const Eigen::VectorXd& x) {
  if (x.size() != p.input_dim()) {
    throw std::invalid_argument("pca_project: input has dimension " + std::to_string(x.size()) + ", expected " +
                                std::to_string(p.input_dim()));
  }
  return p.axes.transpose() * (x - p.mean);
}

Frames pca_project_frames(const PcaProjector& p, const Frames& frames) {
  if (frames.cols() != p.input_dim()) throw std::invalid_argument("pca_project: dimension mismatch");
  Frames out = (frames.rowwise() - p.mean.transpose()) * p.axes;
  return out;
}

Eigen::VectorXd pca_reconstruct(const PcaProjector& p, const Eigen::VectorXd& code) {
  if (code.size() != p.output_dim()) throw std::invalid_argument("pca_reconstruct: dimension mismatch");
  return p.mean + p.axes * code;
}

nlohmann::json to_json(const PcaProjector& p) {
  std::vector<double> axes;
  axes.reserve(static_cast<std::size_t>(p.axes.size()));
  for (Eigen::Index r = 0; r < p.axes.rows(); ++r) {
    for (Eigen::Index c = 0; c < p.axes.cols(); ++c) axes.push_back(p.axes(r, c));
  }
  return {{"type", "pca"},
          {"input_dim", p.input_dim()},
          {"output_dim", p.output_dim()},
          {"mean", std::vector<double>(p.mean.data(), p.mean.data() + p.mean.size())},
          {"axes", axes},
          {"eigenvalues", std::vector<double>(p.eigenvalues.data(), p.eigenvalues.data() + p.eigenvalues.size())}};
}

PcaProjector pca_from_json(const nlohmann::json& j) {
  const auto d = j.at("input_dim").get<Eigen::Index>();
  const auto k = j.at("output_dim").get<Eigen::Index>();
  const auto mean = j.at("mean").get<std::vector<double>>();
  const auto axes = j.at("axes").get<std::vector<double>>();
  const auto eig = j.at("eigenvalues").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(mean.size()) != d || static_cast<Eigen::Index>(axes.size()) != d * k ||
      static_cast<Eigen::Index>(eig.size()) != k) {
    throw std::invalid_argument("pca json: array sizes do not match the declared shape");
  }
  PcaProjector p;
  p.mean = Eigen::Map<const Eigen::VectorXd>(mean.data(), d);
  p.axes = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(axes.data(), d, k);
  p.eigenvalues = Eigen::Map<const Eigen::VectorXd>(eig.data(), k);
  return p;
}

}  // namespace signhmm
