#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "signhmm/types.hpp"

namespace signhmm {

inline constexpr int kDefaultEmbedDim = 20;
inline constexpr int kDefaultHiddenDim = 256;

struct AdamConfig {
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int batch_size = 32;
  int epochs = 3;

  void validate() const;
};

// Per-parameter Adam moments. One entry per parameter block.
struct AdamState {
  std::vector<Eigen::MatrixXd> m;
  std::vector<Eigen::MatrixXd> v;
  long step = 0;
};

// One bias-corrected Adam update of every block in `params`.
void adam_update(std::span<Eigen::MatrixXd> params, std::span<const Eigen::MatrixXd> grads, AdamState& state,
                 const AdamConfig& cfg);

// Layer sizes {input, hidden, embedding, classes}.
using ProjectorArch = std::array<int, 4>;

// Affine -> ReLU -> affine -> ReLU (embedding) -> affine (class scores).
// Parameter blocks are ordered W1, b1, W2, b2, W3, b3; W_l is out x in and
// biases are out x 1.
struct ProjectorNet {
  ProjectorArch arch{};
  std::vector<Eigen::MatrixXd> params;
  AdamState adam;

  int input_dim() const { return arch[0]; }
  int embed_dim() const { return arch[2]; }
  int n_classes() const { return arch[3]; }

  const Eigen::MatrixXd& weight(int layer) const { return params[static_cast<std::size_t>(2 * layer)]; }
  const Eigen::MatrixXd& bias(int layer) const { return params[static_cast<std::size_t>(2 * layer + 1)]; }
};

// Uniform(-limit, limit) weights with limit = sqrt(6 / (fan_in + fan_out)), zero biases.
ProjectorNet init_projector(const ProjectorArch& arch, std::uint64_t seed);

// Column-wise softmax of a classes x batch score matrix.
Eigen::MatrixXd softmax_columns(const Eigen::MatrixXd& scores);

// Class scores (classes x rows) for each row of `x`.
Eigen::MatrixXd projector_logits(const ProjectorNet& net, const Frames& x);

// Mean cross-entropy over the rows of `x`.
double projector_loss(const ProjectorNet& net, const Frames& x, std::span<const int> labels);

// Gradient of projector_loss with respect to every parameter block.
std::vector<Eigen::MatrixXd> projector_gradients(const ProjectorNet& net, const Frames& x,
                                                 std::span<const int> labels, double* loss = nullptr);

struct ProjectorTrainResult {
  ProjectorNet net;
  std::vector<double> epoch_loss;  // mean loss per epoch
};

ProjectorTrainResult projector_train(const Frames& frames, std::span<const int> labels, const ProjectorArch& arch,
                                     const AdamConfig& cfg, std::uint64_t seed);

Eigen::VectorXd projector_embed(const ProjectorNet& net, const Eigen::VectorXd& x);
Frames projector_embed_frames(const ProjectorNet& net, const Frames& frames);
std::vector<int> projector_predict(const ProjectorNet& net, const Frames& frames);

nlohmann::json to_json(const ProjectorNet& net, const AdamConfig& cfg);
ProjectorNet projector_from_json(const nlohmann::json& j);

}  // namespace signhmm
