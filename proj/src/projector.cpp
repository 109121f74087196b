#include "signhmm/projector.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>

namespace signhmm {

namespace {

struct Activations {
  Eigen::MatrixXd pre1, h1, pre2, h2, logits;
};

void check_arch(const ProjectorArch& arch) {
  for (int s : arch) {
    if (s < 1) throw std::invalid_argument("projector layer sizes must be positive");
  }
}

void check_batch(const ProjectorNet& net, const Frames& x, std::span<const int> labels) {
  if (x.cols() != net.input_dim()) {
    throw std::invalid_argument("projector: input dimension " + std::to_string(x.cols()) + ", expected " +
                                std::to_string(net.input_dim()));
  }
  if (static_cast<std::size_t>(x.rows()) != labels.size()) throw std::invalid_argument("projector: one label per frame");
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= net.n_classes()) {
      throw std::invalid_argument("projector: label " + std::to_string(labels[i]) + " at frame " + std::to_string(i) +
                                  " outside [0, " + std::to_string(net.n_classes()) + ")");
    }
  }
}

Eigen::MatrixXd relu(const Eigen::MatrixXd& z) { return z.cwiseMax(0.0); }

Activations forward(const ProjectorNet& net, const Frames& x) {
  Activations a;
  a.pre1 = (net.weight(0) * x.transpose()).colwise() + net.bias(0).col(0);
  a.h1 = relu(a.pre1);
  a.pre2 = (net.weight(1) * a.h1).colwise() + net.bias(1).col(0);
  a.h2 = relu(a.pre2);
  a.logits = (net.weight(2) * a.h2).colwise() + net.bias(2).col(0);
  return a;
}

// Column-wise log-softmax.
Eigen::MatrixXd log_softmax_columns(const Eigen::MatrixXd& scores) {
  Eigen::MatrixXd out(scores.rows(), scores.cols());
  for (Eigen::Index c = 0; c < scores.cols(); ++c) {
    const double hi = scores.col(c).maxCoeff();
    const double lse = hi + std::log((scores.col(c).array() - hi).exp().sum());
    out.col(c) = scores.col(c).array() - lse;
  }
  return out;
}

Eigen::MatrixXd matrix_from_json(const nlohmann::json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto data = j.at("data").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(data.size()) != rows * cols) throw std::invalid_argument("matrix json: size mismatch");
  return Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(data.data(), rows, cols);
}

nlohmann::json matrix_to_json(const Eigen::MatrixXd& m) {
  std::vector<double> data;
  data.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
  }
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", data}};
}

}  // namespace

void AdamConfig::validate() const {
  if (!(learning_rate > 0.0)) throw std::invalid_argument("adam: learning rate must be > 0");
  if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0) {
    throw std::invalid_argument("adam: beta1 and beta2 must lie in [0, 1)");
  }
  if (!(epsilon > 0.0)) throw std::invalid_argument("adam: epsilon must be > 0");
  if (batch_size < 1) throw std::invalid_argument("adam: batch size must be >= 1");
  if (epochs < 0) throw std::invalid_argument("adam: epochs must be >= 0");
}

void adam_update(std::span<Eigen::MatrixXd> params, std::span<const Eigen::MatrixXd> grads, AdamState& state,
                 const AdamConfig& cfg) {
  if (params.size() != grads.size()) throw std::invalid_argument("adam: one gradient per parameter block");
  if (state.m.size() != params.size()) {
    state.m.clear();
    state.v.clear();
    for (const auto& p : params) {
      state.m.push_back(Eigen::MatrixXd::Zero(p.rows(), p.cols()));
      state.v.push_back(Eigen::MatrixXd::Zero(p.rows(), p.cols()));
    }
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t b = 0; b < params.size(); ++b) {
    state.m[b] = cfg.beta1 * state.m[b] + (1.0 - cfg.beta1) * grads[b];
    state.v[b] = cfg.beta2 * state.v[b] + (1.0 - cfg.beta2) * grads[b].cwiseProduct(grads[b]);
    const Eigen::ArrayXXd m_hat = state.m[b].array() / c1;
    const Eigen::ArrayXXd v_hat = state.v[b].array() / c2;
    params[b].array() -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
  }
}

ProjectorNet init_projector(const ProjectorArch& arch, std::uint64_t seed) {
  check_arch(arch);
  std::mt19937_64 rng(seed);
  ProjectorNet net;
  net.arch = arch;
  for (int layer = 0; layer < 3; ++layer) {
    const int fan_in = arch[static_cast<std::size_t>(layer)];
    const int fan_out = arch[static_cast<std::size_t>(layer + 1)];
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    Eigen::MatrixXd w(fan_out, fan_in);
    for (int r = 0; r < fan_out; ++r) {
      for (int c = 0; c < fan_in; ++c) w(r, c) = dist(rng);
    }
    net.params.push_back(std::move(w));
    net.params.push_back(Eigen::MatrixXd::Zero(fan_out, 1));
  }
  return net;
}

Eigen::MatrixXd softmax_columns(const Eigen::MatrixXd& scores) {
  return log_softmax_columns(scores).array().exp().matrix();
}

Eigen::MatrixXd projector_logits(const ProjectorNet& net, const Frames& x) {
  if (x.cols() != net.input_dim()) throw std::invalid_argument("projector: input dimension mismatch");
  return forward(net, x).logits;
}

double projector_loss(const ProjectorNet& net, const Frames& x, std::span<const int> labels) {
  check_batch(net, x, labels);
  if (x.rows() == 0) return 0.0;
  const Eigen::MatrixXd logp = log_softmax_columns(forward(net, x).logits);
  double loss = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) loss -= logp(labels[static_cast<std::size_t>(i)], i);
  return loss / static_cast<double>(x.rows());
}

std::vector<Eigen::MatrixXd> projector_gradients(const ProjectorNet& net, const Frames& x,
                                                 std::span<const int> labels, double* loss) {
  check_batch(net, x, labels);
  if (x.rows() == 0) throw std::invalid_argument("projector: empty batch");
  const double batch = static_cast<double>(x.rows());
  const Activations a = forward(net, x);
  const Eigen::MatrixXd logp = log_softmax_columns(a.logits);

  Eigen::MatrixXd d_logits = logp.array().exp().matrix();
  double total = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    d_logits(y, i) -= 1.0;
    total -= logp(y, i);
  }
  d_logits /= batch;
  if (loss) *loss = total / batch;

  std::vector<Eigen::MatrixXd> g(6);
  g[4] = d_logits * a.h2.transpose();
  g[5] = d_logits.rowwise().sum();
  const Eigen::MatrixXd d_pre2 = (net.weight(2).transpose() * d_logits).cwiseProduct(
      (a.pre2.array() > 0.0).cast<double>().matrix());
  g[2] = d_pre2 * a.h1.transpose();
  g[3] = d_pre2.rowwise().sum();
  const Eigen::MatrixXd d_pre1 = (net.weight(1).transpose() * d_pre2).cwiseProduct(
      (a.pre1.array() > 0.0).cast<double>().matrix());
  g[0] = d_pre1 * x;
  g[1] = d_pre1.rowwise().sum();
  return g;
}

ProjectorTrainResult projector_train(const Frames& frames, std::span<const int> labels, const ProjectorArch& arch,
                                     const AdamConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const Eigen::Index m = frames.rows();
  if (m < 1) throw std::invalid_argument("projector_train: no frames");

  ProjectorTrainResult out{init_projector(arch, seed), {}};
  ProjectorNet& net = out.net;
  check_batch(net, frames, labels);

  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(m));
  std::iota(order.begin(), order.end(), Eigen::Index{0});

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (Eigen::Index start = 0; start < m; start += cfg.batch_size) {
      const Eigen::Index stop = std::min<Eigen::Index>(m, start + cfg.batch_size);
      Frames xb(stop - start, frames.cols());
      std::vector<int> yb(static_cast<std::size_t>(stop - start));
      for (Eigen::Index i = start; i < stop; ++i) {
        xb.row(i - start) = frames.row(order[static_cast<std::size_t>(i)]);
        yb[static_cast<std::size_t>(i - start)] = labels[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])];
      }
      double batch_loss = 0.0;
      const auto grads = projector_gradients(net, xb, yb, &batch_loss);
      adam_update(net.params, grads, net.adam, cfg);
      epoch_loss += batch_loss * static_cast<double>(stop - start);
    }
    out.epoch_loss.push_back(epoch_loss / static_cast<double>(m));
  }
  return out;
}

Eigen::VectorXd projector_embed(const ProjectorNet& net, const Eigen::VectorXd& x) {
  if (x.size() != net.input_dim()) {
    throw std::invalid_argument("projector_embed: input has dimension " + std::to_string(x.size()) + ", expected " +
                                std::to_string(net.input_dim()));
  }
  const Eigen::VectorXd h1 = (net.weight(0) * x + net.bias(0).col(0)).cwiseMax(0.0);
  return (net.weight(1) * h1 + net.bias(1).col(0)).cwiseMax(0.0);
}

Frames projector_embed_frames(const ProjectorNet& net, const Frames& frames) {
  if (frames.cols() != net.input_dim()) throw std::invalid_argument("projector_embed: dimension mismatch");
  Frames out(frames.rows(), net.embed_dim());
  for (Eigen::Index t = 0; t < frames.rows(); ++t) {
    out.row(t) = projector_embed(net, frames.row(t).transpose()).transpose();
  }
  return out;
}

std::vector<int> projector_predict(const ProjectorNet& net, const Frames& frames) {
  const Eigen::MatrixXd logits = projector_logits(net, frames);
  std::vector<int> pred(static_cast<std::size_t>(frames.rows()));
  for (Eigen::Index i = 0; i < logits.cols(); ++i) {
    Eigen::Index arg = 0;
    logits.col(i).maxCoeff(&arg);
    pred[static_cast<std::size_t>(i)] = static_cast<int>(arg);
  }
  return pred;
}

nlohmann::json to_json(const ProjectorNet& net, const AdamConfig& cfg) {
  nlohmann::json params = nlohmann::json::array();
  for (const auto& p : net.params) params.push_back(matrix_to_json(p));
  nlohmann::json m = nlohmann::json::array();
  nlohmann::json v = nlohmann::json::array();
  for (const auto& x : net.adam.m) m.push_back(matrix_to_json(x));
  for (const auto& x : net.adam.v) v.push_back(matrix_to_json(x));
  return {{"type", "projector"},
          {"arch", net.arch},
          {"params", params},
          {"adam", {{"step", net.adam.step}, {"m", m}, {"v", v}}},
          {"config",
           {{"learning_rate", cfg.learning_rate},
            {"beta1", cfg.beta1},
            {"beta2", cfg.beta2},
            {"epsilon", cfg.epsilon},
            {"batch_size", cfg.batch_size},
            {"epochs", cfg.epochs}}}};
}

ProjectorNet projector_from_json(const nlohmann::json& j) {
  ProjectorNet net;
  net.arch = j.at("arch").get<ProjectorArch>();
  check_arch(net.arch);
  for (const auto& p : j.at("params")) net.params.push_back(matrix_from_json(p));
  if (net.params.size() != 6) throw std::invalid_argument("projector json: expected 6 parameter blocks");
  for (int layer = 0; layer < 3; ++layer) {
    const auto out = net.arch[static_cast<std::size_t>(layer + 1)];
    const auto in = net.arch[static_cast<std::size_t>(layer)];
    if (net.weight(layer).rows() != out || net.weight(layer).cols() != in || net.bias(layer).rows() != out ||
        net.bias(layer).cols() != 1) {
      throw std::invalid_argument("projector json: parameter shapes do not match arch");
    }
  }
  if (j.contains("adam")) {
    const auto& a = j.at("adam");
    net.adam.step = a.at("step").get<long>();
    for (const auto& x : a.at("m")) net.adam.m.push_back(matrix_from_json(x));
    for (const auto& x : a.at("v")) net.adam.v.push_back(matrix_from_json(x));
  }
  return net;
}

}  // namespace signhmm
