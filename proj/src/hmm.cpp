#include "signhmm/hmm.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

#include "signhmm/log_math.hpp"

namespace signhmm {

namespace {

constexpr int kGmmInitIters = 100;
constexpr int kGmmRefitIters = 20;

void check_sequences(const std::vector<FeatureSequence>& sequences, const char* who) {
  if (sequences.empty()) throw std::invalid_argument(std::string(who) + ": no training sequences");
  const auto d = sequences.front().dim();
  for (std::size_t i = 0; i < sequences.size(); ++i) {
    validate_sequence(sequences[i]);
    if (sequences[i].dim() != d) {
      throw std::invalid_argument(std::string(who) + ": sequence " + std::to_string(i) + " has dimension " +
                                  std::to_string(sequences[i].dim()) + ", expected " + std::to_string(d));
    }
  }
}

void check_input(const HmmModel& model, const FeatureSequence& seq) {
  if (seq.length() < 1) throw std::invalid_argument("empty feature sequence");
  if (seq.dim() != model.feature_dim) {
    throw std::invalid_argument("dimension mismatch: model has " + std::to_string(model.feature_dim) +
                                ", sequence has " + std::to_string(seq.dim()));
  }
}

Eigen::MatrixXd log_of(const Eigen::MatrixXd& p) {
  return p.unaryExpr([](double v) { return safe_log(v); });
}

Frames gather_rows(const std::vector<const double*>& rows, Eigen::Index dim) {
  Frames out(static_cast<Eigen::Index>(rows.size()), dim);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    out.row(static_cast<Eigen::Index>(r)) = Eigen::Map<const Eigen::RowVectorXd>(rows[r], dim);
  }
  return out;
}

// Row-normalize (counts + 1) over allowed entries.
Eigen::MatrixXd smoothed_transitions(const Eigen::MatrixXd& counts, const TransitionMask& mask) {
  const Eigen::Index n = counts.rows();
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double row = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (mask(i, j)) row += counts(i, j) + 1.0;
    }
    for (Eigen::Index j = 0; j < n; ++j) {
      if (mask(i, j)) a(i, j) = (counts(i, j) + 1.0) / row;
    }
  }
  return a;
}

int draw_categorical(const Eigen::VectorXd& probs, std::mt19937_64& rng) {
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  double run = 0.0;
  int last_positive = 0;
  for (Eigen::Index i = 0; i < probs.size(); ++i) {
    if (probs[i] <= 0.0) continue;
    last_positive = static_cast<int>(i);
    run += probs[i];
    if (u < run) return static_cast<int>(i);
  }
  return last_positive;
}

Emission fit_state_emission(const Frames& own, const Frames& pooled, EmissionKind kind, int n_mixtures,
                            std::uint64_t seed) {
  if (kind == EmissionKind::Gaussian) return fit_gaussian_mle(own.rows() > 0 ? own : pooled);
  if (own.rows() >= n_mixtures) return fit_gmm(own, n_mixtures, kGmmInitIters, seed);
  if (pooled.rows() >= n_mixtures) return fit_gmm(pooled, n_mixtures, kGmmInitIters, seed);
  const GaussianEmission g = fit_gaussian_mle(pooled);
  return GmmEmission{Eigen::VectorXd::Constant(n_mixtures, 1.0 / n_mixtures),
                     std::vector<GaussianEmission>(static_cast<std::size_t>(n_mixtures), g)};
}

}  // namespace

std::string_view to_string(TopologyKind k) {
  return k == TopologyKind::Ergodic ? "ergodic" : "left_to_right";
}

TopologyKind parse_topology(std::string_view name) {
  if (name == "ergodic") return TopologyKind::Ergodic;
  if (name == "left_to_right" || name == "ltr") return TopologyKind::LeftToRight;
  throw std::invalid_argument("unknown topology '" + std::string(name) + "'");
}

Topology build_topology(TopologyKind kind, int n_states) {
  if (n_states < 1) throw std::invalid_argument("build_topology: n_states must be >= 1");
  Topology topo{kind, n_states, TransitionMask::Constant(n_states, n_states, kind == TopologyKind::Ergodic)};
  if (kind == TopologyKind::LeftToRight) {
    for (int i = 0; i < n_states; ++i) {
      topo.mask(i, i) = true;
      if (i + 1 < n_states) topo.mask(i, i + 1) = true;
    }
  }
  return topo;
}

void validate_model(const HmmModel& model) {
  const int n = model.n_states();
  if (n < 1) throw std::invalid_argument("model has no states");
  if (model.topology.mask.rows() != n || model.topology.mask.cols() != n) {
    throw std::invalid_argument("model mask shape does not match n_states");
  }
  if (model.pi.size() != n || model.A.rows() != n || model.A.cols() != n) {
    throw std::invalid_argument("model pi/A shape does not match n_states");
  }
  if (static_cast<int>(model.emissions.size()) != n) throw std::invalid_argument("one emission per state required");
  if (model.feature_dim < 1) throw std::invalid_argument("feature_dim must be positive");
  for (const auto& e : model.emissions) {
    if (e.dim() != model.feature_dim) throw std::invalid_argument("emission dimension differs from feature_dim");
  }
  if ((model.pi.array() < 0.0).any() || std::abs(model.pi.sum() - 1.0) > 1e-9) {
    throw std::invalid_argument("pi must be a probability vector");
  }
  if (model.topology.kind == TopologyKind::LeftToRight) {
    if (model.pi[0] != 1.0) throw std::invalid_argument("left-to-right model must start in state 0");
  }
  for (int i = 0; i < n; ++i) {
    double row = 0.0;
    for (int j = 0; j < n; ++j) {
      const double a = model.A(i, j);
      if (!model.topology.mask(i, j) && a != 0.0) {
        throw std::invalid_argument("transition " + std::to_string(i) + "->" + std::to_string(j) +
                                    " is outside the topology mask");
      }
      if (a < 0.0) throw std::invalid_argument("negative transition probability");
      row += a;
    }
    if (std::abs(row - 1.0) > 1e-9) throw std::invalid_argument("transition row " + std::to_string(i) + " does not sum to 1");
  }
}

HmmModel init_model(const std::vector<FeatureSequence>& sequences, const Topology& topology,
                    EmissionKind emission_kind, int n_mixtures, std::uint64_t seed) {
  check_sequences(sequences, "init_model");
  if (n_mixtures < 1) throw std::invalid_argument("init_model: n_mixtures must be >= 1");
  const int n = topology.n_states;
  if (n < 1) throw std::invalid_argument("init_model: topology has no states");
  const Eigen::Index d = sequences.front().dim();

  std::vector<std::vector<const double*>> per_state(static_cast<std::size_t>(n));
  std::vector<const double*> all_rows;
  Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(n, n);
  for (const auto& seq : sequences) {
    const Eigen::Index t_len = seq.length();
    int prev = -1;
    for (Eigen::Index t = 0; t < t_len; ++t) {
      const int s = static_cast<int>((t * n) / t_len);
      per_state[static_cast<std::size_t>(s)].push_back(seq.frames.row(t).data());
      all_rows.push_back(seq.frames.row(t).data());
      if (prev >= 0 && topology.mask(prev, s)) counts(prev, s) += 1.0;
      prev = s;
    }
  }

  HmmModel model;
  model.topology = topology;
  model.feature_dim = static_cast<int>(d);
  model.A = smoothed_transitions(counts, topology.mask);
  if (topology.kind == TopologyKind::Ergodic) {
    model.pi = Eigen::VectorXd::Constant(n, 1.0 / n);
  } else {
    model.pi = Eigen::VectorXd::Zero(n);
    model.pi[0] = 1.0;
  }

  const Frames pooled = gather_rows(all_rows, d);
  for (int s = 0; s < n; ++s) {
    const Frames own = gather_rows(per_state[static_cast<std::size_t>(s)], d);
    model.emissions.push_back(
        fit_state_emission(own, pooled, emission_kind, n_mixtures, seed + static_cast<std::uint64_t>(s)));
  }
  return model;
}

Eigen::MatrixXd emission_log_densities(const HmmModel& model, const Frames& frames) {
  Eigen::MatrixXd b(frames.rows(), model.n_states());
  for (Eigen::Index t = 0; t < frames.rows(); ++t) {
    const auto x = frame_at(frames, t);
    for (int j = 0; j < model.n_states(); ++j) b(t, j) = model.emissions[static_cast<std::size_t>(j)].logpdf(x);
  }
  return b;
}

double log_forward(const HmmModel& model, const FeatureSequence& seq) {
  check_input(model, seq);
  const int n = model.n_states();
  const Eigen::MatrixXd b = emission_log_densities(model, seq.frames);
  const Eigen::MatrixXd log_a = log_of(model.A);

  std::vector<double> alpha(static_cast<std::size_t>(n));
  std::vector<double> next(static_cast<std::size_t>(n));
  std::vector<double> terms(static_cast<std::size_t>(n));
  for (int j = 0; j < n; ++j) alpha[static_cast<std::size_t>(j)] = safe_log(model.pi[j]) + b(0, j);
  for (Eigen::Index t = 1; t < seq.length(); ++t) {
    for (int j = 0; j < n; ++j) {
      for (int i = 0; i < n; ++i) terms[static_cast<std::size_t>(i)] = alpha[static_cast<std::size_t>(i)] + log_a(i, j);
      next[static_cast<std::size_t>(j)] = log_sum_exp(terms) + b(t, j);
    }
    alpha.swap(next);
  }
  return log_sum_exp(alpha);
}

ViterbiResult viterbi_decode(const HmmModel& model, const FeatureSequence& seq) {
  check_input(model, seq);
  const int n = model.n_states();
  const Eigen::Index t_len = seq.length();
  const Eigen::MatrixXd b = emission_log_densities(model, seq.frames);
  const Eigen::MatrixXd log_a = log_of(model.A);

  std::vector<double> delta(static_cast<std::size_t>(n));
  std::vector<double> next(static_cast<std::size_t>(n));
  Eigen::MatrixXi back(t_len, n);
  for (int j = 0; j < n; ++j) delta[static_cast<std::size_t>(j)] = safe_log(model.pi[j]) + b(0, j);
  for (Eigen::Index t = 1; t < t_len; ++t) {
    for (int j = 0; j < n; ++j) {
      double best = kNegInf;
      int arg = 0;
      for (int i = 0; i < n; ++i) {
        const double cand = delta[static_cast<std::size_t>(i)] + log_a(i, j);
        if (cand > best) {
          best = cand;
          arg = i;
        }
      }
      next[static_cast<std::size_t>(j)] = best + b(t, j);
      back(t, j) = arg;
    }
    delta.swap(next);
  }

  ViterbiResult out;
  out.path.assign(static_cast<std::size_t>(t_len), 0);
  double best = kNegInf;
  int last = -1;
  for (int j = 0; j < n; ++j) {
    if (delta[static_cast<std::size_t>(j)] > best) {
      best = delta[static_cast<std::size_t>(j)];
      last = j;
    }
  }
  if (last < 0) {
    out.log_joint = kNegInf;
    out.degenerate = true;
    return out;
  }
  out.log_joint = best;
  out.path[static_cast<std::size_t>(t_len - 1)] = last;
  for (Eigen::Index t = t_len - 1; t > 0; --t) {
    out.path[static_cast<std::size_t>(t - 1)] = back(t, out.path[static_cast<std::size_t>(t)]);
  }
  return out;
}

double path_log_joint(const HmmModel& model, const FeatureSequence& seq, const std::vector<int>& path) {
  check_input(model, seq);
  if (static_cast<Eigen::Index>(path.size()) != seq.length()) throw std::invalid_argument("path length differs from sequence length");
  double lj = safe_log(model.pi[path[0]]) + model.emissions[static_cast<std::size_t>(path[0])].logpdf(frame_at(seq.frames, 0));
  for (std::size_t t = 1; t < path.size(); ++t) {
    lj += safe_log(model.A(path[t - 1], path[t])) +
          model.emissions[static_cast<std::size_t>(path[t])].logpdf(frame_at(seq.frames, static_cast<Eigen::Index>(t)));
  }
  return lj;
}

double transition_log_prior(const HmmModel& model) {
  double lp = 0.0;
  for (int i = 0; i < model.n_states(); ++i) {
    for (int j = 0; j < model.n_states(); ++j) {
      if (model.topology.mask(i, j)) lp += safe_log(model.A(i, j));
    }
  }
  return lp;
}

TrainResult viterbi_train(HmmModel model, const std::vector<FeatureSequence>& sequences, int max_iters,
                          double rel_tol) {
  if (max_iters < 1) throw std::invalid_argument("viterbi_train: max_iters must be >= 1");
  if (!(rel_tol > 0.0)) throw std::invalid_argument("viterbi_train: rel_tol must be > 0");
  check_sequences(sequences, "viterbi_train");
  for (const auto& s : sequences) check_input(model, s);

  const int n = model.n_states();
  const Eigen::Index d = model.feature_dim;
  TrainResult result{std::move(model), {}};
  HmmModel& m = result.model;
  TrainReport& report = result.report;

  for (int iter = 1; iter <= max_iters; ++iter) {
    // E-step.
    std::vector<ViterbiResult> paths;
    paths.reserve(sequences.size());
    double total = 0.0;
    for (const auto& seq : sequences) {
      paths.push_back(viterbi_decode(m, seq));
      total += paths.back().log_joint;
    }
    const double objective = total + transition_log_prior(m);
    report.iterations = iter;
    report.log_joint_trace.push_back(total);
    report.objective_trace.push_back(objective);
    if (iter > 1) {
      const double prev = report.objective_trace[report.objective_trace.size() - 2];
      if (std::isfinite(objective) && std::isfinite(prev) &&
          std::abs(objective - prev) / (std::abs(objective) + 1.0) < rel_tol) {
        report.converged = true;
        break;
      }
    }

    // M-step.
    Eigen::VectorXd starts = Eigen::VectorXd::Zero(n);
    Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(n, n);
    std::vector<std::vector<const double*>> assigned(static_cast<std::size_t>(n));
    for (std::size_t s = 0; s < sequences.size(); ++s) {
      const auto& path = paths[s].path;
      starts[path[0]] += 1.0;
      for (std::size_t t = 0; t < path.size(); ++t) {
        assigned[static_cast<std::size_t>(path[t])].push_back(sequences[s].frames.row(static_cast<Eigen::Index>(t)).data());
        if (t > 0 && m.topology.mask(path[t - 1], path[t])) counts(path[t - 1], path[t]) += 1.0;
      }
    }
    if (m.topology.kind == TopologyKind::Ergodic) m.pi = starts / starts.sum();
    m.A = smoothed_transitions(counts, m.topology.mask);
    for (int j = 0; j < n; ++j) {
      const auto& rows = assigned[static_cast<std::size_t>(j)];
      if (rows.empty()) {
        if (std::find(report.empty_states.begin(), report.empty_states.end(), j) == report.empty_states.end()) {
          report.empty_states.push_back(j);
        }
        continue;
      }
      const Frames pts = gather_rows(rows, d);
      auto& e = m.emissions[static_cast<std::size_t>(j)];
      if (e.kind() == EmissionKind::Gaussian) {
        e = fit_gaussian_mle(pts);
      } else {
        e = refine_gmm(pts, e.gmm(), {kGmmRefitIters, 1e-6}).model;
      }
    }
  }
  std::sort(report.empty_states.begin(), report.empty_states.end());
  return result;
}

SampledSequence sample_with_states(const HmmModel& model, int length, std::uint64_t seed) {
  if (length < 1) throw std::invalid_argument("sample: length must be >= 1");
  std::mt19937_64 rng(seed);
  SampledSequence out;
  out.states.resize(static_cast<std::size_t>(length));
  out.sequence.frames.resize(length, model.feature_dim);
  int s = draw_categorical(model.pi, rng);
  for (int t = 0; t < length; ++t) {
    out.states[static_cast<std::size_t>(t)] = s;
    out.sequence.frames.row(t) = model.emissions[static_cast<std::size_t>(s)].draw(rng).transpose();
    if (t + 1 < length) s = draw_categorical(model.A.row(s).transpose(), rng);
  }
  return out;
}

FeatureSequence sample(const HmmModel& model, int length, std::uint64_t seed) {
  return sample_with_states(model, length, seed).sequence;
}

nlohmann::json to_json(const HmmModel& model) {
  nlohmann::json a = nlohmann::json::array();
  for (int i = 0; i < model.n_states(); ++i) {
    std::vector<double> row(static_cast<std::size_t>(model.n_states()));
    for (int j = 0; j < model.n_states(); ++j) row[static_cast<std::size_t>(j)] = model.A(i, j);
    a.push_back(row);
  }
  nlohmann::json em = nlohmann::json::array();
  for (const auto& e : model.emissions) em.push_back(to_json(e));
  return {{"kind", to_string(model.topology.kind)},
          {"n_states", model.n_states()},
          {"feature_dim", model.feature_dim},
          {"pi", std::vector<double>(model.pi.data(), model.pi.data() + model.pi.size())},
          {"A", a},
          {"emissions", em}};
}

HmmModel hmm_from_json(const nlohmann::json& j) {
  HmmModel model;
  const int n = j.at("n_states").get<int>();
  model.topology = build_topology(parse_topology(j.at("kind").get<std::string>()), n);
  model.feature_dim = j.at("feature_dim").get<int>();
  const auto pi = j.at("pi").get<std::vector<double>>();
  const auto& a = j.at("A");
  if (static_cast<int>(pi.size()) != n || static_cast<int>(a.size()) != n) {
    throw std::invalid_argument("hmm json: pi/A size does not match n_states");
  }
  model.pi = Eigen::Map<const Eigen::VectorXd>(pi.data(), n);
  model.A.resize(n, n);
  for (int i = 0; i < n; ++i) {
    const auto row = a[static_cast<std::size_t>(i)].get<std::vector<double>>();
    if (static_cast<int>(row.size()) != n) throw std::invalid_argument("hmm json: ragged A");
    for (int k = 0; k < n; ++k) model.A(i, k) = row[static_cast<std::size_t>(k)];
  }
  for (const auto& e : j.at("emissions")) model.emissions.push_back(emission_from_json(e));
  validate_model(model);
  return model;
}

}  // namespace signhmm
