#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "signhmm/emissions.hpp"
#include "signhmm/types.hpp"

namespace signhmm {

enum class TopologyKind { Ergodic, LeftToRight };

std::string_view to_string(TopologyKind k);
TopologyKind parse_topology(std::string_view name);

using TransitionMask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

struct Topology {
  TopologyKind kind = TopologyKind::Ergodic;
  int n_states = 0;
  TransitionMask mask;  // mask(i, j): transition i -> j allowed
};

Topology build_topology(TopologyKind kind, int n_states);

struct HmmModel {
  Topology topology;
  Eigen::VectorXd pi;
  Eigen::MatrixXd A;  // row-stochastic, zero where the mask is false
  std::vector<Emission> emissions;
  int feature_dim = 0;

  int n_states() const { return topology.n_states; }
};

// Throws std::invalid_argument when a structural invariant is broken.
void validate_model(const HmmModel& model);

inline constexpr int kDefaultStates = 10;
inline constexpr int kDefaultMaxIters = 100;
inline constexpr double kDefaultRelTol = 1e-4;

// Uniform temporal segmentation followed by per-state fitting.
HmmModel init_model(const std::vector<FeatureSequence>& sequences, const Topology& topology,
                    EmissionKind emission_kind, int n_mixtures, std::uint64_t seed);

// T x N matrix of per-frame, per-state emission log-densities.
Eigen::MatrixXd emission_log_densities(const HmmModel& model, const Frames& frames);

double log_forward(const HmmModel& model, const FeatureSequence& seq);

struct ViterbiResult {
  std::vector<int> path;
  double log_joint = 0.0;
  // Set when every path has zero probability; `path` is then all zeros.
  bool degenerate = false;
};

ViterbiResult viterbi_decode(const HmmModel& model, const FeatureSequence& seq);

// log p(path, seq) for an explicit state path.
double path_log_joint(const HmmModel& model, const FeatureSequence& seq, const std::vector<int>& path);

struct TrainReport {
  int iterations = 0;
  // Training objective per iteration: total Viterbi-path log joint plus the
  // log of the add-one transition prior (see viterbi_train).
  std::vector<double> objective_trace;
  // Total Viterbi-path log joint per iteration, without the prior term.
  std::vector<double> log_joint_trace;
  bool converged = false;
  // States that received no frames in some M-step and kept their emission.
  std::vector<int> empty_states;
};

struct TrainResult {
  HmmModel model;
  TrainReport report;
};

// Log of the add-one (Dirichlet, alpha = 2) prior on allowed transitions,
// up to a constant: sum over allowed (i, j) of log A(i, j).
double transition_log_prior(const HmmModel& model);

// Hard-EM (segmental k-means) training.
//
// Each iteration decodes every sequence with the current model (E), records
// the objective, stops if its relative change is below rel_tol, and otherwise
// refits (M): pi from path starts (ergodic only), A from path transition
// counts with add-one smoothing on allowed entries, and each state's
// emission from its assigned frames. Gaussian states are refit by MLE;
// mixture states by EM warm-started from the current mixture.
//
// Add-one smoothing is the MAP estimate under a Dirichlet prior, so the
// recorded objective includes transition_log_prior. With that term the
// trace is non-decreasing.
TrainResult viterbi_train(HmmModel model, const std::vector<FeatureSequence>& sequences,
                          int max_iters = kDefaultMaxIters, double rel_tol = kDefaultRelTol);

struct SampledSequence {
  std::vector<int> states;
  FeatureSequence sequence;
};

SampledSequence sample_with_states(const HmmModel& model, int length, std::uint64_t seed);
FeatureSequence sample(const HmmModel& model, int length, std::uint64_t seed);

nlohmann::json to_json(const HmmModel& model);
HmmModel hmm_from_json(const nlohmann::json& j);

}  // namespace signhmm
