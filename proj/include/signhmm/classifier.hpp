#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "signhmm/hmm.hpp"
#include "signhmm/types.hpp"

namespace signhmm {

// ---------------------------------------------------------------------------
// Skeletal features
// ---------------------------------------------------------------------------

enum class Joint { LeftHand, LeftWrist, LeftElbow, RightHand, RightWrist, RightElbow };

struct SkeletonFrame {
  std::array<Eigen::Vector3d, 6> joints;  // indexed by Joint
  Eigen::Vector3d shoulder_center = Eigen::Vector3d::Zero();
  Eigen::Vector3d hip_center = Eigen::Vector3d::Zero();
};

inline constexpr int kSkeletonDim = 18;

// Joints relative to the shoulder center, scaled by the shoulder-hip
// distance; 6 joints x (x, y, z) in Joint order.
Eigen::VectorXd normalize_skeleton(const SkeletonFrame& f);

// ---------------------------------------------------------------------------
// Early fusion
// ---------------------------------------------------------------------------

// Per-frame concatenation in the given order. Lengths must match exactly.
FeatureSequence concat_features(std::span<const FeatureSequence> parts);

// Inverse of concat_features given the part dimensions.
std::vector<FeatureSequence> split_features(const FeatureSequence& joined, std::span<const Eigen::Index> dims);

// ---------------------------------------------------------------------------
// Model banks
// ---------------------------------------------------------------------------

enum class ScoreKind { Viterbi, Forward };
enum class Fusion { MaxMerge, Concat };

std::string_view to_string(ScoreKind k);
std::string_view to_string(Fusion f);
std::string_view to_string(EmissionKind k);
ScoreKind parse_score_kind(std::string_view name);
Fusion parse_fusion(std::string_view name);
EmissionKind parse_emission_kind(std::string_view name);

struct BankConfig {
  TopologyKind topology = TopologyKind::Ergodic;
  int n_states = kDefaultStates;
  EmissionKind emission = EmissionKind::Gaussian;
  int n_mixtures = kDefaultMixtures;
  int max_iters = kDefaultMaxIters;
  double rel_tol = kDefaultRelTol;
  ScoreKind score = ScoreKind::Viterbi;
  // Divide scores by sequence length. Diagnostic only.
  bool length_normalize = false;
  std::uint64_t seed = 0;
  int threads = 1;

  void validate() const;
  nlohmann::json to_json() const;
};

struct LabeledSequence {
  FeatureSequence sequence;
  std::string label;
};

struct ModelBank {
  std::vector<std::string> labels;
  std::vector<HmmModel> models;
  Modality modality = Modality::Rgb;
  // Source streams; more than one for a Concat bank.
  std::vector<std::string> sources;
  int feature_dim = 0;
  TopologyKind topology = TopologyKind::Ergodic;
  ScoreKind score_kind = ScoreKind::Viterbi;
  bool length_normalize = false;
  std::vector<TrainReport> reports;

  std::size_t size() const { return labels.size(); }
};

// Seed for one class's model; independent of training order.
std::uint64_t class_seed(std::uint64_t base, std::string_view label);

// One model per label, each trained only on its own sequences.
ModelBank train_bank(const std::vector<LabeledSequence>& samples, const std::vector<std::string>& labels,
                     const BankConfig& cfg);
// Labels taken from the samples, sorted.
ModelBank train_bank(const std::vector<LabeledSequence>& samples, const BankConfig& cfg);

// Per-class score of one sequence, in label order.
std::vector<double> score_sequence(const ModelBank& bank, const FeatureSequence& seq);

nlohmann::json to_json(const ModelBank& bank);
ModelBank bank_from_json(const nlohmann::json& j);

// ---------------------------------------------------------------------------
// Classification
// ---------------------------------------------------------------------------

class UnclassifiableError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ClassificationResult {
  std::string label;
  int label_index = -1;
  // scores[m][c]: score of class c under stream m.
  std::vector<std::vector<double>> scores;
  int winning_stream = 0;
  Modality winning_modality = Modality::Rgb;
};

// Global argmax over scores[m][c]. Ties go to the earlier label, then the
// earlier stream.
ClassificationResult argmax_scores(std::vector<std::vector<double>> scores, const std::vector<std::string>& labels);

// MaxMerge: one bank and one sequence per modality, same label set.
// Concat: exactly one bank over the joined space and one joined sequence.
ClassificationResult classify(std::span<const ModelBank> banks, std::span<const FeatureSequence> sample,
                              Fusion fusion);

struct TestSample {
  std::string id;
  std::string label;
  std::vector<FeatureSequence> streams;  // one per bank
};

struct EvalPrediction {
  std::string id;
  std::string truth;
  std::string predicted;
  std::vector<std::vector<double>> scores;
};

struct EvalReport {
  std::vector<std::string> labels;
  double accuracy = 0.0;
  std::vector<std::vector<long>> confusion;  // [true][predicted]
  std::vector<double> per_class;
  std::vector<long> per_class_count;
  ScoreKind score_kind = ScoreKind::Viterbi;
  Fusion fusion = Fusion::MaxMerge;
  nlohmann::json config = nlohmann::json::object();
  std::vector<EvalPrediction> predictions;
};

EvalReport evaluate(std::span<const ModelBank> banks, const std::vector<TestSample>& test, Fusion fusion);

nlohmann::json to_json(const EvalReport& r, bool include_predictions = true);

}  // namespace signhmm
