#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "signhmm/classifier.hpp"
#include "signhmm/dataset.hpp"

namespace signhmm {

// Which dataset streams feed the classifier, and how they are fused.
struct StreamSetup {
  std::vector<std::string> modalities;
  Fusion fusion = Fusion::MaxMerge;

  nlohmann::json to_json() const;
};

// Sequences the banks of `setup` consume for one sample: one per modality
// for MaxMerge, a single joined sequence for Concat.
std::vector<FeatureSequence> sample_streams(const Sample& s, const StreamSetup& setup);

// Trains the banks for `setup` on the train split.
std::vector<ModelBank> train_banks(const Dataset& data, const StreamSetup& setup, const BankConfig& cfg);

std::vector<TestSample> test_samples(const Dataset& data, const StreamSetup& setup, Split split);

EvalReport evaluate_dataset(const Dataset& data, const std::vector<ModelBank>& banks, const StreamSetup& setup,
                            Split split);

nlohmann::json banks_to_json(const std::vector<ModelBank>& banks, const StreamSetup& setup);
std::vector<ModelBank> banks_from_json(const nlohmann::json& j, StreamSetup& setup);

struct SweepGrid {
  std::vector<int> states{kDefaultStates};
  std::vector<int> mixtures{kDefaultMixtures};
  std::vector<TopologyKind> topologies{TopologyKind::Ergodic};
  std::vector<EmissionKind> emissions{EmissionKind::Gaussian};
  std::vector<std::vector<std::string>> modalities;
  std::vector<Fusion> fusion{Fusion::MaxMerge};
};

// Grid JSON: {"states": [...], "mixtures": [...], "topologies": [...],
// "emissions": [...], "modalities": [[...], ...], "fusion": [...]}.
SweepGrid grid_from_json(const nlohmann::json& j);

struct SweepCell {
  BankConfig bank;
  StreamSetup setup;

  nlohmann::json to_json() const;
};

struct SweepRow {
  SweepCell cell;
  bool ok = false;
  double accuracy = 0.0;
  std::string error;
};

// Cartesian product of the grid. Mixture counts apply only to GMM cells and
// fusion only to multi-stream cells, so no two cells are equivalent.
std::vector<SweepCell> expand_grid(const SweepGrid& grid, const BankConfig& base);

// Trains and evaluates every cell; a failing cell is recorded, not thrown.
// Rows are sorted by descending accuracy, grid order breaking ties.
std::vector<SweepRow> sweep(const Dataset& data, const SweepGrid& grid, const BankConfig& base, Split eval_split);

nlohmann::json to_json(const std::vector<SweepRow>& rows);

}  // namespace signhmm
