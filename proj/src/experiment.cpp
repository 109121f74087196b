#include "signhmm/experiment.hpp"

#include <algorithm>
#include <numeric>
#include <set>
#include <stdexcept>

namespace signhmm {

namespace {

const FeatureSequence& stream_of(const Sample& s, const std::string& modality) {
  auto it = s.streams.find(modality);
  if (it == s.streams.end()) throw std::invalid_argument("sample '" + s.id + "' has no '" + modality + "' stream");
  return it->second;
}

void check_setup(const StreamSetup& setup) {
  if (setup.modalities.empty()) throw std::invalid_argument("no modalities selected");
  if (std::set<std::string>(setup.modalities.begin(), setup.modalities.end()).size() != setup.modalities.size()) {
    throw std::invalid_argument("modality listed twice");
  }
}

}  // namespace

nlohmann::json StreamSetup::to_json() const {
  return {{"modalities", modalities}, {"fusion", to_string(fusion)}};
}

std::vector<FeatureSequence> sample_streams(const Sample& s, const StreamSetup& setup) {
  check_setup(setup);
  std::vector<FeatureSequence> parts;
  for (const auto& m : setup.modalities) parts.push_back(stream_of(s, m));
  if (setup.fusion == Fusion::Concat && parts.size() > 1) return {concat_features(parts)};
  return parts;
}

std::vector<ModelBank> train_banks(const Dataset& data, const StreamSetup& setup, const BankConfig& cfg) {
  check_setup(setup);
  const auto train = data.split(Split::Train);
  if (train.empty()) throw std::invalid_argument("dataset has no training samples");
  const auto labels = data.labels();

  const bool joined = setup.fusion == Fusion::Concat && setup.modalities.size() > 1;
  const std::size_t n_banks = joined ? 1 : setup.modalities.size();
  std::vector<ModelBank> banks;
  for (std::size_t b = 0; b < n_banks; ++b) {
    std::vector<LabeledSequence> seqs;
    for (const Sample* s : train) seqs.push_back({sample_streams(*s, setup)[b], s->label});
    ModelBank bank = train_bank(seqs, labels, cfg);
    if (joined) {
      bank.sources = setup.modalities;
    } else {
      bank.sources = {setup.modalities[b]};
    }
    banks.push_back(std::move(bank));
  }
  return banks;
}

std::vector<TestSample> test_samples(const Dataset& data, const StreamSetup& setup, Split split) {
  std::vector<TestSample> out;
  for (const Sample* s : data.split(split)) out.push_back({s->id, s->label, sample_streams(*s, setup)});
  return out;
}

EvalReport evaluate_dataset(const Dataset& data, const std::vector<ModelBank>& banks, const StreamSetup& setup,
                            Split split) {
  const auto test = test_samples(data, setup, split);
  if (test.empty()) throw std::invalid_argument("no samples in the '" + std::string(to_string(split)) + "' split");
  const Fusion fusion = setup.modalities.size() > 1 ? setup.fusion : Fusion::MaxMerge;
  EvalReport rep = evaluate(banks, test, fusion);
  rep.fusion = setup.fusion;
  return rep;
}

nlohmann::json banks_to_json(const std::vector<ModelBank>& banks, const StreamSetup& setup) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& b : banks) arr.push_back(to_json(b));
  return {{"setup", setup.to_json()}, {"banks", arr}};
}

std::vector<ModelBank> banks_from_json(const nlohmann::json& j, StreamSetup& setup) {
  const auto& s = j.at("setup");
  setup.modalities = s.at("modalities").get<std::vector<std::string>>();
  setup.fusion = parse_fusion(s.at("fusion").get<std::string>());
  std::vector<ModelBank> banks;
  for (const auto& b : j.at("banks")) banks.push_back(bank_from_json(b));
  if (banks.empty()) throw std::invalid_argument("banks json: no banks");
  return banks;
}

SweepGrid grid_from_json(const nlohmann::json& j) {
  SweepGrid g;
  if (j.contains("states")) g.states = j.at("states").get<std::vector<int>>();
  if (j.contains("mixtures")) g.mixtures = j.at("mixtures").get<std::vector<int>>();
  if (j.contains("topologies")) {
    g.topologies.clear();
    for (const auto& t : j.at("topologies")) g.topologies.push_back(parse_topology(t.get<std::string>()));
  }
  if (j.contains("emissions")) {
    g.emissions.clear();
    for (const auto& e : j.at("emissions")) g.emissions.push_back(parse_emission_kind(e.get<std::string>()));
  }
  if (j.contains("modalities")) {
    for (const auto& m : j.at("modalities")) {
      g.modalities.push_back(m.is_string() ? std::vector<std::string>{m.get<std::string>()}
                                           : m.get<std::vector<std::string>>());
    }
  }
  if (j.contains("fusion")) {
    g.fusion.clear();
    for (const auto& f : j.at("fusion")) g.fusion.push_back(parse_fusion(f.get<std::string>()));
  }
  if (g.states.empty() || g.topologies.empty() || g.emissions.empty() || g.fusion.empty()) {
    throw std::invalid_argument("grid: states, topologies, emissions and fusion must be non-empty");
  }
  for (int n : g.states)
    if (n < 1) throw std::invalid_argument("grid: state counts must be >= 1");
  for (int k : g.mixtures)
    if (k < 1) throw std::invalid_argument("grid: mixture counts must be >= 1");
  return g;
}

nlohmann::json SweepCell::to_json() const {
  nlohmann::json j = bank.to_json();
  j["modalities"] = setup.modalities;
  j["fusion"] = setup.modalities.size() > 1 ? std::string(signhmm::to_string(setup.fusion)) : std::string("single");
  return j;
}

std::vector<SweepCell> expand_grid(const SweepGrid& grid, const BankConfig& base) {
  std::vector<SweepCell> cells;
  for (const auto& mods : grid.modalities) {
    const std::vector<Fusion> fusions = mods.size() > 1 ? grid.fusion : std::vector<Fusion>{Fusion::MaxMerge};
    for (Fusion f : fusions) {
      for (TopologyKind topo : grid.topologies) {
        for (EmissionKind em : grid.emissions) {
          const std::vector<int> mixes = em == EmissionKind::Gmm ? grid.mixtures : std::vector<int>{1};
          for (int states : grid.states) {
            for (int mix : mixes) {
              SweepCell cell;
              cell.bank = base;
              cell.bank.topology = topo;
              cell.bank.n_states = states;
              cell.bank.emission = em;
              cell.bank.n_mixtures = mix;
              cell.setup = {mods, f};
              cells.push_back(std::move(cell));
            }
          }
        }
      }
    }
  }
  return cells;
}

std::vector<SweepRow> sweep(const Dataset& data, const SweepGrid& grid, const BankConfig& base, Split eval_split) {
  SweepGrid g = grid;
  if (g.modalities.empty()) {
    std::set<std::string> names;
    for (const auto& s : data.samples) {
      for (const auto& [name, seq] : s.streams) names.insert(name);
    }
    for (const auto& n : names) g.modalities.push_back({n});
  }
  const auto cells = expand_grid(g, base);
  std::vector<SweepRow> rows;
  for (const auto& cell : cells) {
    SweepRow row{cell, false, 0.0, {}};
    try {
      const auto banks = train_banks(data, cell.setup, cell.bank);
      row.accuracy = evaluate_dataset(data, banks, cell.setup, eval_split).accuracy;
      row.ok = true;
    } catch (const std::exception& e) {
      row.error = e.what();
    }
    rows.push_back(std::move(row));
  }
  std::stable_sort(rows.begin(), rows.end(), [](const SweepRow& a, const SweepRow& b) {
    if (a.ok != b.ok) return a.ok;
    return a.accuracy > b.accuracy;
  });
  return rows;
}

nlohmann::json to_json(const std::vector<SweepRow>& rows) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : rows) {
    nlohmann::json j = {{"config", r.cell.to_json()}, {"status", r.ok ? "ok" : "failed"}};
    if (r.ok) {
      j["accuracy"] = r.accuracy;
    } else {
      j["error"] = r.error;
    }
    arr.push_back(std::move(j));
  }
  return arr;
}

}  // namespace signhmm
