#include "signhmm/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <map>
#include <set>
#include <stdexcept>
#include <string>

#include "signhmm/log_math.hpp"
#include "signhmm/seed.hpp"

namespace signhmm {

Eigen::VectorXd normalize_skeleton(const SkeletonFrame& f) {
  const double torso = (f.shoulder_center - f.hip_center).norm();
  if (!(torso > 1e-9)) throw std::invalid_argument("normalize_skeleton: shoulder and hip centers coincide");
  Eigen::VectorXd out(kSkeletonDim);
  for (std::size_t j = 0; j < f.joints.size(); ++j) {
    out.segment<3>(static_cast<Eigen::Index>(3 * j)) = (f.joints[j] - f.shoulder_center) / torso;
  }
  return out;
}

FeatureSequence concat_features(std::span<const FeatureSequence> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_features: no input sequences");
  if (parts.size() == 1) return parts.front();
  const Eigen::Index t_len = parts.front().length();
  Eigen::Index width = 0;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (parts[i].length() != t_len) {
      throw std::invalid_argument("concat_features: stream " + std::to_string(i) + " has " +
                                  std::to_string(parts[i].length()) + " frames, stream 0 has " + std::to_string(t_len));
    }
    width += parts[i].dim();
  }
  FeatureSequence out{Modality::Concat, Frames(t_len, width)};
  Eigen::Index col = 0;
  for (const auto& p : parts) {
    out.frames.middleCols(col, p.dim()) = p.frames;
    col += p.dim();
  }
  return out;
}

std::vector<FeatureSequence> split_features(const FeatureSequence& joined, std::span<const Eigen::Index> dims) {
  Eigen::Index total = 0;
  for (auto d : dims) total += d;
  if (total != joined.dim()) throw std::invalid_argument("split_features: part dimensions do not sum to the input");
  std::vector<FeatureSequence> out;
  Eigen::Index col = 0;
  for (auto d : dims) {
    out.push_back({Modality::Concat, joined.frames.middleCols(col, d)});
    col += d;
  }
  return out;
}

std::string_view to_string(ScoreKind k) { return k == ScoreKind::Viterbi ? "viterbi" : "forward"; }
std::string_view to_string(Fusion f) { return f == Fusion::MaxMerge ? "max-merge" : "concat"; }
std::string_view to_string(EmissionKind k) { return k == EmissionKind::Gaussian ? "gaussian" : "gmm"; }

ScoreKind parse_score_kind(std::string_view name) {
  if (name == "viterbi") return ScoreKind::Viterbi;
  if (name == "forward") return ScoreKind::Forward;
  throw std::invalid_argument("unknown score kind '" + std::string(name) + "'");
}

Fusion parse_fusion(std::string_view name) {
  if (name == "max-merge" || name == "max_merge") return Fusion::MaxMerge;
  if (name == "concat") return Fusion::Concat;
  throw std::invalid_argument("unknown fusion '" + std::string(name) + "'");
}

EmissionKind parse_emission_kind(std::string_view name) {
  if (name == "gaussian") return EmissionKind::Gaussian;
  if (name == "gmm") return EmissionKind::Gmm;
  throw std::invalid_argument("unknown emission kind '" + std::string(name) + "'");
}

void BankConfig::validate() const {
  if (n_states < 1) throw std::invalid_argument("n_states must be >= 1");
  if (n_mixtures < 1) throw std::invalid_argument("n_mixtures must be >= 1");
  if (max_iters < 1) throw std::invalid_argument("max_iters must be >= 1");
  if (!(rel_tol > 0.0)) throw std::invalid_argument("rel_tol must be > 0");
  if (threads < 1) throw std::invalid_argument("threads must be >= 1");
}

nlohmann::json BankConfig::to_json() const {
  return {{"topology", to_string(topology)},
          {"states", n_states},
          {"emission", to_string(emission)},
          {"mixtures", emission == EmissionKind::Gmm ? n_mixtures : 1},
          {"max_iters", max_iters},
          {"rel_tol", rel_tol},
          {"score", to_string(score)},
          {"length_normalize", length_normalize},
          {"seed", seed}};
}

std::uint64_t class_seed(std::uint64_t base, std::string_view label) {
  return derive_seed(base, {stable_hash(label)});
}

ModelBank train_bank(const std::vector<LabeledSequence>& samples, const std::vector<std::string>& labels,
                     const BankConfig& cfg) {
  cfg.validate();
  if (labels.empty()) throw std::invalid_argument("train_bank: no class labels");
  if (std::set<std::string>(labels.begin(), labels.end()).size() != labels.size()) {
    throw std::invalid_argument("train_bank: duplicate class labels");
  }
  std::map<std::string, std::vector<FeatureSequence>> by_label;
  for (const auto& l : labels) by_label[l];
  for (const auto& s : samples) {
    auto it = by_label.find(s.label);
    if (it == by_label.end()) throw std::invalid_argument("train_bank: sample label '" + s.label + "' is not in the label set");
    it->second.push_back(s.sequence);
  }
  std::vector<std::string> missing;
  for (const auto& l : labels) {
    if (by_label[l].empty()) missing.push_back(l);
  }
  if (!missing.empty()) {
    std::string msg = "train_bank: no training sequences for class";
    for (const auto& m : missing) msg += " '" + m + "'";
    throw std::invalid_argument(msg);
  }
  const auto dim = samples.front().sequence.dim();
  for (const auto& s : samples) {
    if (s.sequence.dim() != dim) throw std::invalid_argument("train_bank: sequences disagree on feature dimension");
  }

  const Topology topo = build_topology(cfg.topology, cfg.n_states);
  auto train_one = [&](const std::string& label) {
    const auto& seqs = by_label.at(label);
    const std::uint64_t seed = class_seed(cfg.seed, label);
    HmmModel init = init_model(seqs, topo, cfg.emission, cfg.n_mixtures, seed);
    return viterbi_train(std::move(init), seqs, cfg.max_iters, cfg.rel_tol);
  };

  std::vector<TrainResult> trained(labels.size());
  if (cfg.threads <= 1) {
    for (std::size_t c = 0; c < labels.size(); ++c) trained[c] = train_one(labels[c]);
  } else {
    for (std::size_t start = 0; start < labels.size(); start += static_cast<std::size_t>(cfg.threads)) {
      const std::size_t stop = std::min(labels.size(), start + static_cast<std::size_t>(cfg.threads));
      std::vector<std::future<TrainResult>> jobs;
      for (std::size_t c = start; c < stop; ++c) {
        jobs.push_back(std::async(std::launch::async, train_one, std::cref(labels[c])));
      }
      for (std::size_t c = start; c < stop; ++c) trained[c] = jobs[c - start].get();
    }
  }

  ModelBank bank;
  bank.labels = labels;
  bank.modality = samples.front().sequence.modality;
  bank.sources = {std::string(to_string(bank.modality))};
  bank.feature_dim = static_cast<int>(dim);
  bank.topology = cfg.topology;
  bank.score_kind = cfg.score;
  bank.length_normalize = cfg.length_normalize;
  for (auto& t : trained) {
    bank.models.push_back(std::move(t.model));
    bank.reports.push_back(std::move(t.report));
  }
  return bank;
}

ModelBank train_bank(const std::vector<LabeledSequence>& samples, const BankConfig& cfg) {
  std::set<std::string> labels;
  for (const auto& s : samples) labels.insert(s.label);
  return train_bank(samples, std::vector<std::string>(labels.begin(), labels.end()), cfg);
}

std::vector<double> score_sequence(const ModelBank& bank, const FeatureSequence& seq) {
  std::vector<double> scores;
  scores.reserve(bank.models.size());
  for (const auto& m : bank.models) {
    double s = bank.score_kind == ScoreKind::Forward ? log_forward(m, seq) : viterbi_decode(m, seq).log_joint;
    if (bank.length_normalize) s /= static_cast<double>(seq.length());
    scores.push_back(s);
  }
  return scores;
}

nlohmann::json to_json(const ModelBank& bank) {
  nlohmann::json models = nlohmann::json::array();
  for (const auto& m : bank.models) models.push_back(to_json(m));
  return {{"labels", bank.labels},
          {"modality", to_string(bank.modality)},
          {"sources", bank.sources},
          {"feature_dim", bank.feature_dim},
          {"topology", to_string(bank.topology)},
          {"score_kind", to_string(bank.score_kind)},
          {"length_normalize", bank.length_normalize},
          {"models", models}};
}

ModelBank bank_from_json(const nlohmann::json& j) {
  ModelBank bank;
  bank.labels = j.at("labels").get<std::vector<std::string>>();
  bank.modality = parse_modality(j.at("modality").get<std::string>());
  bank.sources = j.at("sources").get<std::vector<std::string>>();
  bank.feature_dim = j.at("feature_dim").get<int>();
  bank.topology = parse_topology(j.at("topology").get<std::string>());
  bank.score_kind = parse_score_kind(j.at("score_kind").get<std::string>());
  bank.length_normalize = j.value("length_normalize", false);
  for (const auto& m : j.at("models")) bank.models.push_back(hmm_from_json(m));
  if (bank.models.size() != bank.labels.size()) throw std::invalid_argument("bank json: one model per label required");
  for (const auto& m : bank.models) {
    if (m.feature_dim != bank.feature_dim || m.topology.kind != bank.topology) {
      throw std::invalid_argument("bank json: models disagree with the bank's feature space or topology");
    }
  }
  return bank;
}

ClassificationResult argmax_scores(std::vector<std::vector<double>> scores, const std::vector<std::string>& labels) {
  ClassificationResult r;
  double best = kNegInf;
  for (std::size_t c = 0; c < labels.size(); ++c) {
    for (std::size_t m = 0; m < scores.size(); ++m) {
      if (scores[m].size() != labels.size()) throw std::invalid_argument("classify: score vector has the wrong length");
      const double s = scores[m][c];
      if (std::isnan(s)) throw std::invalid_argument("classify: NaN score");
      if (s > best) {
        best = s;
        r.label_index = static_cast<int>(c);
        r.winning_stream = static_cast<int>(m);
      }
    }
  }
  if (r.label_index < 0) throw UnclassifiableError("classify: every class scored -inf");
  r.label = labels[static_cast<std::size_t>(r.label_index)];
  r.scores = std::move(scores);
  return r;
}

ClassificationResult classify(std::span<const ModelBank> banks, std::span<const FeatureSequence> sample,
                              Fusion fusion) {
  if (banks.empty()) throw std::invalid_argument("classify: no model banks");
  if (banks.size() != sample.size()) throw std::invalid_argument("classify: one sequence per bank required");
  if (fusion == Fusion::Concat && banks.size() != 1) {
    throw std::invalid_argument("classify: concat fusion takes exactly one bank over the joined features");
  }
  for (const auto& b : banks) {
    if (b.labels != banks.front().labels) throw std::invalid_argument("classify: banks disagree on the label set");
  }
  std::vector<std::vector<double>> scores;
  for (std::size_t m = 0; m < banks.size(); ++m) scores.push_back(score_sequence(banks[m], sample[m]));
  ClassificationResult r = argmax_scores(std::move(scores), banks.front().labels);
  r.winning_modality = banks[static_cast<std::size_t>(r.winning_stream)].modality;
  return r;
}

EvalReport evaluate(std::span<const ModelBank> banks, const std::vector<TestSample>& test, Fusion fusion) {
  if (banks.empty()) throw std::invalid_argument("evaluate: no model banks");
  EvalReport rep;
  rep.labels = banks.front().labels;
  rep.score_kind = banks.front().score_kind;
  rep.fusion = fusion;
  const std::size_t c = rep.labels.size();
  rep.confusion.assign(c, std::vector<long>(c, 0));
  rep.per_class.assign(c, 0.0);
  rep.per_class_count.assign(c, 0);

  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < c; ++i) index[rep.labels[i]] = i;

  long correct = 0;
  for (const auto& s : test) {
    const auto it = index.find(s.label);
    if (it == index.end()) throw std::invalid_argument("evaluate: test label '" + s.label + "' unknown to the bank");
    EvalPrediction p{s.id, s.label, {}, {}};
    std::size_t predicted = 0;
    try {
      const auto r = classify(banks, s.streams, fusion);
      predicted = static_cast<std::size_t>(r.label_index);
      p.scores = r.scores;
    } catch (const UnclassifiableError&) {
      // All -inf: every label ties, so the first one wins.
      predicted = 0;
      p.scores.assign(banks.size(), std::vector<double>(c, kNegInf));
    }
    p.predicted = rep.labels[predicted];
    ++rep.confusion[it->second][predicted];
    ++rep.per_class_count[it->second];
    if (predicted == it->second) ++correct;
    rep.predictions.push_back(std::move(p));
  }
  for (std::size_t i = 0; i < c; ++i) {
    if (rep.per_class_count[i] > 0) {
      rep.per_class[i] = static_cast<double>(rep.confusion[i][i]) / static_cast<double>(rep.per_class_count[i]);
    }
  }
  rep.accuracy = test.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(test.size());
  return rep;
}

nlohmann::json to_json(const EvalReport& r, bool include_predictions) {
  nlohmann::json per_class = nlohmann::json::object();
  for (std::size_t i = 0; i < r.labels.size(); ++i) per_class[r.labels[i]] = r.per_class[i];
  nlohmann::json out = {{"config", r.config},
                        {"accuracy", r.accuracy},
                        {"labels", r.labels},
                        {"confusion", r.confusion},
                        {"per_class", per_class},
                        {"per_class_count", r.per_class_count},
                        {"score_kind", to_string(r.score_kind)},
                        {"fusion", to_string(r.fusion)}};
  if (include_predictions) {
    nlohmann::json samples = nlohmann::json::array();
    for (const auto& p : r.predictions) {
      // JSON has no infinity; -inf scores are written as null.
      nlohmann::json scores = nlohmann::json::array();
      for (const auto& row : p.scores) {
        nlohmann::json jr = nlohmann::json::array();
        for (double v : row) jr.push_back(std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr));
        scores.push_back(jr);
      }
      samples.push_back({{"id", p.id}, {"truth", p.truth}, {"predicted", p.predicted}, {"scores", scores}});
    }
    out["samples"] = samples;
  }
  return out;
}

}  // namespace signhmm
