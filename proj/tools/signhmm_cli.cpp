// Command-line driver: synthetic data, dimension reduction, HMM banks,
// evaluation and grid sweeps.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "signhmm/classifier.hpp"
#include "signhmm/dataset.hpp"
#include "signhmm/experiment.hpp"
#include "signhmm/pca.hpp"
#include "signhmm/pooling.hpp"
#include "signhmm/projector.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace signhmm;

namespace {

const CLI::Validator kPositive(
    [](std::string& value) -> std::string {
      double v = 0.0;
      if (!CLI::detail::lexical_cast(value, v) || !(v > 0.0)) return "must be positive, got " + value;
      return {};
    },
    "POSITIVE");

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return json::parse(in);
}

void write_json(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot create " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

// Train-split frames of one modality, stacked, with each frame labeled by its sample's class.
std::pair<Frames, std::vector<int>> training_frames(const Dataset& data, const std::string& modality) {
  const auto labels = data.labels();
  std::map<std::string, int> index;
  for (std::size_t i = 0; i < labels.size(); ++i) index[labels[i]] = static_cast<int>(i);
  const Eigen::Index dim = data.stream_dim(modality);
  if (dim < 0) throw std::runtime_error("no sample has a '" + modality + "' stream");
  Eigen::Index rows = 0;
  for (const Sample* s : data.split(Split::Train)) rows += s->streams.at(modality).length();
  if (rows == 0) throw std::runtime_error("no training frames for '" + modality + "'");
  Frames frames(rows, dim);
  std::vector<int> ys;
  Eigen::Index at = 0;
  for (const Sample* s : data.split(Split::Train)) {
    const auto& seq = s->streams.at(modality);
    frames.middleRows(at, seq.length()) = seq.frames;
    at += seq.length();
    ys.insert(ys.end(), static_cast<std::size_t>(seq.length()), index.at(s->label));
  }
  return {std::move(frames), std::move(ys)};
}

// Applies `fn` to one stream of every sample (dataset mode) or to a single file.
template <typename Fn>
void transform(const std::string& manifest, const std::string& modality, const std::string& in,
               const std::string& out, Fn fn) {
  if (!manifest.empty()) {
    if (modality.empty()) throw std::runtime_error("--modality is required with --manifest");
    Dataset data = load_dataset(manifest);
    for (auto& s : data.samples) {
      auto it = s.streams.find(modality);
      if (it != s.streams.end()) it->second.frames = round_to_float(fn(it->second.frames));
    }
    write_dataset(data, out);
  } else {
    if (in.empty()) throw std::runtime_error("either --manifest or --in is required");
    write_fseq(out, fn(read_fseq(in)));
  }
}

struct BankOptions {
  int states = kDefaultStates;
  std::string topology = "ergodic";
  std::string emission = "gaussian";
  int mixtures = kDefaultMixtures;
  std::string score = "viterbi";
  int max_iters = kDefaultMaxIters;
  double rel_tol = kDefaultRelTol;
  std::uint64_t seed = 0;
  int threads = 1;
  bool length_normalize = false;

  void add_to(CLI::App* app, bool with_shape) {
    if (with_shape) {
      app->add_option("--states", states, "HMM states per class model")->check(kPositive)->capture_default_str();
      app->add_option("--topology", topology, "ergodic | ltr")->check(CLI::IsMember({"ergodic", "ltr", "left_to_right"}))->capture_default_str();
      app->add_option("--emission", emission, "gaussian | gmm")->check(CLI::IsMember({"gaussian", "gmm"}))->capture_default_str();
      app->add_option("--mixtures", mixtures, "mixture components for gmm emissions")->check(kPositive)->capture_default_str();
    }
    app->add_option("--score", score, "viterbi | forward")->check(CLI::IsMember({"viterbi", "forward"}))->capture_default_str();
    app->add_option("--max-iters", max_iters, "Viterbi-training iteration cap")->check(kPositive)->capture_default_str();
    app->add_option("--rel-tol", rel_tol, "relative objective change that stops training")->check(kPositive)->capture_default_str();
    app->add_option("--seed", seed, "base seed")->capture_default_str();
    app->add_option("--threads", threads, "classes trained in parallel")->check(kPositive)->capture_default_str();
    app->add_flag("--length-normalize", length_normalize, "divide scores by sequence length (diagnostic)");
  }

  BankConfig config() const {
    BankConfig c;
    c.n_states = states;
    c.topology = parse_topology(topology);
    c.emission = parse_emission_kind(emission);
    c.n_mixtures = mixtures;
    c.score = parse_score_kind(score);
    c.max_iters = max_iters;
    c.rel_tol = rel_tol;
    c.seed = seed;
    c.threads = threads;
    c.length_normalize = length_normalize;
    return c;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"signhmm: HMM / GMM-HMM classification of multi-modal feature sequences"};
  app.require_subcommand(1);

  // synth
  std::string spec_path, out_path;
  auto* synth = app.add_subcommand("synth", "generate a synthetic benchmark dataset");
  synth->add_option("--spec", spec_path, "synthetic spec JSON")->required()->check(CLI::ExistingFile);
  synth->add_option("--out", out_path, "output directory")->required();

  // pool
  std::string pool_kind = "gap", in_path, shape_path;
  auto* pool = app.add_subcommand("pool", "global average / max pooling of flattened C*H*W tensors");
  pool->add_option("--kind", pool_kind, "gap | gmp")->check(CLI::IsMember({"gap", "gmp"}))->capture_default_str();
  pool->add_option("--in", in_path, "fseq whose rows are flattened tensors")->required()->check(CLI::ExistingFile);
  pool->add_option("--shape", shape_path, "sidecar shape JSON (default: <in>.json)");
  pool->add_option("--out", out_path, "output fseq")->required();

  // pca
  std::string manifest, modality, model_path;
  int pca_dim = kDefaultPcaDim;
  auto* pca = app.add_subcommand("pca", "principal component analysis");
  pca->require_subcommand(1);
  auto* pca_fit_cmd = pca->add_subcommand("fit", "fit on the train split of one modality");
  pca_fit_cmd->add_option("--manifest", manifest)->required()->check(CLI::ExistingFile);
  pca_fit_cmd->add_option("--modality", modality)->required();
  pca_fit_cmd->add_option("--dim", pca_dim, "output dimension")->check(kPositive)->capture_default_str();
  pca_fit_cmd->add_option("--out", out_path, "projector JSON")->required();
  auto* pca_project_cmd = pca->add_subcommand("project", "project a dataset stream or a single fseq");
  pca_project_cmd->add_option("--model", model_path)->required()->check(CLI::ExistingFile);
  pca_project_cmd->add_option("--manifest", manifest)->check(CLI::ExistingFile);
  pca_project_cmd->add_option("--modality", modality);
  pca_project_cmd->add_option("--in", in_path)->check(CLI::ExistingFile);
  pca_project_cmd->add_option("--out", out_path, "output directory (dataset) or fseq (single file)")->required();

  // projector
  int embed_dim = kDefaultEmbedDim, hidden_dim = kDefaultHiddenDim;
  AdamConfig adam;
  std::uint64_t proj_seed = 0;
  auto* proj = app.add_subcommand("projector", "trainable nonlinear projector");
  proj->require_subcommand(1);
  auto* proj_train = proj->add_subcommand("train", "train on the train split of one modality");
  proj_train->add_option("--manifest", manifest)->required()->check(CLI::ExistingFile);
  proj_train->add_option("--modality", modality)->required();
  proj_train->add_option("--embed-dim", embed_dim)->check(kPositive)->capture_default_str();
  proj_train->add_option("--hidden", hidden_dim)->check(kPositive)->capture_default_str();
  proj_train->add_option("--lr", adam.learning_rate)->check(kPositive)->capture_default_str();
  proj_train->add_option("--beta1", adam.beta1)->capture_default_str();
  proj_train->add_option("--beta2", adam.beta2)->capture_default_str();
  proj_train->add_option("--batch", adam.batch_size)->check(kPositive)->capture_default_str();
  proj_train->add_option("--epochs", adam.epochs)->check(CLI::NonNegativeNumber)->capture_default_str();
  proj_train->add_option("--seed", proj_seed)->capture_default_str();
  proj_train->add_option("--out", out_path, "projector JSON")->required();
  auto* proj_embed = proj->add_subcommand("embed", "embed a dataset stream or a single fseq");
  proj_embed->add_option("--model", model_path)->required()->check(CLI::ExistingFile);
  proj_embed->add_option("--manifest", manifest)->check(CLI::ExistingFile);
  proj_embed->add_option("--modality", modality);
  proj_embed->add_option("--in", in_path)->check(CLI::ExistingFile);
  proj_embed->add_option("--out", out_path)->required();

  // hmm train
  BankOptions bank_opts;
  std::string modalities = "rgb", fusion = "max-merge";
  auto* hmm = app.add_subcommand("hmm", "per-class HMM model banks");
  hmm->require_subcommand(1);
  auto* hmm_train = hmm->add_subcommand("train", "train one bank per stream (or one over joined streams)");
  hmm_train->add_option("--manifest", manifest)->required()->check(CLI::ExistingFile);
  hmm_train->add_option("--modalities", modalities, "comma-separated stream names")->capture_default_str();
  hmm_train->add_option("--fusion", fusion, "max-merge | concat")->check(CLI::IsMember({"max-merge", "concat"}))->capture_default_str();
  bank_opts.add_to(hmm_train, true);
  hmm_train->add_option("--out", out_path, "banks JSON")->required();

  // classify / evaluate
  std::string banks_path, split_name = "test", report_path, fusion_override;
  auto* classify_cmd = app.add_subcommand("classify", "classify every sample of a split");
  classify_cmd->add_option("--banks", banks_path)->required()->check(CLI::ExistingFile);
  classify_cmd->add_option("--manifest", manifest)->required()->check(CLI::ExistingFile);
  classify_cmd->add_option("--split", split_name)->check(CLI::IsMember({"train", "val", "test"}))->capture_default_str();
  classify_cmd->add_option("--fusion", fusion_override, "must match the banks' fusion")->check(CLI::IsMember({"max-merge", "concat"}));
  classify_cmd->add_option("--out", out_path, "JSON-lines output (default: stdout)");
  auto* evaluate_cmd = app.add_subcommand("evaluate", "accuracy and confusion matrix on a split");
  evaluate_cmd->add_option("--banks", banks_path)->required()->check(CLI::ExistingFile);
  evaluate_cmd->add_option("--manifest", manifest)->required()->check(CLI::ExistingFile);
  evaluate_cmd->add_option("--split", split_name)->check(CLI::IsMember({"train", "val", "test"}))->capture_default_str();
  evaluate_cmd->add_option("--fusion", fusion_override, "must match the banks' fusion")->check(CLI::IsMember({"max-merge", "concat"}));
  evaluate_cmd->add_option("--report", report_path, "report JSON")->required();

  // sweep
  std::string grid_path;
  BankOptions sweep_opts;
  auto* sweep_cmd = app.add_subcommand("sweep", "train and evaluate every cell of a grid");
  sweep_cmd->add_option("--grid", grid_path)->required()->check(CLI::ExistingFile);
  sweep_cmd->add_option("--manifest", manifest)->required()->check(CLI::ExistingFile);
  sweep_cmd->add_option("--split", split_name)->check(CLI::IsMember({"train", "val", "test"}))->capture_default_str();
  sweep_opts.add_to(sweep_cmd, false);
  sweep_cmd->add_option("--report", report_path, "table JSON")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) {
      const SynthSpec spec = synth_spec_from_json(read_json(spec_path));
      const Dataset data = synth_generate(spec, out_path);
      std::cout << "wrote " << data.samples.size() << " samples to " << out_path << "\n";
    } else if (*pool) {
      const fs::path shape_file = shape_path.empty() ? fs::path(in_path + ".json") : fs::path(shape_path);
      const json shape = read_json(shape_file);
      const int c = shape.at("channels").get<int>();
      const int h = shape.at("height").get<int>();
      const int w = shape.at("width").get<int>();
      const Frames in = read_fseq(in_path);
      if (in.cols() != static_cast<Eigen::Index>(c) * h * w) {
        throw std::runtime_error("tensor rows have " + std::to_string(in.cols()) + " values, shape needs " +
                                 std::to_string(static_cast<long>(c) * h * w));
      }
      Frames out(in.rows(), c);
      for (Eigen::Index t = 0; t < in.rows(); ++t) {
        FeatureTensor tensor(c, h, w, std::vector<double>(in.row(t).data(), in.row(t).data() + in.cols()));
        out.row(t) = global_pool(tensor, parse_pool_kind(pool_kind)).transpose();
      }
      write_fseq(out_path, out);
    } else if (*pca_fit_cmd) {
      const Dataset data = load_dataset(manifest);
      const auto [frames, labels] = training_frames(data, modality);
      write_json(out_path, to_json(pca_fit(frames, pca_dim)));
    } else if (*pca_project_cmd) {
      const PcaProjector p = pca_from_json(read_json(model_path));
      transform(manifest, modality, in_path, out_path, [&](const Frames& f) { return pca_project_frames(p, f); });
    } else if (*proj_train) {
      const Dataset data = load_dataset(manifest);
      const auto [frames, labels] = training_frames(data, modality);
      const int n_classes = static_cast<int>(data.labels().size());
      const ProjectorArch arch{static_cast<int>(frames.cols()), hidden_dim, embed_dim, n_classes};
      const auto result = projector_train(frames, labels, arch, adam, proj_seed);
      json j = to_json(result.net, adam);
      j["epoch_loss"] = result.epoch_loss;
      j["labels"] = data.labels();
      write_json(out_path, j);
    } else if (*proj_embed) {
      const ProjectorNet net = projector_from_json(read_json(model_path));
      transform(manifest, modality, in_path, out_path, [&](const Frames& f) { return projector_embed_frames(net, f); });
    } else if (*hmm_train) {
      const Dataset data = load_dataset(manifest);
      const StreamSetup setup{split_list(modalities), parse_fusion(fusion)};
      const BankConfig cfg = bank_opts.config();
      const auto banks = train_banks(data, setup, cfg);
      json j = banks_to_json(banks, setup);
      j["config"] = cfg.to_json();
      write_json(out_path, j);
    } else if (*classify_cmd || *evaluate_cmd) {
      const json bj = read_json(banks_path);
      StreamSetup setup;
      const auto banks = banks_from_json(bj, setup);
      if (!fusion_override.empty() && parse_fusion(fusion_override) != setup.fusion) {
        throw std::runtime_error("--fusion " + fusion_override + " does not match the banks (trained for " +
                                 std::string(to_string(setup.fusion)) + ")");
      }
      const Dataset data = load_dataset(manifest);
      const Split split = parse_split(split_name);
      if (*classify_cmd) {
        const Fusion f = setup.modalities.size() > 1 ? setup.fusion : Fusion::MaxMerge;
        std::ostringstream lines;
        for (const auto& s : test_samples(data, setup, split)) {
          const auto r = classify(banks, s.streams, f);
          lines << json{{"id", s.id},
                        {"label", s.label},
                        {"predicted", r.label},
                        {"winning_modality", banks[static_cast<std::size_t>(r.winning_stream)].sources},
                        {"scores", r.scores}}
                       .dump()
                << '\n';
        }
        if (out_path.empty()) {
          std::cout << lines.str();
        } else {
          std::ofstream(out_path, std::ios::binary | std::ios::trunc) << lines.str();
        }
      } else {
        EvalReport rep = evaluate_dataset(data, banks, setup, split);
        rep.config = {{"bank", bj.value("config", json::object())}, {"setup", setup.to_json()}, {"split", split_name}};
        write_json(report_path, to_json(rep));
        std::cout << "accuracy " << rep.accuracy << " (" << rep.predictions.size() << " samples)\n";
      }
    } else if (*sweep_cmd) {
      const Dataset data = load_dataset(manifest);
      const SweepGrid grid = grid_from_json(read_json(grid_path));
      const auto rows = sweep(data, grid, sweep_opts.config(), parse_split(split_name));
      write_json(report_path, to_json(rows));
      long failed = 0;
      for (const auto& r : rows) failed += r.ok ? 0 : 1;
      std::cout << rows.size() << " cells, " << failed << " failed\n";
      if (failed > 0) return 2;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
