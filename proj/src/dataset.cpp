#include "signhmm/dataset.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <bit>
#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "signhmm/seed.hpp"

namespace signhmm {

namespace fs = std::filesystem;

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffU));
}

std::uint32_t get_u32(std::string_view bytes, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[at + static_cast<std::size_t>(i)])) << (8 * i);
  return v;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FseqError(FseqErrorKind::Io, "cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) throw FseqError(FseqErrorKind::Io, "read failed for " + path.string());
  return std::move(buf).str();
}

}  // namespace

std::string_view to_string(FseqErrorKind k) {
  switch (k) {
    case FseqErrorKind::Io: return "io";
    case FseqErrorKind::BadMagic: return "bad-magic";
    case FseqErrorKind::BadVersion: return "bad-version";
    case FseqErrorKind::Truncated: return "truncated";
    case FseqErrorKind::TrailingBytes: return "trailing-bytes";
    case FseqErrorKind::NonFinite: return "non-finite";
    case FseqErrorKind::Empty: return "empty";
  }
  return "unknown";
}

std::string encode_fseq(const Frames& frames) {
  if (frames.rows() < 1 || frames.cols() < 1) throw FseqError(FseqErrorKind::Empty, "fseq: sequence has no frames or no dimensions");
  if (frames.rows() > 0xffffffffLL || frames.cols() > 0xffffffffLL) throw FseqError(FseqErrorKind::Io, "fseq: shape exceeds 32-bit header");
  std::string out;
  out.reserve(kFseqHeaderBytes + 4 * static_cast<std::size_t>(frames.size()));
  out += "FSEQ";
  put_u32(out, kFseqVersion);
  put_u32(out, static_cast<std::uint32_t>(frames.rows()));
  put_u32(out, static_cast<std::uint32_t>(frames.cols()));
  for (Eigen::Index t = 0; t < frames.rows(); ++t) {
    for (Eigen::Index i = 0; i < frames.cols(); ++i) {
      const float v = static_cast<float>(frames(t, i));
      if (!std::isfinite(v)) {
        throw FseqError(FseqErrorKind::NonFinite, "fseq: non-finite value at frame " + std::to_string(t) + ", dim " + std::to_string(i));
      }
      put_u32(out, std::bit_cast<std::uint32_t>(v));
    }
  }
  return out;
}

Frames decode_fseq(std::string_view bytes) {
  if (bytes.size() < 4) throw FseqError(FseqErrorKind::Truncated, "fseq: file shorter than its magic");
  if (bytes.substr(0, 4) != "FSEQ") throw FseqError(FseqErrorKind::BadMagic, "fseq: bad magic");
  if (bytes.size() < kFseqHeaderBytes) throw FseqError(FseqErrorKind::Truncated, "fseq: truncated header");
  const std::uint32_t version = get_u32(bytes, 4);
  if (version != kFseqVersion) throw FseqError(FseqErrorKind::BadVersion, "fseq: unsupported version " + std::to_string(version));
  const std::uint32_t n = get_u32(bytes, 8);
  const std::uint32_t d = get_u32(bytes, 12);
  if (n == 0 || d == 0) throw FseqError(FseqErrorKind::Empty, "fseq: zero frames or zero dimension");
  const std::uint64_t expected = kFseqHeaderBytes + 4ULL * n * d;
  if (bytes.size() < expected) {
    throw FseqError(FseqErrorKind::Truncated, "fseq: payload truncated (" + std::to_string(bytes.size()) + " of " +
                                                  std::to_string(expected) + " bytes)");
  }
  if (bytes.size() > expected) throw FseqError(FseqErrorKind::TrailingBytes, "fseq: trailing bytes after payload");
  Frames frames(n, d);
  std::size_t at = kFseqHeaderBytes;
  for (std::uint32_t t = 0; t < n; ++t) {
    for (std::uint32_t i = 0; i < d; ++i, at += 4) {
      const float v = std::bit_cast<float>(get_u32(bytes, at));
      if (!std::isfinite(v)) {
        throw FseqError(FseqErrorKind::NonFinite, "fseq: non-finite value at frame " + std::to_string(t) + ", dim " + std::to_string(i));
      }
      frames(t, i) = v;
    }
  }
  return frames;
}

void write_fseq(const fs::path& path, const Frames& frames) {
  const std::string bytes = encode_fseq(frames);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FseqError(FseqErrorKind::Io, "cannot create " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FseqError(FseqErrorKind::Io, "write failed for " + path.string());
}

Frames read_fseq(const fs::path& path) { return decode_fseq(read_file(path)); }

Frames round_to_float(const Frames& frames) {
  return frames.unaryExpr([](double v) { return static_cast<double>(static_cast<float>(v)); });
}

std::string_view to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "unknown";
}

Split parse_split(std::string_view name) {
  if (name == "train") return Split::Train;
  if (name == "val") return Split::Val;
  if (name == "test") return Split::Test;
  throw std::invalid_argument("unknown split '" + std::string(name) + "'");
}

std::vector<std::string> Dataset::labels() const {
  std::set<std::string> set;
  for (const auto& s : samples) set.insert(s.label);
  return {set.begin(), set.end()};
}

std::vector<const Sample*> Dataset::split(Split which) const {
  std::vector<const Sample*> out;
  for (const auto& s : samples) {
    if (s.split == which) out.push_back(&s);
  }
  return out;
}

Eigen::Index Dataset::stream_dim(const std::string& modality) const {
  for (const auto& s : samples) {
    auto it = s.streams.find(modality);
    if (it != s.streams.end()) return it->second.dim();
  }
  return -1;
}

Dataset load_dataset(const fs::path& manifest) {
  std::ifstream in(manifest);
  if (!in) throw DatasetError("cannot open manifest " + manifest.string());
  const fs::path base = manifest.parent_path();
  Dataset data;
  std::set<std::string> ids;
  std::map<std::string, std::pair<Eigen::Index, std::size_t>> dims;  // modality -> (dim, first line)
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = manifest.filename().string() + ":" + std::to_string(lineno) + ": ";
    try {
      const auto j = nlohmann::json::parse(line);
      Sample s;
      s.id = j.at("id").get<std::string>();
      s.label = j.at("label").get<std::string>();
      s.split = parse_split(j.at("split").get<std::string>());
      if (!ids.insert(s.id).second) throw DatasetError("duplicate id '" + s.id + "'");
      for (const auto& [name, rel] : j.at("modalities").items()) {
        const fs::path path = base / rel.get<std::string>();
        FeatureSequence seq{parse_modality(name), read_fseq(path)};
        auto [it, fresh] = dims.try_emplace(name, seq.dim(), lineno);
        if (!fresh && it->second.first != seq.dim()) {
          throw DatasetError("modality '" + name + "' has dimension " + std::to_string(seq.dim()) + " but line " +
                             std::to_string(it->second.second) + " established " + std::to_string(it->second.first));
        }
        s.streams.emplace(name, std::move(seq));
      }
      data.samples.push_back(std::move(s));
    } catch (const std::exception& e) {
      throw DatasetError(where + e.what());
    }
  }
  return data;
}

void write_dataset(const Dataset& data, const fs::path& dir) {
  fs::create_directories(dir);
  std::ofstream manifest(dir / "manifest.jsonl", std::ios::binary | std::ios::trunc);
  if (!manifest) throw DatasetError("cannot create " + (dir / "manifest.jsonl").string());
  for (const auto& s : data.samples) {
    nlohmann::json streams = nlohmann::json::object();
    for (const auto& [name, seq] : s.streams) {
      const fs::path rel = fs::path(name) / (s.id + ".fseq");
      fs::create_directories(dir / name);
      write_fseq(dir / rel, seq.frames);
      streams[name] = rel.generic_string();
    }
    const nlohmann::json j = {{"id", s.id}, {"label", s.label}, {"split", to_string(s.split)}, {"modalities", streams}};
    manifest << j.dump() << '\n';
  }
  if (!manifest) throw DatasetError("write failed for manifest in " + dir.string());
}

void SynthSpec::validate() const {
  if (n_classes < 1) throw std::invalid_argument("synth: n_classes must be >= 1");
  if (n_states < 1) throw std::invalid_argument("synth: n_states must be >= 1");
  if (!(delta > 0.0)) throw std::invalid_argument("synth: delta must be > 0");
  if (train < 0 || val < 0 || test < 0) throw std::invalid_argument("synth: split sizes must be non-negative");
  if (t_min < 1 || t_max < t_min) throw std::invalid_argument("synth: need 1 <= t_min <= t_max");
  if (streams.empty()) throw std::invalid_argument("synth: at least one stream required");
  std::set<std::string> names;
  for (const auto& s : streams) {
    if (s.dim < 1) throw std::invalid_argument("synth: stream '" + s.name + "' needs a positive dim");
    parse_modality(s.name);
    if (!names.insert(s.name).second) throw std::invalid_argument("synth: duplicate stream '" + s.name + "'");
  }
  if (pattern == SynthPattern::Cyclic) {
    if (n_states < 3) throw std::invalid_argument("synth: cyclic pattern needs n_states >= 3");
    long orders = 1;
    for (int k = 2; k < n_states && orders < n_classes; ++k) orders *= k;
    if (orders < n_classes) throw std::invalid_argument("synth: not enough distinct cycles for n_classes");
  }
}

int SynthSpec::total_dim() const {
  int d = 0;
  for (const auto& s : streams) d += s.dim;
  return d;
}

SynthSpec synth_spec_from_json(const nlohmann::json& j) {
  SynthSpec s;
  s.n_classes = j.value("n_classes", s.n_classes);
  s.n_states = j.value("n_states", s.n_states);
  s.delta = j.value("delta", s.delta);
  s.train = j.value("train", s.train);
  s.val = j.value("val", s.val);
  s.test = j.value("test", s.test);
  s.t_min = j.value("t_min", s.t_min);
  s.t_max = j.value("t_max", s.t_max);
  s.seed = j.value("seed", s.seed);
  const std::string pattern = j.value("pattern", std::string("separated"));
  if (pattern == "separated") {
    s.pattern = SynthPattern::Separated;
  } else if (pattern == "cyclic") {
    s.pattern = SynthPattern::Cyclic;
  } else {
    throw std::invalid_argument("synth: unknown pattern '" + pattern + "'");
  }
  if (j.contains("streams")) {
    s.streams.clear();
    for (const auto& st : j.at("streams")) s.streams.push_back({st.at("name").get<std::string>(), st.at("dim").get<int>()});
  }
  s.validate();
  return s;
}

nlohmann::json to_json(const SynthSpec& s) {
  nlohmann::json streams = nlohmann::json::array();
  for (const auto& st : s.streams) streams.push_back({{"name", st.name}, {"dim", st.dim}});
  return {{"n_classes", s.n_classes}, {"n_states", s.n_states}, {"delta", s.delta},   {"train", s.train},
          {"val", s.val},             {"test", s.test},         {"t_min", s.t_min},   {"t_max", s.t_max},
          {"seed", s.seed},           {"pattern", s.pattern == SynthPattern::Cyclic ? "cyclic" : "separated"},
          {"streams", streams}};
}

std::vector<HmmModel> synth_generators(const SynthSpec& spec) {
  spec.validate();
  const int n = spec.n_states;
  const int d = spec.total_dim();
  std::vector<HmmModel> gens;
  std::vector<int> order(static_cast<std::size_t>(n - 1));
  for (int i = 0; i < n - 1; ++i) order[static_cast<std::size_t>(i)] = i + 1;

  for (int c = 0; c < spec.n_classes; ++c) {
    std::mt19937_64 rng(derive_seed(spec.seed, {1, static_cast<std::uint64_t>(c)}));
    HmmModel g;
    g.topology = build_topology(TopologyKind::Ergodic, n);
    g.feature_dim = d;
    g.pi = Eigen::VectorXd::Constant(n, 1.0 / n);
    g.A = Eigen::MatrixXd::Zero(n, n);

    if (spec.pattern == SynthPattern::Separated) {
      std::uniform_real_distribution<double> spread(-2.0, 2.0);
      Eigen::MatrixXd offsets(n, d);
      for (int s = 0; s < n; ++s) {
        for (int i = 0; i < d; ++i) offsets(s, i) = spread(rng);
      }
      offsets.rowwise() -= offsets.colwise().mean();
      // Mostly forward progression through the states, one pass per sequence
      // of average length, with random mass on every other transition.
      const double dwell = std::max(2.0, 0.5 * (spec.t_min + spec.t_max) / n);
      std::uniform_real_distribution<double> jitter(0.0, 1.0);
      for (int s = 0; s < n; ++s) {
        Eigen::VectorXd other(n);
        for (int k = 0; k < n; ++k) other[k] = jitter(rng);
        other /= other.sum();
        g.A.row(s) = 0.1 * other.transpose();
        g.A(s, s) += 0.9 * (1.0 - 1.0 / dwell);
        g.A(s, std::min(s + 1, n - 1)) += 0.9 / dwell;
        Eigen::VectorXd mean = offsets.row(s).transpose();
        mean.array() += c * spec.delta;
        g.emissions.emplace_back(GaussianEmission{mean, Eigen::VectorXd::Ones(d)});
      }
      g.pi = Eigen::VectorXd::Constant(n, 0.1 / n);
      g.pi[0] += 0.9;
    } else {
      // Cycle 0 -> order[0] -> ... -> order[n-2] -> 0, one distinct order per
      // class, entered at state 0. Dwell times give about 1.5 cycles per
      // sequence of average length.
      std::vector<int> cycle{0};
      cycle.insert(cycle.end(), order.begin(), order.end());
      const double dwell = std::max(2.0, 0.5 * (spec.t_min + spec.t_max) / (1.5 * n));
      const double leak = 0.02;
      const double stay = 1.0 - 1.0 / dwell;
      const double rest = n > 2 ? leak / (n - 2) : 0.0;
      for (int p = 0; p < n; ++p) {
        const int from = cycle[static_cast<std::size_t>(p)];
        const int to = cycle[static_cast<std::size_t>((p + 1) % n)];
        for (int k = 0; k < n; ++k) g.A(from, k) = rest;
        g.A(from, from) = stay;
        g.A(from, to) = 1.0 - stay - (n > 2 ? leak : 0.0);
      }
      g.pi = Eigen::VectorXd::Zero(n);
      g.pi[0] = 1.0;
      for (int s = 0; s < n; ++s) {
        g.emissions.emplace_back(GaussianEmission{Eigen::VectorXd::Constant(d, s * spec.delta), Eigen::VectorXd::Ones(d)});
      }
      std::next_permutation(order.begin(), order.end());
    }
    validate_model(g);
    gens.push_back(std::move(g));
  }
  return gens;
}

Dataset synth_dataset(const SynthSpec& spec) {
  const auto gens = synth_generators(spec);
  Dataset data;
  const std::array<std::pair<Split, int>, 3> splits{{{Split::Train, spec.train}, {Split::Val, spec.val}, {Split::Test, spec.test}}};
  for (int c = 0; c < spec.n_classes; ++c) {
    for (const auto& [split, count] : splits) {
      for (int i = 0; i < count; ++i) {
        const std::uint64_t sseed = derive_seed(spec.seed, {2, static_cast<std::uint64_t>(c),
                                                            static_cast<std::uint64_t>(split), static_cast<std::uint64_t>(i)});
        std::mt19937_64 rng(sseed);
        const int length = std::uniform_int_distribution<int>(spec.t_min, spec.t_max)(rng);
        const Frames joined = round_to_float(sample(gens[static_cast<std::size_t>(c)], length, splitmix64(sseed)).frames);

        char id[64];
        std::snprintf(id, sizeof id, "c%02d_%s_%04d", c, std::string(to_string(split)).c_str(), i);
        Sample s{id, "class_" + std::to_string(c), split, {}};
        Eigen::Index col = 0;
        for (const auto& st : spec.streams) {
          s.streams.emplace(st.name, FeatureSequence{parse_modality(st.name), joined.middleCols(col, st.dim)});
          col += st.dim;
        }
        data.samples.push_back(std::move(s));
      }
    }
  }
  return data;
}

Dataset synth_generate(const SynthSpec& spec, const fs::path& out_dir) {
  Dataset data = synth_dataset(spec);
  write_dataset(data, out_dir);
  return data;
}

}  // namespace signhmm
