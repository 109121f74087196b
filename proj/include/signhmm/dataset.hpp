#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "signhmm/hmm.hpp"
#include "signhmm/types.hpp"

namespace signhmm {

// ---------------------------------------------------------------------------
// .fseq: "FSEQ", u32 version (1), u32 n_frames, u32 dim, then n_frames x dim
// little-endian float32, row-major.
// ---------------------------------------------------------------------------

inline constexpr std::uint32_t kFseqVersion = 1;
inline constexpr std::size_t kFseqHeaderBytes = 16;

enum class FseqErrorKind { Io, BadMagic, BadVersion, Truncated, TrailingBytes, NonFinite, Empty };

std::string_view to_string(FseqErrorKind k);

class FseqError : public std::runtime_error {
 public:
  FseqError(FseqErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  FseqErrorKind kind() const { return kind_; }

 private:
  FseqErrorKind kind_;
};

std::string encode_fseq(const Frames& frames);
Frames decode_fseq(std::string_view bytes);

void write_fseq(const std::filesystem::path& path, const Frames& frames);
Frames read_fseq(const std::filesystem::path& path);

// Rounds every value to the nearest float32, i.e. what a write/read cycle yields.
Frames round_to_float(const Frames& frames);

// ---------------------------------------------------------------------------
// Datasets
// ---------------------------------------------------------------------------

enum class Split { Train, Val, Test };

std::string_view to_string(Split s);
Split parse_split(std::string_view name);

struct Sample {
  std::string id;
  std::string label;
  Split split = Split::Train;
  std::map<std::string, FeatureSequence> streams;  // keyed by modality name
};

struct Dataset {
  std::vector<Sample> samples;

  // Sorted unique labels over all splits.
  std::vector<std::string> labels() const;
  std::vector<const Sample*> split(Split s) const;
  // Dimension of a modality stream, or -1 if no sample has it.
  Eigen::Index stream_dim(const std::string& modality) const;
};

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Reads a JSON-lines manifest; stream paths are relative to its directory.
Dataset load_dataset(const std::filesystem::path& manifest);

// Writes <dir>/manifest.jsonl plus <dir>/<modality>/<id>.fseq.
void write_dataset(const Dataset& data, const std::filesystem::path& dir);

// ---------------------------------------------------------------------------
// Synthetic benchmarks
// ---------------------------------------------------------------------------

enum class SynthPattern {
  // Class c's state means are offset by c * delta in every dimension.
  // Sequences usually start in state 0 and move mostly forward.
  Separated,
  // All classes share state means (state s at s * delta) and start in
  // state 0; classes differ only in the order they cycle through the states.
  Cyclic,
};

struct SynthStream {
  std::string name;
  int dim = 0;
};

struct SynthSpec {
  int n_classes = 3;
  int n_states = 4;
  double delta = 5.0;
  int train = 100;
  int val = 0;
  int test = 50;
  int t_min = 20;
  int t_max = 40;
  std::uint64_t seed = 0;
  SynthPattern pattern = SynthPattern::Separated;
  std::vector<SynthStream> streams{{"rgb", 5}};

  void validate() const;
  int total_dim() const;
};

SynthSpec synth_spec_from_json(const nlohmann::json& j);
nlohmann::json to_json(const SynthSpec& s);

// One generator HMM per class over the concatenation of all streams.
std::vector<HmmModel> synth_generators(const SynthSpec& spec);

// Samples every split in memory; values are float32-exact so the result
// matches what load_dataset returns after synth_generate.
Dataset synth_dataset(const SynthSpec& spec);

Dataset synth_generate(const SynthSpec& spec, const std::filesystem::path& out_dir);

}  // namespace signhmm
