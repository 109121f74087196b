#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "signhmm/dataset.hpp"

namespace signhmm {
namespace {

namespace fs = std::filesystem;

class TempDir {
 public:
  TempDir() {
    path_ = fs::temp_directory_path() /
            ("signhmm_test_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) + "_" +
             ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const fs::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary);
  out << bytes;
}

// Little-endian byte layout built independently of encode_fseq.
std::string reference_bytes(std::uint32_t version, std::uint32_t n, std::uint32_t d, const std::vector<float>& v) {
  std::string out = "FSEQ";
  for (std::uint32_t u : {version, n, d})
    for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((u >> (8 * b)) & 0xff));
  for (float f : v) {
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((bits >> (8 * b)) & 0xff));
  }
  return out;
}

FseqErrorKind decode_error(std::string_view bytes) {
  try {
    decode_fseq(bytes);
  } catch (const FseqError& e) {
    return e.kind();
  }
  ADD_FAILURE() << "decode succeeded";
  return FseqErrorKind::Io;
}

TEST(Fseq, SingleValueFile) {
  TempDir dir;
  Frames x(1, 1);
  x(0, 0) = 42.0;
  write_fseq(dir.path() / "a.fseq", x);
  EXPECT_EQ(fs::file_size(dir.path() / "a.fseq"), 20u);
  EXPECT_EQ(slurp(dir.path() / "a.fseq"), reference_bytes(1, 1, 1, {42.0f}));
  EXPECT_EQ(read_fseq(dir.path() / "a.fseq"), x);
}

TEST(Fseq, RandomRoundTripBitExact) {
  TempDir dir;
  std::mt19937_64 rng(37);
  std::normal_distribution<double> n(0.0, 100.0);
  Frames x(37, 20);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = n(rng);
  x = round_to_float(x);
  write_fseq(dir.path() / "r.fseq", x);
  EXPECT_EQ(fs::file_size(dir.path() / "r.fseq"), 16u + 4u * 37u * 20u);
  const Frames back = read_fseq(dir.path() / "r.fseq");
  EXPECT_EQ(std::memcmp(back.data(), x.data(), sizeof(double) * 740), 0);
  std::vector<float> flat;
  for (Eigen::Index r = 0; r < 37; ++r)
    for (Eigen::Index c = 0; c < 20; ++c) flat.push_back(static_cast<float>(x(r, c)));
  EXPECT_EQ(encode_fseq(x), reference_bytes(1, 37, 20, flat));
}

TEST(Fseq, ErrorKinds) {
  const std::string good = reference_bytes(1, 2, 2, {1, 2, 3, 4});
  EXPECT_EQ(decode_error(good.substr(0, good.size() - 1)), FseqErrorKind::Truncated);
  EXPECT_EQ(decode_error(good.substr(0, 10)), FseqErrorKind::Truncated);
  EXPECT_EQ(decode_error(good + "x"), FseqErrorKind::TrailingBytes);
  std::string bad_magic = good;
  bad_magic[0] = 'X';
  EXPECT_EQ(decode_error(bad_magic), FseqErrorKind::BadMagic);
  EXPECT_EQ(decode_error(reference_bytes(2, 2, 2, {1, 2, 3, 4})), FseqErrorKind::BadVersion);
  EXPECT_EQ(decode_error(reference_bytes(1, 2, 2, {1, 2, NAN, 4})), FseqErrorKind::NonFinite);
  EXPECT_EQ(decode_error(reference_bytes(1, 1, 1, {INFINITY})), FseqErrorKind::NonFinite);
  EXPECT_EQ(decode_error(reference_bytes(1, 0, 3, {})), FseqErrorKind::Empty);
  try {
    read_fseq("/nonexistent/file.fseq");
    FAIL();
  } catch (const FseqError& e) {
    EXPECT_EQ(e.kind(), FseqErrorKind::Io);
  }
}

TEST(Fseq, RejectsNonFiniteOnWrite) {
  Frames x = Frames::Zero(2, 2);
  x(1, 1) = INFINITY;
  EXPECT_THROW(encode_fseq(x), std::exception);
  // Values beyond float range overflow to infinity.
  x(1, 1) = 1e300;
  EXPECT_THROW(encode_fseq(x), std::exception);
}

TEST(Manifest, EmptyManifestIsEmptyDataset) {
  TempDir dir;
  spit(dir.path() / "manifest.jsonl", "");
  const auto d = load_dataset(dir.path() / "manifest.jsonl");
  EXPECT_TRUE(d.samples.empty());
}

void write_stream(const fs::path& p, int t, int d) {
  fs::create_directories(p.parent_path());
  write_fseq(p, Frames::Ones(t, d));
}

TEST(Manifest, DimensionInconsistency) {
  TempDir dir;
  write_stream(dir.path() / "rgb/a.fseq", 3, 20);
  write_stream(dir.path() / "rgb/b.fseq", 3, 18);
  spit(dir.path() / "manifest.jsonl",
       R"({"id": "a", "label": "x", "split": "train", "modalities": {"rgb": "rgb/a.fseq"}})"
       "\n"
       R"({"id": "b", "label": "x", "split": "train", "modalities": {"rgb": "rgb/b.fseq"}})"
       "\n");
  try {
    load_dataset(dir.path() / "manifest.jsonl");
    FAIL();
  } catch (const DatasetError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find(":2:"), std::string::npos) << msg;
    EXPECT_NE(msg.find("18"), std::string::npos) << msg;
  }
}

TEST(Manifest, DuplicateIdAndMissingFile) {
  TempDir dir;
  write_stream(dir.path() / "rgb/a.fseq", 3, 2);
  spit(dir.path() / "manifest.jsonl",
       R"({"id": "a", "label": "x", "split": "train", "modalities": {"rgb": "rgb/a.fseq"}})"
       "\n"
       R"({"id": "a", "label": "y", "split": "test", "modalities": {"rgb": "rgb/a.fseq"}})"
       "\n");
  EXPECT_THROW(load_dataset(dir.path() / "manifest.jsonl"), DatasetError);
  spit(dir.path() / "manifest.jsonl",
       R"({"id": "a", "label": "x", "split": "train", "modalities": {"rgb": "rgb/missing.fseq"}})"
       "\n");
  EXPECT_THROW(load_dataset(dir.path() / "manifest.jsonl"), DatasetError);
  spit(dir.path() / "manifest.jsonl", R"({"id": "a", "label": "x", "split": "holdout", "modalities": {}})" "\n");
  EXPECT_THROW(load_dataset(dir.path() / "manifest.jsonl"), DatasetError);
  EXPECT_THROW(load_dataset(dir.path() / "absent.jsonl"), DatasetError);
}

TEST(Synth, SingleFiveFrameSample) {
  TempDir dir;
  SynthSpec spec;
  spec.n_classes = 1;
  spec.train = 1;
  spec.test = 0;
  spec.t_min = spec.t_max = 5;
  const auto d = synth_generate(spec, dir.path());
  ASSERT_EQ(d.samples.size(), 1u);
  int files = 0;
  for (const auto& e : fs::recursive_directory_iterator(dir.path()))
    if (e.path().extension() == ".fseq") {
      ++files;
      EXPECT_EQ(fs::file_size(e.path()), 16u + 4u * 5u * 5u);
    }
  EXPECT_EQ(files, 1);
}

TEST(Synth, GeneratorLoaderRoundTrip) {
  TempDir dir;
  SynthSpec spec;
  spec.train = 5;
  spec.val = 2;
  spec.test = 3;
  spec.streams = {{"rgb", 4}, {"skeletal", 3}};
  const auto written = synth_generate(spec, dir.path());
  const auto loaded = load_dataset(dir.path() / "manifest.jsonl");
  ASSERT_EQ(loaded.samples.size(), written.samples.size());
  for (std::size_t i = 0; i < written.samples.size(); ++i) {
    const auto& a = written.samples[i];
    const auto& b = loaded.samples[i];
    EXPECT_EQ(a.id, b.id);
    EXPECT_EQ(a.label, b.label);
    EXPECT_EQ(a.split, b.split);
    ASSERT_EQ(a.streams.size(), b.streams.size());
    for (const auto& [name, seq] : a.streams) EXPECT_EQ(seq.frames, b.streams.at(name).frames);
  }
  EXPECT_EQ(loaded.split(Split::Val).size(), 6u);
  EXPECT_EQ(loaded.stream_dim("skeletal"), 3);
}

TEST(Synth, ClassMeansSpacedByDelta) {
  SynthSpec spec;
  spec.train = 200;
  spec.test = 0;
  const auto d = synth_dataset(spec);
  std::vector<double> means(3, 0.0);
  std::vector<double> counts(3, 0.0);
  for (const auto& s : d.samples) {
    const int c = std::stoi(s.label.substr(s.label.find('_') + 1));
    const auto& f = s.streams.at("rgb").frames;
    means[static_cast<std::size_t>(c)] += f.sum();
    counts[static_cast<std::size_t>(c)] += static_cast<double>(f.size());
  }
  for (int c = 0; c < 3; ++c) means[static_cast<std::size_t>(c)] /= counts[static_cast<std::size_t>(c)];
  EXPECT_NEAR(means[1] - means[0], 5.0, 0.5);
  EXPECT_NEAR(means[2] - means[1], 5.0, 0.5);
}

TEST(Synth, ByteIdenticalTrees) {
  TempDir dir;
  SynthSpec spec;
  spec.train = 4;
  spec.test = 2;
  spec.seed = 99;
  synth_generate(spec, dir.path() / "a");
  synth_generate(spec, dir.path() / "b");
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(dir.path() / "a"))
    if (e.is_regular_file()) files.push_back(fs::relative(e.path(), dir.path() / "a"));
  ASSERT_FALSE(files.empty());
  for (const auto& f : files) EXPECT_EQ(slurp(dir.path() / "a" / f), slurp(dir.path() / "b" / f)) << f;
  spec.seed = 100;
  synth_generate(spec, dir.path() / "c");
  EXPECT_NE(slurp(dir.path() / "a/rgb/c01_train_0002.fseq"), slurp(dir.path() / "c/rgb/c01_train_0002.fseq"));
}

TEST(Synth, SpecValidationAndJson) {
  SynthSpec spec;
  spec.t_min = 0;
  EXPECT_THROW(spec.validate(), std::invalid_argument);
  spec = SynthSpec{};
  spec.delta = 0.0;
  EXPECT_THROW(spec.validate(), std::invalid_argument);
  spec = SynthSpec{};
  spec.pattern = SynthPattern::Cyclic;
  spec.n_states = 3;
  spec.n_classes = 3;  // only (3-1)! = 2 distinct cycles
  EXPECT_THROW(spec.validate(), std::invalid_argument);
  spec.n_states = 4;
  EXPECT_NO_THROW(spec.validate());
  const auto back = synth_spec_from_json(to_json(spec));
  EXPECT_EQ(to_json(back), to_json(spec));
}

}  // namespace
}  // namespace signhmm
