#include "signhmm/types.hpp"

#include <stdexcept>
#include <string>

namespace signhmm {

std::string_view to_string(Modality m) {
  switch (m) {
    case Modality::Rgb: return "rgb";
    case Modality::Depth: return "depth";
    case Modality::Skeletal: return "skeletal";
    case Modality::Concat: return "concat";
  }
  return "unknown";
}

Modality parse_modality(std::string_view name) {
  if (name == "rgb") return Modality::Rgb;
  if (name == "depth") return Modality::Depth;
  if (name == "skeletal") return Modality::Skeletal;
  if (name == "concat") return Modality::Concat;
  throw std::invalid_argument("unknown modality '" + std::string(name) + "'");
}

void validate_sequence(const FeatureSequence& seq) {
  if (seq.length() < 1) throw std::invalid_argument("feature sequence has no frames");
  if (seq.dim() < 1) throw std::invalid_argument("feature sequence has zero dimension");
  if (!seq.frames.allFinite()) throw std::invalid_argument("feature sequence holds non-finite values");
}

}  // namespace signhmm
