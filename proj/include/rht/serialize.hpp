#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>

#include "rht/features.hpp"
#include "rht/sinkhorn.hpp"

namespace rht {

/// Bit-exact textual round trip for doubles ("%.13a" hexfloat).
std::string format_hex_double(double v);
/// Parses hexfloat or plain decimal; throws IoError on garbage.
double parse_hex_double(const std::string& token);

/// Feature map persistence: the spec and the fitted standardizer are
/// written; the parameter draws are reproduced from the spec seed on load
/// (build_feature_map is deterministic), then verified against a stored
/// checksum of the direction matrix.
void save_feature_map(std::ostream& os, const FeatureMap& map);
FeatureMap load_feature_map(std::istream& is);

/// Trained detector with its provenance: everything needed to rebuild the
/// SAA instance it was trained on (balls, m, seed) plus solution metadata.
struct DetectorRecord {
  Detector detector;
  std::string method;  // exact | cvar | genfun
  double s = 1.0;
  double gap = 0.0;
  bool partial = false;
  std::array<double, 2> lambda{0.0, 0.0};
  std::array<double, 2> beta{0.0, 0.0};  // cvar / genfun certificates only
  std::array<SinkhornBall, 2> balls;
  int m = 0;
  std::uint64_t seed = 0;  // SAA kernel-draw seed
  std::string config_hash;
};

void save_detector(std::ostream& os, const DetectorRecord& record);
DetectorRecord load_detector(std::istream& is);

void save_detector_file(const std::string& path, const DetectorRecord& record);
DetectorRecord load_detector_file(const std::string& path);

/// Worst-case cloud CSV: comment header with the config hash and the dual
/// multiplier, then one row per draw: center_index, z..., weight.
void save_cloud_csv(std::ostream& os, const WorstCaseCloud& cloud,
                    const std::string& config_hash);

}  // namespace rht
