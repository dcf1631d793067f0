#include "rht/serialize.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "rht/errors.hpp"

namespace rht {

std::string format_hex_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.13a", v);
  return buf;
}

double parse_hex_double(const std::string& token) {
  const char* begin = token.c_str();
  char* end = nullptr;
  const double v = std::strtod(begin, &end);
  if (end == begin || *end != '\0') {
    throw IoError("malformed numeric token '" + token + "'");
  }
  return v;
}

namespace {

// FNV-1a over the raw bytes of a double matrix, used as a cheap load-time
// integrity check for regenerated feature draws.
std::uint64_t matrix_checksum(const Eigen::MatrixXd& m) {
  std::uint64_t h = 1469598103934665603ULL;
  const auto mix = [&](const double* data, std::size_t count) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(data);
    for (std::size_t b = 0; b < count * sizeof(double); ++b) {
      h ^= bytes[b];
      h *= 1099511628211ULL;
    }
  };
  if (m.size() > 0) mix(m.data(), static_cast<std::size_t>(m.size()));
  return h;
}

std::string next_line(std::istream& is, const char* what) {
  std::string line;
  if (!std::getline(is, line)) {
    throw IoError(std::string("truncated record: expected ") + what);
  }
  return line;
}

// Reads "key value..." and checks the key.
std::istringstream keyed_line(std::istream& is, const std::string& key) {
  std::istringstream ls(next_line(is, key.c_str()));
  std::string got;
  ls >> got;
  if (got != key) {
    throw IoError("expected key '" + key + "', found '" + got + "'");
  }
  return ls;
}

double keyed_double(std::istream& is, const std::string& key) {
  auto ls = keyed_line(is, key);
  std::string tok;
  if (!(ls >> tok)) throw IoError("missing value for key '" + key + "'");
  return parse_hex_double(tok);
}

void write_vector(std::ostream& os, const std::string& key,
                  const Eigen::VectorXd& v) {
  os << key << " " << v.size();
  for (Eigen::Index i = 0; i < v.size(); ++i) os << " " << format_hex_double(v(i));
  os << "\n";
}

Eigen::VectorXd read_vector(std::istream& is, const std::string& key) {
  auto ls = keyed_line(is, key);
  Eigen::Index size = 0;
  if (!(ls >> size) || size < 0) throw IoError("bad vector size for '" + key + "'");
  Eigen::VectorXd v(size);
  std::string tok;
  for (Eigen::Index i = 0; i < size; ++i) {
    if (!(ls >> tok)) throw IoError("truncated vector '" + key + "'");
    v(i) = parse_hex_double(tok);
  }
  return v;
}

}  // namespace

void save_feature_map(std::ostream& os, const FeatureMap& map) {
  os << "feature-map v1\n";
  os << "kind " << to_string(map.spec.kind) << "\n";
  os << "input_dim " << map.spec.input_dim << "\n";
  os << "num_features " << map.spec.num_features << "\n";
  os << "bandwidth " << format_hex_double(map.spec.bandwidth) << "\n";
  os << "scaling " << to_string(map.spec.scaling) << "\n";
  os << "seed " << map.spec.seed << "\n";
  os << "checksum " << matrix_checksum(map.directions) << "\n";
  os << "standardizer " << (map.standardizer.identity() ? 0 : 1) << "\n";
  if (!map.standardizer.identity()) {
    write_vector(os, "shift", map.standardizer.shift);
    write_vector(os, "scale", map.standardizer.scale);
  }
  os << "end-feature-map\n";
}

FeatureMap load_feature_map(std::istream& is) {
  if (next_line(is, "feature-map header") != "feature-map v1") {
    throw IoError("not a feature-map record (bad header)");
  }
  FeatureMapSpec spec;
  {
    auto ls = keyed_line(is, "kind");
    std::string kind;
    ls >> kind;
    spec.kind = feature_kind_from_string(kind);
  }
  {
    auto ls = keyed_line(is, "input_dim");
    ls >> spec.input_dim;
  }
  {
    auto ls = keyed_line(is, "num_features");
    ls >> spec.num_features;
  }
  spec.bandwidth = keyed_double(is, "bandwidth");
  {
    auto ls = keyed_line(is, "scaling");
    std::string scaling;
    ls >> scaling;
    spec.scaling = feature_scaling_from_string(scaling);
  }
  {
    auto ls = keyed_line(is, "seed");
    ls >> spec.seed;
  }
  std::uint64_t checksum = 0;
  {
    auto ls = keyed_line(is, "checksum");
    ls >> checksum;
  }
  spec.validate();
  FeatureMap map = build_feature_map(spec);
  if (matrix_checksum(map.directions) != checksum) {
    throw IoError("feature-map checksum mismatch: the stored draws cannot be "
                  "reproduced (incompatible generator?)");
  }
  int has_standardizer = 0;
  {
    auto ls = keyed_line(is, "standardizer");
    ls >> has_standardizer;
  }
  if (has_standardizer) {
    map.standardizer.shift = read_vector(is, "shift");
    map.standardizer.scale = read_vector(is, "scale");
    if (map.standardizer.shift.size() != spec.input_dim ||
        map.standardizer.scale.size() != spec.input_dim) {
      throw IoError("standardizer dimension mismatch with input_dim");
    }
  }
  if (next_line(is, "end-feature-map") != "end-feature-map") {
    throw IoError("feature-map record missing terminator");
  }
  return map;
}

void save_detector(std::ostream& os, const DetectorRecord& record) {
  os << "rht-detector v1\n";
  os << "config_hash " << record.config_hash << "\n";
  os << "method " << record.method << "\n";
  os << "s " << format_hex_double(record.s) << "\n";
  os << "gap " << format_hex_double(record.gap) << "\n";
  os << "partial " << (record.partial ? 1 : 0) << "\n";
  os << "m " << record.m << "\n";
  os << "seed " << record.seed << "\n";
  for (int k = 1; k <= 2; ++k) {
    os << "ball " << k << " " << format_hex_double(record.balls[k - 1].epsilon)
       << " " << format_hex_double(record.balls[k - 1].rho_bar) << " "
       << record.balls[k - 1].dim << "\n";
  }
  os << "lambda " << format_hex_double(record.lambda[0]) << " "
     << format_hex_double(record.lambda[1]) << "\n";
  os << "beta " << format_hex_double(record.beta[0]) << " "
     << format_hex_double(record.beta[1]) << "\n";
  save_feature_map(os, *record.detector.map);
  write_vector(os, "theta", record.detector.theta);
  os << "end\n";
}

DetectorRecord load_detector(std::istream& is) {
  if (next_line(is, "detector header") != "rht-detector v1") {
    throw IoError("not a detector record (bad header)");
  }
  DetectorRecord record;
  {
    auto ls = keyed_line(is, "config_hash");
    ls >> record.config_hash;
  }
  {
    auto ls = keyed_line(is, "method");
    ls >> record.method;
  }
  record.s = keyed_double(is, "s");
  record.gap = keyed_double(is, "gap");
  {
    auto ls = keyed_line(is, "partial");
    int p = 0;
    ls >> p;
    record.partial = p != 0;
  }
  {
    auto ls = keyed_line(is, "m");
    ls >> record.m;
  }
  {
    auto ls = keyed_line(is, "seed");
    ls >> record.seed;
  }
  for (int k = 1; k <= 2; ++k) {
    auto ls = keyed_line(is, "ball");
    int got_k = 0;
    std::string eps, rho;
    ls >> got_k >> eps >> rho >> record.balls[k - 1].dim;
    if (got_k != k) throw IoError("detector record: balls out of order");
    record.balls[k - 1].epsilon = parse_hex_double(eps);
    record.balls[k - 1].rho_bar = parse_hex_double(rho);
  }
  {
    auto ls = keyed_line(is, "lambda");
    std::string a, b;
    ls >> a >> b;
    record.lambda = {parse_hex_double(a), parse_hex_double(b)};
  }
  {
    auto ls = keyed_line(is, "beta");
    std::string a, b;
    ls >> a >> b;
    record.beta = {parse_hex_double(a), parse_hex_double(b)};
  }
  auto map = std::make_shared<FeatureMap>(load_feature_map(is));
  record.detector.map = map;
  record.detector.theta = read_vector(is, "theta");
  if (record.detector.theta.size() != map->output_dim()) {
    throw IoError("detector theta dimension mismatch with feature map");
  }
  if (next_line(is, "end") != "end") {
    throw IoError("detector record missing terminator");
  }
  return record;
}

void save_detector_file(const std::string& path, const DetectorRecord& record) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  save_detector(os, record);
  if (!os.flush()) throw IoError("write failure on '" + path + "'");
}

DetectorRecord load_detector_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open '" + path + "' for reading");
  return load_detector(is);
}

void save_cloud_csv(std::ostream& os, const WorstCaseCloud& cloud,
                    const std::string& config_hash) {
  os << "# worst-case cloud, config_hash=" << config_hash
     << ", lambda=" << format_hex_double(cloud.lambda)
     << ", centers=" << cloud.num_centers
     << ", samples_per_center=" << cloud.samples_per_center << "\n";
  os << "center_index";
  const int dim = cloud.points.empty() ? 0 : static_cast<int>(cloud.points[0].z.size());
  for (int c = 0; c < dim; ++c) os << ",z" << c;
  os << ",weight\n";
  std::ostringstream num;
  num.precision(17);
  for (const WorstCasePoint& p : cloud.points) {
    os << p.center_index;
    for (Eigen::Index c = 0; c < p.z.size(); ++c) {
      num.str("");
      num << p.z(c);
      os << "," << num.str();
    }
    num.str("");
    num << p.weight;
    os << "," << num.str() << "\n";
  }
}

}  // namespace rht
