#include "rht/datagen.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "rht/errors.hpp"
#include "rht/rng.hpp"

namespace rht {

std::string to_string(DatasetKind kind) {
  switch (kind) {
    case DatasetKind::kHdgm: return "hdgm";
    case DatasetKind::kTwoMoons: return "two-moons";
    case DatasetKind::kCsv: return "csv";
  }
  throw std::logic_error("unknown dataset kind");
}

DatasetKind dataset_kind_from_string(const std::string& s) {
  if (s == "hdgm") return DatasetKind::kHdgm;
  if (s == "two-moons") return DatasetKind::kTwoMoons;
  if (s == "csv") return DatasetKind::kCsv;
  throw ConfigError("unknown dataset kind '" + s + "' (expected hdgm, two-moons or csv)");
}

void DatasetSpec::validate() const {
  if (n_train < 1 || n_test < 1) throw ConfigError("dataset: n_train and n_test must be >= 1");
  if (noise < 0.0) throw ConfigError("dataset: noise must be nonnegative");
  if (kind == DatasetKind::kHdgm) {
    if (dim < 1) throw ConfigError("dataset: dim must be >= 1");
    if (!(cov_scale > 0.0)) throw ConfigError("dataset: covariance scale must be positive");
    if (!weights.empty()) {
      double tot = 0.0;
      for (double w : weights) {
        if (w < 0.0) throw ConfigError("dataset: mixture weights must be nonnegative");
        tot += w;
      }
      if (std::abs(tot - 1.0) > 1e-9) throw ConfigError("dataset: mixture weights must sum to 1");
      if (!means.empty() && means.size() != weights.size()) {
        throw ConfigError("dataset: means list and weights must have equal length");
      }
    }
    for (const auto& mu : means) {
      if (static_cast<int>(mu.size()) != dim) {
        throw ConfigError("dataset: each mean must have length dim");
      }
    }
  }
  if (kind == DatasetKind::kCsv && (path1.empty() || path2.empty())) {
    throw ConfigError("dataset: csv kind requires path1 and path2");
  }
}

namespace {

Eigen::MatrixXd draw_mixture(const std::vector<Eigen::VectorXd>& means,
                             const std::vector<double>& weights, double sigma,
                             int count, Rng& rng) {
  const int d = static_cast<int>(means.front().size());
  Eigen::MatrixXd out(count, d);
  for (int i = 0; i < count; ++i) {
    const double u = rng.uniform01();
    double acc = 0.0;
    std::size_t comp = means.size() - 1;
    for (std::size_t c = 0; c < weights.size(); ++c) {
      acc += weights[c];
      if (u < acc) {
        comp = c;
        break;
      }
    }
    for (int j = 0; j < d; ++j) out(i, j) = means[comp](j) + sigma * rng.normal();
  }
  return out;
}

Eigen::MatrixXd draw_moon(int count, int hypothesis, double noise, Rng& rng) {
  Eigen::MatrixXd out(count, 2);
  for (int i = 0; i < count; ++i) {
    const double t = rng.uniform(0.0, M_PI);
    double x, y;
    if (hypothesis == 1) {
      x = std::cos(t);
      y = std::sin(t);
    } else {
      x = 1.0 - std::cos(t);
      y = 0.5 - std::sin(t);
    }
    out(i, 0) = x + noise * rng.normal();
    out(i, 1) = y + noise * rng.normal();
  }
  return out;
}

}  // namespace

TwoSampleSplit gen_hdgm(const DatasetSpec& spec) {
  spec.validate();
  std::vector<Eigen::VectorXd> means1;
  if (spec.means.empty()) {
    Eigen::VectorXd mu = Eigen::VectorXd::Zero(spec.dim);
    mu(0) = spec.mean_scale;
    means1.push_back(mu);
    means1.push_back(-mu);
  } else {
    for (const auto& row : spec.means) {
      means1.push_back(Eigen::Map<const Eigen::VectorXd>(row.data(), row.size()));
    }
  }
  std::vector<double> weights = spec.weights;
  if (weights.empty()) {
    weights.assign(means1.size(), 1.0 / static_cast<double>(means1.size()));
  }
  std::vector<Eigen::VectorXd> means2;
  for (const auto& mu : means1) {
    means2.push_back(mu + Eigen::VectorXd::Constant(spec.dim, spec.mean_shift));
  }

  TwoSampleSplit out;
  Rng r1(derive_seed(spec.seed, 1));
  Rng r2(derive_seed(spec.seed, 2));
  Rng r3(derive_seed(spec.seed, 3));
  Rng r4(derive_seed(spec.seed, 4));
  out.train1 = draw_mixture(means1, weights, spec.cov_scale, spec.n_train, r1);
  out.train2 = draw_mixture(means2, weights, spec.cov_scale, spec.n_train, r2);
  out.test1 = draw_mixture(means1, weights, spec.cov_scale, spec.n_test, r3);
  out.test2 = draw_mixture(means2, weights, spec.cov_scale, spec.n_test, r4);
  return out;
}

TwoSampleSplit gen_two_moons(const DatasetSpec& spec) {
  spec.validate();
  TwoSampleSplit out;
  Rng r1(derive_seed(spec.seed, 1));
  Rng r2(derive_seed(spec.seed, 2));
  Rng r3(derive_seed(spec.seed, 3));
  Rng r4(derive_seed(spec.seed, 4));
  out.train1 = draw_moon(spec.n_train, 1, spec.noise, r1);
  out.train2 = draw_moon(spec.n_train, 2, spec.noise, r2);
  out.test1 = draw_moon(spec.n_test, 1, spec.noise, r3);
  out.test2 = draw_moon(spec.n_test, 2, spec.noise, r4);
  return out;
}

TwoSampleSplit generate_dataset(const DatasetSpec& spec) {
  spec.validate();
  switch (spec.kind) {
    case DatasetKind::kHdgm: return gen_hdgm(spec);
    case DatasetKind::kTwoMoons: return gen_two_moons(spec);
    case DatasetKind::kCsv: break;
  }
  const Eigen::MatrixXd all1 = load_csv(spec.path1);
  const Eigen::MatrixXd all2 = load_csv(spec.path2);
  const auto split = [&](const Eigen::MatrixXd& rows, const std::string& path) {
    if (rows.rows() <= spec.n_train) {
      throw IoError(path + ": needs more than n_train=" + std::to_string(spec.n_train) +
                    " rows to leave a test remainder, has " + std::to_string(rows.rows()));
    }
    return std::make_pair(Eigen::MatrixXd(rows.topRows(spec.n_train)),
                          Eigen::MatrixXd(rows.bottomRows(rows.rows() - spec.n_train)));
  };
  TwoSampleSplit out;
  std::tie(out.train1, out.test1) = split(all1, spec.path1);
  std::tie(out.train2, out.test2) = split(all2, spec.path2);
  return out;
}

Eigen::MatrixXd load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path + ": cannot open for reading");
  std::vector<std::vector<double>> rows;
  std::string line;
  int line_no = 0;
  std::size_t width = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::vector<double> row;
    std::size_t start = 0;
    int col = 0;
    while (start <= line.size()) {
      std::size_t end = line.find(',', start);
      if (end == std::string::npos) end = line.size();
      ++col;
      const char* first = line.data() + start;
      const char* last = line.data() + end;
      while (first < last && (*first == ' ' || *first == '\t')) ++first;
      while (last > first && (last[-1] == ' ' || last[-1] == '\t' || last[-1] == '\r')) --last;
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(first, last, v);
      if (ec != std::errc() || ptr != last || first == last) {
        throw IoError(path + ":" + std::to_string(line_no) + ": column " +
                      std::to_string(col) + " is not numeric: '" +
                      std::string(first, last) + "'");
      }
      row.push_back(v);
      if (end == line.size()) break;
      start = end + 1;
    }
    if (width == 0) width = row.size();
    if (row.size() != width) {
      throw IoError(path + ":" + std::to_string(line_no) + ": ragged row, expected " +
                    std::to_string(width) + " columns, found " + std::to_string(row.size()));
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw IoError(path + ": no data rows");
  Eigen::MatrixXd out(rows.size(), width);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < width; ++j) out(i, j) = rows[i][j];
  }
  return out;
}

void save_csv(const std::string& path, const Eigen::MatrixXd& rows,
              const std::vector<std::string>& comments) {
  std::ofstream out(path);
  if (!out) throw IoError(path + ": cannot open for writing");
  out.precision(17);
  for (const std::string& c : comments) out << "# " << c << "\n";
  for (int i = 0; i < rows.rows(); ++i) {
    for (int j = 0; j < rows.cols(); ++j) {
      if (j) out << ",";
      out << rows(i, j);
    }
    out << "\n";
  }
  if (!out) throw IoError(path + ": write failed");
}

std::pair<Eigen::MatrixXd, Eigen::MatrixXd> split_by_label(
    const Eigen::MatrixXd& rows, int label_col) {
  if (label_col < 0 || label_col >= rows.cols()) {
    throw std::invalid_argument("split_by_label: label column out of range");
  }
  std::vector<int> idx1, idx2;
  for (int i = 0; i < rows.rows(); ++i) {
    const double l = rows(i, label_col);
    if (l == 1.0) {
      idx1.push_back(i);
    } else if (l == 2.0) {
      idx2.push_back(i);
    } else {
      throw IoError("split_by_label: row " + std::to_string(i + 1) +
                    " has label " + std::to_string(l) + ", expected 1 or 2");
    }
  }
  const auto take = [&](const std::vector<int>& idx) {
    Eigen::MatrixXd m(idx.size(), rows.cols() - 1);
    for (std::size_t r = 0; r < idx.size(); ++r) {
      int c = 0;
      for (int j = 0; j < rows.cols(); ++j) {
        if (j == label_col) continue;
        m(r, c++) = rows(idx[r], j);
      }
    }
    return m;
  };
  return {take(idx1), take(idx2)};
}

}  // namespace rht
