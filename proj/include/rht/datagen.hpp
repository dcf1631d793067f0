#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

namespace rht {

enum class DatasetKind { kHdgm, kTwoMoons, kCsv };

std::string to_string(DatasetKind kind);
DatasetKind dataset_kind_from_string(const std::string& s);

/// Synthetic two-hypothesis data source.  Sizes are per hypothesis.
///
/// hdgm: hypothesis 1 is an equal-weight (or `weights`) Gaussian mixture
/// with means ±mean_scale*e_1 (or the explicit `means` rows) and covariance
/// cov_scale^2 I; hypothesis 2 shifts every mean by mean_shift in each
/// coordinate.  Defaults (mean_scale 1, cov_scale 1, dim 10, shift 0.5)
/// give moderate overlap.
///
/// two-moons: interleaving unit half-circles, upper moon (cos t, sin t) for
/// hypothesis 1 and lower moon (1 - cos t, 0.5 - sin t) for hypothesis 2,
/// t ~ U[0, pi], plus isotropic N(0, noise^2 I_2).
struct DatasetSpec {
  DatasetKind kind = DatasetKind::kTwoMoons;
  int n_train = 20;
  int n_test = 1000;
  int dim = 2;
  double noise = 0.1;
  double mean_scale = 1.0;
  double cov_scale = 1.0;
  double mean_shift = 0.5;
  std::vector<std::vector<double>> means;  // optional explicit hdgm means
  std::vector<double> weights;             // optional hdgm mixture weights
  std::uint64_t seed = 0;
  std::string path1;  // csv: hypothesis-1 samples
  std::string path2;  // csv: hypothesis-2 samples

  void validate() const;
};

struct TwoSampleSplit {
  Eigen::MatrixXd train1;
  Eigen::MatrixXd train2;
  Eigen::MatrixXd test1;
  Eigen::MatrixXd test2;
};

TwoSampleSplit gen_hdgm(const DatasetSpec& spec);
TwoSampleSplit gen_two_moons(const DatasetSpec& spec);

/// Dispatch on spec.kind; kCsv loads path1/path2 and uses the first n_train
/// rows of each file for training and the remainder for testing.
TwoSampleSplit generate_dataset(const DatasetSpec& spec);

/// Strictly numeric CSV: comma-separated doubles, one sample per row.
/// Lines starting with '#' are comments and skipped; there is no header
/// row.  Ragged rows and non-numeric cells are rejected with line/column
/// context.
Eigen::MatrixXd load_csv(const std::string& path);

/// Writes rows in the load_csv layout; `comment` lines (if any) are
/// prefixed with '#' at the top of the file.
void save_csv(const std::string& path, const Eigen::MatrixXd& rows,
              const std::vector<std::string>& comments = {});

/// Splits a matrix whose `label_col` column holds labels 1 or 2 into the
/// per-hypothesis feature matrices (label column removed, order preserved).
std::pair<Eigen::MatrixXd, Eigen::MatrixXd> split_by_label(
    const Eigen::MatrixXd& rows, int label_col);

}  // namespace rht
