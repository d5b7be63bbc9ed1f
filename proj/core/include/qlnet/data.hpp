#pragma once

#include "qlnet/common.hpp"
#include "qlnet/model.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace qlnet {

/// Provenance of a dataset: which generator produced it and from which seed.
struct DatasetMeta {
  std::string generator = "custom";
  std::uint64_t seed = 0;
  /// Planted symmetric coefficient matrix (single-output planted generators).
  std::optional<Matrix> planted_A;
};

/// N samples of d-dimensional inputs with M-dimensional targets.
///
/// Samples are normally vectors x_n whose quadratic lift X_n = x_n x_n^T is
/// implicit. A dataset may instead carry explicit symmetric d x d matrices
/// X_n ("pre-lifted"); single-layer objectives and the quadratic oracle
/// accept both forms.
class Dataset {
 public:
  Dataset() = default;
  Dataset(Matrix inputs, Matrix targets, DatasetMeta meta = {});
  /// Pre-lifted dataset; `inputs` is left empty.
  static Dataset lifted(std::vector<Matrix> X, Matrix targets, DatasetMeta meta = {});

  Eigen::Index size() const { return targets_.rows(); }
  Eigen::Index input_dim() const;
  Eigen::Index output_dim() const { return targets_.cols(); }
  bool is_lifted() const { return !lifted_.empty(); }

  /// N x d; empty for pre-lifted datasets.
  const Matrix& inputs() const { return inputs_; }
  const Matrix& targets() const { return targets_; }
  /// Targets of output channel m.
  Vector y(Eigen::Index m = 0) const { return targets_.col(m); }
  const std::vector<Matrix>& lifted_samples() const { return lifted_; }
  /// X_n (materialized for vector samples).
  Matrix sample_matrix(Eigen::Index n) const;
  const DatasetMeta& meta() const { return meta_; }
  DatasetMeta& meta() { return meta_; }

  /// Sum of squared targets over all channels.
  double target_energy() const { return targets_.squaredNorm(); }
  /// (1 / (M N)) sum y^2: the loss of the all-zero predictor.
  double zero_model_loss() const { return targets_.squaredNorm() / static_cast<double>(targets_.size()); }

  /// Rows `idx` of this dataset, in the given order.
  Dataset subset(const std::vector<Eigen::Index>& idx) const;

  void validate() const;

 private:
  Matrix inputs_;
  Matrix targets_;
  std::vector<Matrix> lifted_;
  DatasetMeta meta_;
};

// --- synthetic generators ----------------------------------------------------
// Inputs are i.i.d. standard gaussian except coordinate 0, which is fixed to 1.

Matrix gaussian_inputs_with_bias(Eigen::Index d, Eigen::Index N, Rng& rng);

/// y_n = sum_i s_i x_ni^2 with s uniform in {-1, +1}.
Dataset gen_planted_diagonal(Eigen::Index d, Eigen::Index N, std::uint64_t seed);
/// Same inputs as gen_planted_diagonal(d, N, seed) but with the given signs.
Dataset gen_planted_diagonal(const Vector& signs, Eigen::Index N, std::uint64_t seed);

/// y_n = A . X_n with A = (G + G^T)/2, G i.i.d. standard gaussian.
Dataset gen_planted_dense(Eigen::Index d, Eigen::Index N, std::uint64_t seed);
/// y_n = A . X_n for a given symmetric A.
Dataset gen_planted(const Matrix& A, Eigen::Index N, std::uint64_t seed);
/// M-output planted data, one independent dense A_m per output.
Dataset gen_planted_dense_multi(Eigen::Index d, Eigen::Index M, Eigen::Index N, std::uint64_t seed);

/// Targets i.i.d. standard gaussian, independent of the inputs.
Dataset gen_independent(Eigen::Index d, Eigen::Index N, std::uint64_t seed);

/// y_n = sum over multisets c_t prod x_{n i_j} (random degree-p form with
/// gaussian coefficients) plus gaussian noise of std `noise`.
Dataset gen_planted_poly(Eigen::Index d, int p, Eigen::Index N, std::uint64_t seed, double noise = 0.0);

/// Random two-layer teacher network with schedule (d, h1, 1).
DeepQLNet make_teacher(Eigen::Index d, Eigen::Index h1, std::uint64_t seed);

/// Seed of the teacher used by gen_deep_planted(.., seed).
std::uint64_t deep_teacher_seed(std::uint64_t data_seed);

/// Targets from a random depth-2 teacher (realizable by the student family).
/// With `raw_tensor` set, targets instead come from a random symmetric
/// degree-4 form over the inputs (realizable only for large enough h1).
Dataset gen_deep_planted(Eigen::Index d, Eigen::Index h1, Eigen::Index N, std::uint64_t seed,
                         bool raw_tensor = false);

// --- classification ------------------------------------------------------------

/// Fraction of samples whose prediction sign matches the label sign; sign(0) = +1.
double sign_accuracy(const Eigen::Ref<const Vector>& predictions, const Eigen::Ref<const Vector>& labels);
double classify_sign(const AnyModel& model, const Dataset& data);

// --- MNIST -------------------------------------------------------------------------

struct IdxImages {
  std::uint32_t rows = 0;
  std::uint32_t cols = 0;
  /// count x (rows*cols), pixels scaled to [0, 1].
  Matrix pixels;
};

/// Parses an IDX3 image file (magic 0x00000803, big-endian header).
IdxImages read_idx_images(const std::filesystem::path& path);
/// Parses an IDX1 label file (magic 0x00000801).
std::vector<std::uint8_t> read_idx_labels(const std::filesystem::path& path);

struct MnistTask {
  Dataset train;
  Dataset test;
  /// 10 x 784 principal directions, fit on the training rows only.
  Matrix pca_components;
  Vector pca_mean;
  std::pair<int, int> digits{3, 8};
  std::uint64_t split_seed = 0;
};

/// Principal components of the rows of `X` (mean-centered covariance).
/// Returns (components as rows, mean).
std::pair<Matrix, Vector> fit_pca(const Matrix& X, Eigen::Index components);

/// Builds a binary task from raw image/label pools: per class, floor(count/7)
/// examples go to training (seeded shuffle), the rest to test. Rows are
/// projected on 10 training principal components, normalized to unit norm
/// and prefixed with a constant 1. Labels are +1 for the first digit.
MnistTask make_mnist_task(const Matrix& pixels, const std::vector<std::uint8_t>& labels,
                          std::pair<int, int> digit_pair, std::uint64_t seed);

/// Reads the four standard IDX files from `dir` (train/t10k images/labels),
/// pools them and calls make_mnist_task.
MnistTask load_mnist_task(const std::filesystem::path& dir, std::pair<int, int> digit_pair,
                          std::uint64_t seed);

/// True if the four standard IDX files are present under `dir`.
bool mnist_files_present(const std::filesystem::path& dir);

}  // namespace qlnet
