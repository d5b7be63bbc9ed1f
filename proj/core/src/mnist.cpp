#include "qlnet/data.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <array>
#include <fstream>
#include <numeric>
#include <string>

namespace qlnet {

namespace {

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;

constexpr std::array<const char*, 4> kMnistFiles = {
    "train-images-idx3-ubyte", "train-labels-idx1-ubyte", "t10k-images-idx3-ubyte",
    "t10k-labels-idx1-ubyte"};

std::uint32_t read_be32(std::istream& in, const std::filesystem::path& path) {
  std::array<unsigned char, 4> b{};
  if (!in.read(reinterpret_cast<char*>(b.data()), 4))
    throw FormatError("IDX: truncated header in " + path.string());
  return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) | (std::uint32_t{b[2]} << 8) |
         std::uint32_t{b[3]};
}

std::ifstream open_binary(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("IDX: cannot open " + path.string());
  return in;
}

std::string hex(std::uint32_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s = "0x";
  for (int shift = 28; shift >= 0; shift -= 4) s += digits[(v >> shift) & 0xf];
  return s;
}

}  // namespace

IdxImages read_idx_images(const std::filesystem::path& path) {
  auto in = open_binary(path);
  const auto magic = read_be32(in, path);
  if (magic != kImageMagic)
    throw FormatError("IDX: " + path.string() + " has magic " + hex(magic) + ", expected " + hex(kImageMagic));
  const auto count = read_be32(in, path);
  IdxImages img;
  img.rows = read_be32(in, path);
  img.cols = read_be32(in, path);
  const std::size_t stride = std::size_t{img.rows} * img.cols;
  std::vector<unsigned char> buf(stride * count);
  if (!in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size())))
    throw FormatError("IDX: " + path.string() + " is truncated (expected " + std::to_string(count) +
                      " images)");
  img.pixels.resize(count, static_cast<Eigen::Index>(stride));
  for (std::size_t n = 0; n < count; ++n)
    for (std::size_t p = 0; p < stride; ++p)
      img.pixels(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p)) = buf[n * stride + p] / 255.0;
  return img;
}

std::vector<std::uint8_t> read_idx_labels(const std::filesystem::path& path) {
  auto in = open_binary(path);
  const auto magic = read_be32(in, path);
  if (magic != kLabelMagic)
    throw FormatError("IDX: " + path.string() + " has magic " + hex(magic) + ", expected " + hex(kLabelMagic));
  const auto count = read_be32(in, path);
  std::vector<std::uint8_t> labels(count);
  if (!in.read(reinterpret_cast<char*>(labels.data()), static_cast<std::streamsize>(count)))
    throw FormatError("IDX: " + path.string() + " is truncated (expected " + std::to_string(count) +
                      " labels)");
  return labels;
}

std::pair<Matrix, Vector> fit_pca(const Matrix& X, Eigen::Index components) {
  if (X.rows() < 2) throw ConfigError("fit_pca: need at least two rows");
  if (components < 1 || components > X.cols()) throw ConfigError("fit_pca: invalid component count");
  const Vector mean = X.colwise().mean().transpose();
  const Matrix centered = X.rowwise() - mean.transpose();
  const Matrix cov = centered.transpose() * centered / static_cast<double>(X.rows() - 1);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(cov);
  if (eig.info() != Eigen::Success) throw NumericalError("fit_pca: covariance eigensolver failed");
  // Eigenvalues ascend; take the trailing columns in descending order.
  Matrix comps(components, X.cols());
  for (Eigen::Index c = 0; c < components; ++c)
    comps.row(c) = eig.eigenvectors().col(X.cols() - 1 - c).transpose();
  return {comps, mean};
}

MnistTask make_mnist_task(const Matrix& pixels, const std::vector<std::uint8_t>& labels,
                          std::pair<int, int> digit_pair, std::uint64_t seed) {
  if (static_cast<std::size_t>(pixels.rows()) != labels.size())
    throw ShapeError("make_mnist_task: image and label counts differ");
  Rng rng(seed);
  std::vector<Eigen::Index> train_idx, test_idx;
  for (int digit : {digit_pair.first, digit_pair.second}) {
    std::vector<Eigen::Index> cls;
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] == digit) cls.push_back(static_cast<Eigen::Index>(i));
    if (cls.empty()) throw FormatError("make_mnist_task: no examples of digit " + std::to_string(digit));
    std::shuffle(cls.begin(), cls.end(), rng);
    const std::size_t n_train = cls.size() / 7;
    train_idx.insert(train_idx.end(), cls.begin(), cls.begin() + static_cast<std::ptrdiff_t>(n_train));
    test_idx.insert(test_idx.end(), cls.begin() + static_cast<std::ptrdiff_t>(n_train), cls.end());
  }

  auto gather = [&](const std::vector<Eigen::Index>& idx) {
    Matrix X(static_cast<Eigen::Index>(idx.size()), pixels.cols());
    Vector y(static_cast<Eigen::Index>(idx.size()));
    for (std::size_t i = 0; i < idx.size(); ++i) {
      X.row(static_cast<Eigen::Index>(i)) = pixels.row(idx[i]);
      y(static_cast<Eigen::Index>(i)) = labels[static_cast<std::size_t>(idx[i])] == digit_pair.first ? 1.0 : -1.0;
    }
    return std::pair{X, y};
  };
  auto [Xtr, ytr] = gather(train_idx);
  auto [Xte, yte] = gather(test_idx);

  MnistTask task;
  task.digits = digit_pair;
  task.split_seed = seed;
  std::tie(task.pca_components, task.pca_mean) = fit_pca(Xtr, 10);

  auto project = [&](const Matrix& X) {
    Matrix proj = (X.rowwise() - task.pca_mean.transpose()) * task.pca_components.transpose();
    Matrix out(X.rows(), proj.cols() + 1);
    out.col(0).setOnes();
    for (Eigen::Index n = 0; n < X.rows(); ++n) {
      const double norm = proj.row(n).norm();
      out.row(n).tail(proj.cols()) = norm > 0.0 ? (proj.row(n) / norm).eval() : proj.row(n);
    }
    return out;
  };
  const std::string tag = "mnist-" + std::to_string(digit_pair.first) + "v" + std::to_string(digit_pair.second);
  task.train = Dataset(project(Xtr), ytr, DatasetMeta{tag + "-train", seed, std::nullopt});
  task.test = Dataset(project(Xte), yte, DatasetMeta{tag + "-test", seed, std::nullopt});
  return task;
}

bool mnist_files_present(const std::filesystem::path& dir) {
  return std::all_of(kMnistFiles.begin(), kMnistFiles.end(),
                     [&](const char* f) { return std::filesystem::exists(dir / f); });
}

MnistTask load_mnist_task(const std::filesystem::path& dir, std::pair<int, int> digit_pair,
                          std::uint64_t seed) {
  for (const char* f : kMnistFiles)
    if (!std::filesystem::exists(dir / f))
      throw FormatError("MNIST: missing " + (dir / f).string());
  const IdxImages train = read_idx_images(dir / kMnistFiles[0]);
  const auto train_labels = read_idx_labels(dir / kMnistFiles[1]);
  const IdxImages test = read_idx_images(dir / kMnistFiles[2]);
  const auto test_labels = read_idx_labels(dir / kMnistFiles[3]);
  if (train.pixels.cols() != test.pixels.cols()) throw FormatError("MNIST: train/test image sizes differ");

  Matrix pool(train.pixels.rows() + test.pixels.rows(), train.pixels.cols());
  pool << train.pixels, test.pixels;
  std::vector<std::uint8_t> labels = train_labels;
  labels.insert(labels.end(), test_labels.begin(), test_labels.end());
  return make_mnist_task(pool, labels, digit_pair, seed);
}

}  // namespace qlnet
