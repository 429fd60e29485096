#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "vatlab/numerics.hpp"

namespace vatlab {

enum class Split : std::uint8_t { labeled, unlabeled, validation, test };
inline constexpr int kNoLabel = -1;

/// Inputs with per-row labels (kNoLabel when absent) and split tags.
struct Dataset {
  Tensor inputs;
  std::vector<int> labels;
  std::vector<Split> splits;

  std::size_t size() const { return inputs.rows(); }
  std::size_t input_dim() const { return inputs.cols(); }
  std::vector<std::size_t> indices(Split s) const;
  /// Rows in the given order; labels and tags follow.
  Dataset subset(std::span<const std::size_t> rows) const;
  Dataset subset(Split s) const { return subset(indices(s)); }
  Tensor gather_inputs(std::span<const std::size_t> rows) const;
  std::vector<int> gather_labels(std::span<const std::size_t> rows) const;
  /// Largest label + 1.
  std::size_t num_classes() const;
  /// Labeled, validation and test rows must carry labels; shapes must agree.
  void validate() const;
};

/// Rows of `a` followed by rows of `b`.
Dataset concat(const Dataset& a, const Dataset& b);

/// Labeled 2-D points before embedding.
struct PointSet {
  Tensor points;  // N x 2
  std::vector<int> labels;
};

enum class SyntheticTask { moons, circles };
std::string task_name(SyntheticTask t);
SyntheticTask parse_task(const std::string& name);

/// Class 0 on {(cos t, sin t)}, class 1 on {(1 − cos t, 0.5 − sin t)}, t ~ U[0, π].
PointSet gen_moons(Rng& rng, std::size_t n_per_class);
/// Class 0 on the circle of radius 1, class 1 on radius 0.5, uniform angle.
PointSet gen_circles(Rng& rng, std::size_t n_per_class);
PointSet gen_synthetic(SyntheticTask task, Rng& rng, std::size_t n_per_class);

/// Affine isometry ℝ² → ℝ^D: x = pᵀ·matrix + offset, matrix rows orthonormal.
struct EmbeddingMap {
  Tensor matrix;  // 2 x D
  Tensor offset;  // D

  /// Throws ConfigError unless the rows are orthonormal within 1e-10.
  void validate() const;
};

/// Gram–Schmidt on a Gaussian 2×dim draw; zero offset.
EmbeddingMap make_embedding(Rng& rng, std::size_t dim = 100);
Tensor embed_100d(const Tensor& points, const EmbeddingMap& map);
/// Inverse on the embedded plane: (x − offset)·matrixᵀ.
Tensor project_to_plane(const Tensor& x, const EmbeddingMap& map);

struct SyntheticSizes {
  std::size_t train_per_class = 8;
  std::size_t validation_per_class = 500;
  std::size_t test_per_class = 500;
  std::size_t unlabeled_per_class = 0;
  std::size_t dim = 100;
};

/// One repetition's data: fresh points and a fresh embedding, all derived from `seed`.
struct SyntheticExperiment {
  SyntheticTask task = SyntheticTask::moons;
  EmbeddingMap map;
  PointSet train_points;
  Dataset train;       // labeled rows, then unlabeled rows if requested
  Dataset validation;  // tagged validation
  Dataset test;        // tagged test
};

SyntheticExperiment make_synthetic_experiment(SyntheticTask task, std::uint64_t seed,
                                              const SyntheticSizes& sizes = {});

/// Reads an IDX image file (magic 0x00000803) and label file (0x00000801),
/// optionally gzip-compressed. Pixels are scaled by 1/255. Rows are tagged test
/// if `tag_as_test`, labeled otherwise.
Dataset load_mnist_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                       bool tag_as_test = false);

/// Same parser over in-memory bytes.
Dataset parse_mnist_idx(std::string_view image_bytes, std::string_view label_bytes,
                        bool tag_as_test = false);

struct MnistData {
  Dataset train;
  Dataset test;
};

/// The four standard MNIST files from `dir`, plain or .gz, with either the
/// "-idx3-ubyte" or ".idx3-ubyte" spelling. Throws DataError when one is missing.
MnistData load_mnist_dir(const std::filesystem::path& dir);

/// Random validation rows, a class-stratified labeled draw from the rest, and
/// everything else unlabeled (labels stripped). Test-tagged rows are kept as they are.
Dataset make_semisup_split(const Dataset& data, std::size_t n_labeled, std::size_t n_validation,
                           Rng& rng);

/// CSV with header x0,...,x{D-1},label; unlabeled rows carry -1.
std::string dataset_to_csv(const Dataset& d);
void write_dataset_csv(const std::filesystem::path& path, const Dataset& d);
Dataset read_dataset_csv(const std::filesystem::path& path, Split tag = Split::labeled);

}  // namespace vatlab
