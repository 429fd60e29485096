#include "vatlab/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numbers>
#include <sstream>

#include "vatlab/io_util.hpp"

namespace vatlab {
namespace {

std::uint32_t read_be32(std::string_view bytes, std::size_t offset, const char* what) {
  if (bytes.size() < offset + 4) {
    throw FormatError(std::string(what) + ": truncated header at byte " + std::to_string(offset));
  }
  std::uint32_t v = 0;
  for (std::size_t i = 0; i < 4; ++i) v = (v << 8) | static_cast<unsigned char>(bytes[offset + i]);
  return v;
}

Dataset from_points(const PointSet& ps, const EmbeddingMap& map, Split tag) {
  Dataset d;
  d.inputs = embed_100d(ps.points, map);
  d.labels = ps.labels;
  d.splits.assign(ps.labels.size(), tag);
  return d;
}

}  // namespace

Dataset concat(const Dataset& a, const Dataset& b) {
  if (a.size() == 0) return b;
  if (b.size() == 0) return a;
  if (a.input_dim() != b.input_dim()) throw DimensionError("concat: input dimensions differ");
  std::vector<double> values(a.inputs.data());
  values.insert(values.end(), b.inputs.data().begin(), b.inputs.data().end());
  Dataset d;
  d.inputs = Tensor({a.size() + b.size(), a.input_dim()}, std::move(values));
  d.labels = a.labels;
  d.labels.insert(d.labels.end(), b.labels.begin(), b.labels.end());
  d.splits = a.splits;
  d.splits.insert(d.splits.end(), b.splits.begin(), b.splits.end());
  return d;
}

std::vector<std::size_t> Dataset::indices(Split s) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < splits.size(); ++i)
    if (splits[i] == s) out.push_back(i);
  return out;
}

Tensor Dataset::gather_inputs(std::span<const std::size_t> rows) const {
  Tensor out({rows.size(), input_dim()});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= size()) throw DimensionError("dataset: row index out of range");
    auto src = inputs.row(rows[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

std::vector<int> Dataset::gather_labels(std::span<const std::size_t> rows) const {
  std::vector<int> out(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) out[i] = labels.at(rows[i]);
  return out;
}

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
  Dataset d;
  d.inputs = gather_inputs(rows);
  d.labels = gather_labels(rows);
  d.splits.resize(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) d.splits[i] = splits.at(rows[i]);
  return d;
}

std::size_t Dataset::num_classes() const {
  int m = -1;
  for (int y : labels) m = std::max(m, y);
  return static_cast<std::size_t>(m + 1);
}

void Dataset::validate() const {
  if (labels.size() != size() || splits.size() != size()) {
    throw DataError("dataset: labels/splits do not match the number of rows");
  }
  for (std::size_t i = 0; i < size(); ++i) {
    if (splits[i] != Split::unlabeled && labels[i] < 0) {
      throw DataError("dataset: row " + std::to_string(i) + " needs a label for its split");
    }
  }
}

std::string task_name(SyntheticTask t) { return t == SyntheticTask::moons ? "moons" : "circles"; }

SyntheticTask parse_task(const std::string& name) {
  if (name == "moons") return SyntheticTask::moons;
  if (name == "circles") return SyntheticTask::circles;
  throw ConfigError("unknown synthetic task '" + name + "'");
}

PointSet gen_moons(Rng& rng, std::size_t n_per_class) {
  PointSet ps{Tensor({2 * n_per_class, 2}), std::vector<int>(2 * n_per_class)};
  for (std::size_t i = 0; i < n_per_class; ++i) {
    const double t = rng.uniform(0.0, std::numbers::pi);
    ps.points(i, 0) = std::cos(t);
    ps.points(i, 1) = std::sin(t);
    ps.labels[i] = 0;
  }
  for (std::size_t i = n_per_class; i < 2 * n_per_class; ++i) {
    const double t = rng.uniform(0.0, std::numbers::pi);
    ps.points(i, 0) = 1.0 - std::cos(t);
    ps.points(i, 1) = 0.5 - std::sin(t);
    ps.labels[i] = 1;
  }
  return ps;
}

PointSet gen_circles(Rng& rng, std::size_t n_per_class) {
  PointSet ps{Tensor({2 * n_per_class, 2}), std::vector<int>(2 * n_per_class)};
  for (std::size_t i = 0; i < 2 * n_per_class; ++i) {
    const int label = i < n_per_class ? 0 : 1;
    const double radius = label == 0 ? 1.0 : 0.5;
    const double t = rng.uniform(0.0, 2.0 * std::numbers::pi);
    ps.points(i, 0) = radius * std::cos(t);
    ps.points(i, 1) = radius * std::sin(t);
    ps.labels[i] = label;
  }
  return ps;
}

PointSet gen_synthetic(SyntheticTask task, Rng& rng, std::size_t n_per_class) {
  return task == SyntheticTask::moons ? gen_moons(rng, n_per_class)
                                      : gen_circles(rng, n_per_class);
}

void EmbeddingMap::validate() const {
  if (matrix.rank() != 2 || matrix.rows() != 2 || offset.size() != matrix.cols()) {
    throw ConfigError("embedding: expected a 2 x D matrix and a D offset");
  }
  const double n0 = dot(matrix.row(0), matrix.row(0));
  const double n1 = dot(matrix.row(1), matrix.row(1));
  const double c = dot(matrix.row(0), matrix.row(1));
  if (std::abs(n0 - 1.0) > 1e-10 || std::abs(n1 - 1.0) > 1e-10 || std::abs(c) > 1e-10) {
    throw ConfigError("embedding: matrix rows are not orthonormal");
  }
}

EmbeddingMap make_embedding(Rng& rng, std::size_t dim) {
  if (dim < 2) throw ConfigError("embedding: dimension must be at least 2");
  EmbeddingMap map{Tensor({2, dim}), Tensor({dim})};
  for (double& v : map.matrix.values()) v = rng.normal();
  auto r0 = map.matrix.row(0);
  auto r1 = map.matrix.row(1);
  const double n0 = l2_norm(r0);
  for (double& v : r0) v /= n0;
  const double proj = dot(r0, r1);
  for (std::size_t i = 0; i < dim; ++i) r1[i] -= proj * r0[i];
  // A second pass tightens orthogonality to rounding level.
  const double proj2 = dot(r0, r1);
  for (std::size_t i = 0; i < dim; ++i) r1[i] -= proj2 * r0[i];
  const double n1 = l2_norm(r1);
  for (double& v : r1) v /= n1;
  return map;
}

Tensor embed_100d(const Tensor& points, const EmbeddingMap& map) {
  map.validate();
  if (points.rank() != 2 || points.cols() != 2) {
    throw DimensionError("embed: expected N x 2 points, got " + shape_string(points.shape()));
  }
  Tensor out = matmul(points, map.matrix);
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] += map.offset[c];
  }
  return out;
}

Tensor project_to_plane(const Tensor& x, const EmbeddingMap& map) {
  map.validate();
  if (x.cols() != map.matrix.cols()) throw DimensionError("project: dimension mismatch");
  Tensor out({x.rows(), 2});
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto row = x.row(r);
    for (std::size_t k = 0; k < 2; ++k) {
      double s = 0.0;
      for (std::size_t c = 0; c < row.size(); ++c) s += (row[c] - map.offset[c]) * map.matrix(k, c);
      out(r, k) = s;
    }
  }
  return out;
}

SyntheticExperiment make_synthetic_experiment(SyntheticTask task, std::uint64_t seed,
                                              const SyntheticSizes& sizes) {
  const Rng root(seed);
  Rng map_rng = root.fork(1);
  Rng train_rng = root.fork(2);
  Rng val_rng = root.fork(3);
  Rng test_rng = root.fork(4);
  Rng unlabeled_rng = root.fork(5);
  SyntheticExperiment ex;
  ex.task = task;
  ex.map = make_embedding(map_rng, sizes.dim);
  ex.train_points = gen_synthetic(task, train_rng, sizes.train_per_class);
  ex.train = from_points(ex.train_points, ex.map, Split::labeled);
  ex.validation = from_points(gen_synthetic(task, val_rng, sizes.validation_per_class), ex.map,
                              Split::validation);
  ex.test = from_points(gen_synthetic(task, test_rng, sizes.test_per_class), ex.map, Split::test);
  if (sizes.unlabeled_per_class > 0) {
    Dataset extra = from_points(gen_synthetic(task, unlabeled_rng, sizes.unlabeled_per_class), ex.map,
                                Split::unlabeled);
    std::fill(extra.labels.begin(), extra.labels.end(), kNoLabel);
    ex.train = concat(ex.train, extra);
  }
  return ex;
}

Dataset parse_mnist_idx(std::string_view img, std::string_view lab, bool tag_as_test) {
  if (read_be32(img, 0, "idx images") != 0x00000803) {
    throw FormatError("idx images: bad magic at byte 0 (expected 0x00000803)");
  }
  if (read_be32(lab, 0, "idx labels") != 0x00000801) {
    throw FormatError("idx labels: bad magic at byte 0 (expected 0x00000801)");
  }
  const std::size_t n = read_be32(img, 4, "idx images");
  const std::size_t rows = read_be32(img, 8, "idx images");
  const std::size_t cols = read_be32(img, 12, "idx images");
  const std::size_t n_labels = read_be32(lab, 4, "idx labels");
  if (rows == 0 || cols == 0) throw FormatError("idx images: zero image dimension at byte 8");
  if (n != n_labels) {
    throw FormatError("idx: image count " + std::to_string(n) + " (byte 4) differs from label count " +
                      std::to_string(n_labels));
  }
  const std::size_t dim = rows * cols;
  if (img.size() < 16 + n * dim) {
    throw FormatError("idx images: truncated at byte " + std::to_string(img.size()) + ", expected " +
                      std::to_string(16 + n * dim));
  }
  if (lab.size() < 8 + n) {
    throw FormatError("idx labels: truncated at byte " + std::to_string(lab.size()) + ", expected " +
                      std::to_string(8 + n));
  }
  Dataset d;
  d.inputs = Tensor({n, dim});
  d.labels.resize(n);
  d.splits.assign(n, tag_as_test ? Split::test : Split::labeled);
  auto out = d.inputs.values();
  for (std::size_t i = 0; i < n * dim; ++i) {
    out[i] = static_cast<double>(static_cast<unsigned char>(img[16 + i])) / 255.0;
  }
  for (std::size_t i = 0; i < n; ++i) {
    const int y = static_cast<unsigned char>(lab[8 + i]);
    if (y > 9) {
      throw FormatError("idx labels: label " + std::to_string(y) + " at byte " +
                        std::to_string(8 + i) + " outside 0..9");
    }
    d.labels[i] = y;
  }
  return d;
}

Dataset load_mnist_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                       bool tag_as_test) {
  const std::string img = read_file_maybe_gzip(images);
  const std::string lab = read_file_maybe_gzip(labels);
  try {
    return parse_mnist_idx(img, lab, tag_as_test);
  } catch (const FormatError& e) {
    throw FormatError(images.filename().string() + "/" + labels.filename().string() + ": " +
                      e.what());
  }
}

namespace {

std::filesystem::path find_idx(const std::filesystem::path& dir, const std::string& stem) {
  std::string dotted = stem;
  if (const auto pos = dotted.find("-idx"); pos != std::string::npos) dotted[pos] = '.';
  for (const std::string& name : {stem, stem + ".gz", dotted, dotted + ".gz"}) {
    if (std::filesystem::exists(dir / name)) return dir / name;
  }
  throw DataError("no " + stem + "[.gz] in " + dir.string());
}

}  // namespace

MnistData load_mnist_dir(const std::filesystem::path& dir) {
  MnistData d;
  d.train = load_mnist_idx(find_idx(dir, "train-images-idx3-ubyte"), find_idx(dir, "train-labels-idx1-ubyte"));
  d.test = load_mnist_idx(find_idx(dir, "t10k-images-idx3-ubyte"), find_idx(dir, "t10k-labels-idx1-ubyte"), true);
  return d;
}

Dataset make_semisup_split(const Dataset& data, std::size_t n_labeled, std::size_t n_validation,
                           Rng& rng) {
  data.validate();
  std::vector<std::size_t> pool;
  for (std::size_t i = 0; i < data.size(); ++i)
    if (data.splits[i] != Split::test) pool.push_back(i);
  if (n_labeled + n_validation > pool.size()) {
    throw DataError("split: " + std::to_string(n_labeled) + " labeled + " +
                    std::to_string(n_validation) + " validation exceed " +
                    std::to_string(pool.size()) + " rows");
  }
  for (std::size_t i : pool)
    if (data.labels[i] < 0) throw DataError("split: source rows must all be labeled");

  Dataset out = data;
  rng.shuffle(pool.begin(), pool.end());
  for (std::size_t k = 0; k < n_validation; ++k) out.splits[pool[k]] = Split::validation;
  std::vector<std::size_t> rest(pool.begin() + static_cast<std::ptrdiff_t>(n_validation), pool.end());

  const std::size_t classes = data.num_classes();
  std::vector<std::vector<std::size_t>> by_class(classes);
  for (std::size_t i : rest) by_class[static_cast<std::size_t>(data.labels[i])].push_back(i);
  // Equal share per class; the remainder goes to a random subset of classes.
  std::vector<std::size_t> quota(classes, classes ? n_labeled / classes : 0);
  std::vector<std::size_t> class_order(classes);
  for (std::size_t c = 0; c < classes; ++c) class_order[c] = c;
  rng.shuffle(class_order.begin(), class_order.end());
  for (std::size_t k = 0; k < (classes ? n_labeled % classes : 0); ++k) ++quota[class_order[k]];

  std::vector<bool> chosen(data.size(), false);
  for (std::size_t c = 0; c < classes; ++c) {
    if (by_class[c].size() < quota[c]) {
      throw DataError("split: class " + std::to_string(c) + " has " +
                      std::to_string(by_class[c].size()) + " rows, needs " +
                      std::to_string(quota[c]));
    }
    for (std::size_t k = 0; k < quota[c]; ++k) chosen[by_class[c][k]] = true;
  }
  for (std::size_t i : rest) {
    if (chosen[i]) {
      out.splits[i] = Split::labeled;
    } else {
      out.splits[i] = Split::unlabeled;
      out.labels[i] = kNoLabel;
    }
  }
  return out;
}

std::string dataset_to_csv(const Dataset& d) {
  std::ostringstream os;
  os.precision(17);
  for (std::size_t c = 0; c < d.input_dim(); ++c) os << 'x' << c << ',';
  os << "label\n";
  for (std::size_t r = 0; r < d.size(); ++r) {
    for (double v : d.inputs.row(r)) os << v << ',';
    os << (r < d.labels.size() ? d.labels[r] : kNoLabel) << '\n';
  }
  return os.str();
}

void write_dataset_csv(const std::filesystem::path& path, const Dataset& d) {
  atomic_write_file(path, dataset_to_csv(d));
}

Dataset read_dataset_csv(const std::filesystem::path& path, Split tag) {
  std::istringstream in(read_file(path));
  std::string line;
  if (!std::getline(in, line)) throw FormatError(path.string() + ": empty csv");
  const std::size_t fields = static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) + 1;
  if (fields < 2 || line.rfind("label") != line.size() - 5) {
    throw FormatError(path.string() + ": header must be x0,...,label");
  }
  const std::size_t dim = fields - 1;
  std::vector<double> values;
  Dataset d;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::size_t pos = 0;
    for (std::size_t f = 0; f < fields; ++f) {
      const std::size_t end = f + 1 == fields ? line.size() : line.find(',', pos);
      if (end == std::string::npos) {
        throw FormatError(path.string() + ": line " + std::to_string(line_no) + " has too few fields");
      }
      const std::string tok = line.substr(pos, end - pos);
      try {
        if (f + 1 == fields) {
          d.labels.push_back(std::stoi(tok));
        } else {
          values.push_back(std::stod(tok));
        }
      } catch (const std::exception&) {
        throw FormatError(path.string() + ": line " + std::to_string(line_no) + " field " +
                          std::to_string(f) + " is not a number");
      }
      pos = end + 1;
    }
  }
  const std::size_t n = d.labels.size();
  d.inputs = Tensor({n, dim}, std::move(values));
  d.splits.resize(n);
  for (std::size_t i = 0; i < n; ++i) d.splits[i] = d.labels[i] < 0 ? Split::unlabeled : tag;
  return d;
}

}  // namespace vatlab
