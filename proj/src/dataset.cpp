#include "mcdrop/dataset.hpp"

#include "mcdrop/random.hpp"
#include "mcdrop/text.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <tuple>

namespace mcdrop {
namespace {

std::vector<std::string> numbered_names(std::string_view prefix, Index n) {
  std::vector<std::string> names;
  for (Index i = 0; i < n; ++i) names.push_back(std::string(prefix) + std::to_string(i));
  return names;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    fields.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return fields;
}

std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DatasetError(path.string() + ": cannot open");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(const std::vector<unsigned char>& b, std::size_t offset) {
  return (std::uint32_t{b[offset]} << 24) | (std::uint32_t{b[offset + 1]} << 16) | (std::uint32_t{b[offset + 2]} << 8) |
         std::uint32_t{b[offset + 3]};
}

void write_be32(std::ostream& out, std::uint32_t v) {
  const std::array<char, 4> b{static_cast<char>(v >> 24), static_cast<char>(v >> 16), static_cast<char>(v >> 8),
                              static_cast<char>(v)};
  out.write(b.data(), 4);
}

struct IdxFile {
  unsigned char type = 0;
  std::vector<Index> dims;
  std::size_t payload = 0;  // byte offset of first element
};

IdxFile parse_idx_header(const std::vector<unsigned char>& bytes, const std::string& what) {
  if (bytes.size() < 4) throw DatasetError(what + ": offset 0: file too short for an IDX header");
  if (bytes[0] != 0 || bytes[1] != 0) throw DatasetError(what + ": offset 0: bad IDX magic (expected two zero bytes)");
  IdxFile f;
  f.type = bytes[2];
  if (f.type != 0x08 && f.type != 0x0E) {
    std::ostringstream hex;
    hex << std::hex << int{f.type};
    throw DatasetError(what + ": offset 2: unsupported IDX element type 0x" + hex.str());
  }
  const std::size_t ndim = bytes[3];
  if (ndim == 0) throw DatasetError(what + ": offset 3: IDX rank must be positive");
  if (bytes.size() < 4 + 4 * ndim) throw DatasetError(what + ": offset 4: truncated dimension table");
  for (std::size_t i = 0; i < ndim; ++i) f.dims.push_back(static_cast<Index>(read_be32(bytes, 4 + 4 * i)));
  f.payload = 4 + 4 * ndim;
  const std::size_t width = f.type == 0x08 ? 1 : 8;
  const auto expected = static_cast<std::size_t>(element_count(f.dims)) * width;
  if (bytes.size() - f.payload < expected) {
    throw DatasetError(what + ": offset " + std::to_string(bytes.size()) + ": payload truncated, expected " +
                       std::to_string(expected) + " bytes after offset " + std::to_string(f.payload));
  }
  return f;
}

}  // namespace

std::string_view to_string(Provenance p) {
  switch (p) {
    case Provenance::synthetic_blobs: return "synthetic-blobs";
    case Provenance::synthetic_textures: return "synthetic-textures";
    case Provenance::csv: return "csv";
    case Provenance::idx: return "idx";
  }
  return "?";
}

Shape Dataset::example_shape() const {
  if (inputs.rank() == 0) return {};
  return Shape(inputs.shape().begin() + 1, inputs.shape().end());
}

std::vector<Index> Dataset::class_counts() const {
  std::vector<Index> counts(static_cast<std::size_t>(classes()), 0);
  for (int l : labels) ++counts[static_cast<std::size_t>(l)];
  return counts;
}

Dataset Dataset::subset(std::span<const Index> rows) const {
  const Index width = size() == 0 ? 0 : inputs.size() / size();
  Shape shape = inputs.shape();
  shape[0] = static_cast<Index>(rows.size());
  Dataset out{.inputs = Tensor(shape), .class_names = class_names, .provenance = provenance};
  out.labels.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const Index r = rows[i];
    if (r < 0 || r >= size()) throw std::out_of_range("subset row " + std::to_string(r) + " out of range");
    out.inputs.data().segment(static_cast<Index>(i) * width, width) = inputs.data().segment(r * width, width);
    out.labels.push_back(labels[static_cast<std::size_t>(r)]);
  }
  return out;
}

void Dataset::validate() const {
  if (size() < 1) throw DatasetError("dataset is empty");
  if (inputs.rank() < 2 || inputs.dim(0) != size()) throw DatasetError("inputs shape " + to_string(inputs.shape()) +
                                                                       " does not match " + std::to_string(size()) + " labels");
  if (classes() < 1) throw DatasetError("dataset has no classes");
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= classes()) {
      throw DatasetError("label " + std::to_string(labels[i]) + " of row " + std::to_string(i) + " outside [0, " +
                         std::to_string(classes()) + ")");
    }
  }
  if (!inputs.all_finite()) throw DatasetError("inputs contain non-finite values");
}

Dataset synth_blobs(Index n, Index classes, double overlap, Index dim, std::uint64_t seed) {
  if (classes < 2) throw std::invalid_argument("synth_blobs: need at least 2 classes");
  if (n < classes) throw std::invalid_argument("synth_blobs: n must be at least the class count");
  if (dim < 2) throw std::invalid_argument("synth_blobs: dim must be at least 2");
  if (!(overlap >= 0.0 && overlap <= 1.0)) throw std::invalid_argument("synth_blobs: overlap must lie in [0, 1]");

  const double radius = 4.0 * (1.0 - overlap);
  Dataset ds{.inputs = Tensor({n, dim}), .class_names = numbered_names("blob", classes),
             .provenance = Provenance::synthetic_blobs};
  ds.labels.resize(static_cast<std::size_t>(n));
  Rng rng(seed, hash_name("synth_blobs"));
  auto x = ds.inputs.matrix();
  for (Index i = 0; i < n; ++i) {
    const auto label = static_cast<int>(i % classes);
    ds.labels[static_cast<std::size_t>(i)] = label;
    const double angle = 2.0 * std::numbers::pi * label / static_cast<double>(classes);
    for (Index d = 0; d < dim; ++d) x(i, d) = rng.normal();
    x(i, 0) += radius * std::cos(angle);
    x(i, 1) += radius * std::sin(angle);
  }
  return ds;
}

Dataset synth_textures(Index n, double noise, std::uint64_t seed, Index size) {
  if (size < 8) throw std::invalid_argument("synth_textures: image size must be at least 8");
  if (n < 4) throw std::invalid_argument("synth_textures: n must be at least 4");
  if (!(noise >= 0.0) || !std::isfinite(noise)) throw std::invalid_argument("synth_textures: noise must be nonnegative");

  constexpr Index period = 2;
  const double center = (static_cast<double>(size) - 1.0) / 2.0;
  const double spread = static_cast<double>(size) / 4.0;
  auto pattern = [&](int label, Index r, Index c) -> double {
    switch (label) {
      case 0: return static_cast<double>((r / period) % 2);
      case 1: return static_cast<double>((c / period) % 2);
      case 2: {
        const double d2 = (r - center) * (r - center) + (c - center) * (c - center);
        return std::exp(-d2 / (2.0 * spread * spread));
      }
      default: return static_cast<double>((r / period + c / period) % 2);
    }
  };

  Dataset ds{.inputs = Tensor({n, 1, size, size}),
             .class_names = {"horizontal-stripes", "vertical-stripes", "radial-blob", "checkerboard"},
             .provenance = Provenance::synthetic_textures};
  ds.labels.resize(static_cast<std::size_t>(n));
  Rng rng(seed, hash_name("synth_textures"));
  for (Index i = 0; i < n; ++i) {
    const auto label = static_cast<int>(i % 4);
    ds.labels[static_cast<std::size_t>(i)] = label;
    const double contrast = 0.75 + 0.5 * rng.uniform();
    double* img = ds.inputs.data().data() + i * size * size;
    for (Index r = 0; r < size; ++r) {
      for (Index c = 0; c < size; ++c) {
        const double eps = noise > 0.0 ? noise * rng.normal() : 0.0;
        img[r * size + c] = contrast * pattern(label, r, c) + eps;
      }
    }
  }
  return ds;
}

Dataset load_csv(const std::filesystem::path& path, std::string_view label_column, std::optional<Index> classes) {
  std::ifstream in(path);
  if (!in) throw DatasetError(path.string() + ": cannot open");
  const std::string where = path.string() + ": line ";

  std::string line;
  if (!std::getline(in, line) || trim(line).empty()) throw DatasetError(path.string() + ": no records");
  const auto header = split_fields(line);
  std::size_t label_index = header.size();
  for (std::size_t i = 0; i < header.size(); ++i) {
    const auto name = trim(header[i]);
    if (name.empty()) throw DatasetError(where + "1: malformed header, column " + std::to_string(i + 1) + " is unnamed");
    if (name == label_column) {
      if (label_index != header.size()) throw DatasetError(where + "1: malformed header, duplicate label column");
      label_index = i;
    }
  }
  if (label_index == header.size()) {
    throw DatasetError(where + "1: malformed header, no column named '" + std::string(label_column) + "'");
  }
  const std::size_t dim = header.size() - 1;
  if (dim == 0) throw DatasetError(where + "1: malformed header, no feature columns");

  std::vector<double> values;
  std::vector<int> labels;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_fields(line);
    if (fields.size() != header.size()) {
      throw DatasetError(where + std::to_string(line_no) + ": ragged row, expected " + std::to_string(header.size()) +
                         " fields, got " + std::to_string(fields.size()));
    }
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (i == label_index) {
        int label = 0;
        if (!parse_number(fields[i], label) || label < 0) {
          throw DatasetError(where + std::to_string(line_no) + ": label '" + std::string(trim(fields[i])) +
                             "' is not a nonnegative integer");
        }
        if (classes && label >= *classes) {
          throw DatasetError(where + std::to_string(line_no) + ": label " + std::to_string(label) + " out of range [0, " +
                             std::to_string(*classes) + ")");
        }
        labels.push_back(label);
      } else {
        double v = 0.0;
        if (!parse_number(fields[i], v) || !std::isfinite(v)) {
          throw DatasetError(where + std::to_string(line_no) + ": field " + std::to_string(i + 1) + " ('" +
                             std::string(trim(fields[i])) + "') is not a finite number");
        }
        values.push_back(v);
      }
    }
  }
  if (labels.empty()) throw DatasetError(path.string() + ": no records");

  const Index n = static_cast<Index>(labels.size());
  const Index c = classes.value_or(*std::max_element(labels.begin(), labels.end()) + 1);
  Dataset ds{.inputs = Tensor({n, static_cast<Index>(dim)}, Eigen::Map<Eigen::VectorXd>(values.data(), n * static_cast<Index>(dim))),
             .labels = std::move(labels),
             .class_names = numbered_names("class", c),
             .provenance = Provenance::csv};
  ds.validate();
  return ds;
}

void save_csv(const Dataset& ds, const std::filesystem::path& path) {
  ds.validate();
  std::ofstream out(path);
  if (!out) throw DatasetError(path.string() + ": cannot open for writing");
  const Index n = ds.size();
  const Index dim = ds.inputs.size() / n;
  for (Index d = 0; d < dim; ++d) out << 'x' << d << ',';
  out << "label\n";
  const auto x = ds.inputs.matrix();
  for (Index i = 0; i < n; ++i) {
    for (Index d = 0; d < dim; ++d) out << format_double(x(i, d)) << ',';
    out << ds.labels[static_cast<std::size_t>(i)] << '\n';
  }
  if (!out) throw DatasetError(path.string() + ": write failed");
}

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels, std::optional<Index> classes) {
  const auto image_bytes = read_file(images);
  const auto label_bytes = read_file(labels);
  const IdxFile img = parse_idx_header(image_bytes, images.string());
  const IdxFile lab = parse_idx_header(label_bytes, labels.string());
  if (lab.type != 0x08 || lab.dims.size() != 1) throw DatasetError(labels.string() + ": offset 2: labels must be a rank-1 ubyte IDX file");
  if (img.dims.size() < 2 || img.dims.size() > 4) throw DatasetError(images.string() + ": offset 3: image rank must be 2, 3 or 4");
  const Index n = img.dims[0];
  if (n != lab.dims[0]) {
    throw DatasetError(labels.string() + ": offset 4: " + std::to_string(lab.dims[0]) + " labels for " + std::to_string(n) +
                       " images");
  }
  if (n == 0) throw DatasetError(images.string() + ": no records");

  Shape shape = img.dims;
  if (shape.size() == 3) shape = {n, 1, shape[1], shape[2]};
  Tensor x(shape);
  for (Index i = 0; i < x.size(); ++i) {
    if (img.type == 0x08) {
      x[i] = image_bytes[img.payload + static_cast<std::size_t>(i)] / 255.0;
    } else {
      std::uint64_t bits = 0;
      for (int k = 0; k < 8; ++k) bits = (bits << 8) | image_bytes[img.payload + static_cast<std::size_t>(i) * 8 + k];
      x[i] = std::bit_cast<double>(bits);
    }
  }
  std::vector<int> ys(static_cast<std::size_t>(n));
  int max_label = 0;
  for (Index i = 0; i < n; ++i) {
    const int y = label_bytes[lab.payload + static_cast<std::size_t>(i)];
    if (classes && y >= *classes) {
      throw DatasetError(labels.string() + ": offset " + std::to_string(lab.payload + static_cast<std::size_t>(i)) +
                         ": label " + std::to_string(y) + " out of range [0, " + std::to_string(*classes) + ")");
    }
    ys[static_cast<std::size_t>(i)] = y;
    max_label = std::max(max_label, y);
  }
  Dataset ds{.inputs = std::move(x), .labels = std::move(ys), .class_names = numbered_names("class", classes.value_or(max_label + 1)),
             .provenance = Provenance::idx};
  ds.validate();
  return ds;
}

void save_idx(const Dataset& ds, const std::filesystem::path& images, const std::filesystem::path& labels) {
  ds.validate();
  Shape dims = ds.inputs.shape();
  if (dims.size() == 4 && dims[1] == 1) dims = {dims[0], dims[2], dims[3]};
  if (dims.size() > 255) throw DatasetError("IDX rank too large");
  {
    std::ofstream out(images, std::ios::binary);
    if (!out) throw DatasetError(images.string() + ": cannot open for writing");
    const std::array<char, 4> magic{0, 0, 0x0E, static_cast<char>(dims.size())};
    out.write(magic.data(), 4);
    for (Index d : dims) write_be32(out, static_cast<std::uint32_t>(d));
    for (Index i = 0; i < ds.inputs.size(); ++i) {
      const auto bits = std::bit_cast<std::uint64_t>(ds.inputs[i]);
      std::array<char, 8> b{};
      for (int k = 0; k < 8; ++k) b[static_cast<std::size_t>(k)] = static_cast<char>(bits >> (56 - 8 * k));
      out.write(b.data(), 8);
    }
    if (!out) throw DatasetError(images.string() + ": write failed");
  }
  std::ofstream out(labels, std::ios::binary);
  if (!out) throw DatasetError(labels.string() + ": cannot open for writing");
  const std::array<char, 4> magic{0, 0, 0x08, 1};
  out.write(magic.data(), 4);
  write_be32(out, static_cast<std::uint32_t>(ds.size()));
  for (int y : ds.labels) {
    if (y > 255) throw DatasetError("IDX labels must fit in one byte");
    out.put(static_cast<char>(y));
  }
  if (!out) throw DatasetError(labels.string() + ": write failed");
}

Splits split(const Dataset& ds, const SplitSpec& spec) {
  const std::array<double, 3> fractions{spec.train, spec.val, spec.test};
  for (double f : fractions) {
    if (!(f >= 0.0 && f <= 1.0)) throw std::invalid_argument("split fractions must lie in [0, 1]");
  }
  if (std::abs(spec.train + spec.val + spec.test - 1.0) > 1e-9) throw std::invalid_argument("split fractions must sum to 1");

  const Index n = ds.size();
  const auto n_test = static_cast<Index>(std::llround(spec.test * static_cast<double>(n)));
  const auto n_val = static_cast<Index>(std::llround(spec.val * static_cast<double>(n)));
  const Index n_train = n - n_val - n_test;
  if (n_train <= 0) throw std::invalid_argument("split would leave the train split empty");
  if (n_val <= 0) throw std::invalid_argument("split would leave the validation split empty");
  if (n_test <= 0) throw std::invalid_argument("split would leave the test split empty");

  std::vector<std::vector<Index>> by_class(static_cast<std::size_t>(ds.classes()));
  for (Index i = 0; i < n; ++i) by_class[static_cast<std::size_t>(ds.labels[static_cast<std::size_t>(i)])].push_back(i);

  std::vector<std::tuple<double, int, Index>> order;
  order.reserve(static_cast<std::size_t>(n));
  Rng rng(spec.seed, hash_name("split"));
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    auto& members = by_class[c];
    rng.shuffle(std::span(members));
    const auto count = static_cast<double>(members.size());
    for (std::size_t r = 0; r < members.size(); ++r) {
      order.emplace_back((static_cast<double>(r) + 0.5) / count, static_cast<int>(c), members[r]);
    }
  }
  std::sort(order.begin(), order.end());

  Splits s;
  for (Index i = 0; i < n; ++i) {
    const Index row = std::get<2>(order[static_cast<std::size_t>(i)]);
    (i < n_train ? s.train_rows : i < n_train + n_val ? s.val_rows : s.test_rows).push_back(row);
  }
  s.train = ds.subset(s.train_rows);
  s.val = ds.subset(s.val_rows);
  s.test = ds.subset(s.test_rows);
  return s;
}

}  // namespace mcdrop
