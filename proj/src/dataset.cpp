#include <mixnet/io.hpp>

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace mixnet {

// ---- normalization -------------------------------------------------------

Matrix Normalization::normalize(const Matrix& raw) const {
  if (raw.cols() != feature_min.size()) throw std::invalid_argument("normalize: dimension mismatch");
  Matrix out = raw.rowwise() - feature_min.transpose();
  for (Index j = 0; j < out.cols(); ++j) {
    const double range = feature_max(j) - feature_min(j);
    if (range > 0)
      out.col(j) /= range;
    else
      out.col(j).setZero();
  }
  return out;
}

Matrix Normalization::denormalize(const Matrix& unit) const {
  if (unit.cols() != feature_min.size()) throw std::invalid_argument("denormalize: dimension mismatch");
  Matrix out(unit.rows(), unit.cols());
  for (Index j = 0; j < unit.cols(); ++j)
    out.col(j) = (unit.col(j).array() * (feature_max(j) - feature_min(j)) + feature_min(j)).matrix();
  return out;
}

Dataset Dataset::subset(const std::vector<Index>& rows) const {
  Dataset d;
  d.data = data(rows, Eigen::all);
  d.normalization = normalization;
  if (labels) {
    std::vector<int> l;
    l.reserve(rows.size());
    for (Index r : rows) l.push_back((*labels)[static_cast<std::size_t>(r)]);
    d.labels = std::move(l);
  }
  return d;
}

Dataset make_dataset(const Matrix& raw, std::optional<std::vector<int>> labels) {
  if (raw.rows() == 0 || raw.cols() == 0) throw FormatError("dataset is empty");
  if (!raw.allFinite()) throw FormatError("dataset contains non-finite values");
  if (labels && static_cast<Index>(labels->size()) != raw.rows())
    throw FormatError("label count does not match row count");
  Dataset d;
  d.normalization.feature_min = raw.colwise().minCoeff().transpose();
  d.normalization.feature_max = raw.colwise().maxCoeff().transpose();
  d.data = d.normalization.normalize(raw);
  d.labels = std::move(labels);
  return d;
}

// ---- toy data ------------------------------------------------------------

ToyKind parse_toy_kind(const std::string& name) {
  if (name == "two_moon") return ToyKind::TwoMoon;
  if (name == "moon_circle") return ToyKind::MoonCircle;
  if (name == "two_circle") return ToyKind::TwoCircle;
  throw std::invalid_argument("unknown toy dataset kind '" + name + "'");
}

std::string to_string(ToyKind kind) {
  switch (kind) {
    case ToyKind::TwoMoon: return "two_moon";
    case ToyKind::MoonCircle: return "moon_circle";
    case ToyKind::TwoCircle: return "two_circle";
  }
  return "?";
}

namespace {

// Evenly spaced parameter in [lo, hi] for i in [0, count).
double spaced(Index i, Index count, double lo, double hi) {
  if (count <= 1) return lo;
  return lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(count - 1);
}

// Evenly spaced angle on a full circle (no duplicate endpoint).
double around(Index i, Index count) {
  return 2.0 * M_PI * static_cast<double>(i) / static_cast<double>(count);
}

}  // namespace

ToyPoints toy_points(ToyKind kind, Index n, double noise, std::uint64_t seed) {
  if (n < 2) throw std::invalid_argument("toy data needs n >= 2");
  if (!(noise >= 0)) throw std::invalid_argument("toy noise must be >= 0");
  ToyPoints t;
  t.points.resize(n, 2);
  t.labels.resize(static_cast<std::size_t>(n));

  Index first = 0;
  switch (kind) {
    case ToyKind::TwoMoon: {
      // Interleaved half circles of radius 1.
      first = n - n / 2;
      const Index second = n - first;
      for (Index i = 0; i < first; ++i) {
        const double a = spaced(i, first, 0.0, M_PI);
        t.points.row(i) << std::cos(a), std::sin(a);
      }
      for (Index i = 0; i < second; ++i) {
        const double a = spaced(i, second, 0.0, M_PI);
        t.points.row(first + i) << 1.0 - std::cos(a), 0.5 - std::sin(a);
      }
      break;
    }
    case ToyKind::MoonCircle: {
      // A circle of radius 0.5 resting in a lower half circle of radius 1.
      first = n - n / 2;
      const Index second = n - first;
      for (Index i = 0; i < first; ++i) {
        const double a = around(i, first);
        t.points.row(i) << 0.5 * std::cos(a), 0.5 * std::sin(a);
      }
      for (Index i = 0; i < second; ++i) {
        const double a = spaced(i, second, M_PI, 2.0 * M_PI);
        t.points.row(first + i) << std::cos(a), -0.1 + std::sin(a);
      }
      break;
    }
    case ToyKind::TwoCircle: {
      // Concentric circles; point counts proportional to circumference.
      first = n / 3;
      const Index second = n - first;
      for (Index i = 0; i < first; ++i) {
        const double a = around(i, first);
        t.points.row(i) << kTwoCircleInner * std::cos(a), kTwoCircleInner * std::sin(a);
      }
      for (Index i = 0; i < second; ++i) {
        const double a = around(i, second);
        t.points.row(first + i) << kTwoCircleOuter * std::cos(a), kTwoCircleOuter * std::sin(a);
      }
      break;
    }
  }
  for (Index i = 0; i < n; ++i) t.labels[static_cast<std::size_t>(i)] = i < first ? 0 : 1;

  if (noise > 0) {
    Rng rng = make_rng(seed, 0x70);
    for (Index i = 0; i < n; ++i)
      for (Index c = 0; c < 2; ++c) t.points(i, c) += noise * standard_normal(rng);
  }
  return t;
}

Dataset gen_toy(ToyKind kind, Index n, double noise, std::uint64_t seed) {
  ToyPoints t = toy_points(kind, n, noise, seed);
  return make_dataset(t.points, std::move(t.labels));
}

// ---- CSV -----------------------------------------------------------------

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::string where(const std::filesystem::path& path, std::size_t line, std::size_t col) {
  return path.string() + " line " + std::to_string(line) + " column " + std::to_string(col);
}

}  // namespace

Matrix read_csv_matrix(const std::filesystem::path& path, std::vector<int>* labels) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open '" + path.string() + "'");
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0;
  std::size_t width = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    std::vector<double> row;
    std::string_view rest = line;
    std::size_t col = 0;
    while (true) {
      ++col;
      const auto comma = rest.find(',');
      const std::string_view cell = trim(rest.substr(0, comma));
      double v = 0;
      const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (cell.empty() || ec != std::errc() || ptr != cell.data() + cell.size() || !std::isfinite(v))
        throw FormatError("non-numeric CSV cell '" + std::string(cell) + "' at " + where(path, line_no, col));
      row.push_back(v);
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    if (width == 0) width = row.size();
    if (row.size() != width)
      throw FormatError("row with " + std::to_string(row.size()) + " columns, expected " +
                        std::to_string(width) + " at " + where(path, line_no, 1));
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw FormatError("'" + path.string() + "' contains no data rows");
  const std::size_t feat = labels ? width - 1 : width;
  if (feat == 0) throw FormatError("'" + path.string() + "' has no feature columns");

  Matrix m(static_cast<Index>(rows.size()), static_cast<Index>(feat));
  if (labels) labels->clear();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < feat; ++j) m(static_cast<Index>(i), static_cast<Index>(j)) = rows[i][j];
    if (labels) {
      const double l = rows[i][feat];
      if (l != std::floor(l) || std::abs(l) > 1e9)
        throw FormatError("label is not an integer at " + where(path, i + 1, feat + 1));
      labels->push_back(static_cast<int>(l));
    }
  }
  return m;
}

Dataset load_csv(const std::filesystem::path& path, bool has_labels) {
  std::vector<int> labels;
  Matrix raw = read_csv_matrix(path, has_labels ? &labels : nullptr);
  if (has_labels) return make_dataset(raw, std::move(labels));
  return make_dataset(raw);
}

void write_csv(std::ostream& out, const Matrix& rows, const std::vector<int>* labels) {
  for (Index i = 0; i < rows.rows(); ++i) {
    for (Index j = 0; j < rows.cols(); ++j) {
      if (j) out << ',';
      out << format_double(rows(i, j));
    }
    if (labels) out << ',' << (*labels)[static_cast<std::size_t>(i)];
    out << '\n';
  }
}

void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot write '" + path.string() + "'");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    out.flush();
    if (!out) {
      out.close();
      std::filesystem::remove(tmp);
      throw FormatError("failed writing '" + path.string() + "'");
    }
  }
  std::filesystem::rename(tmp, path);
}

// ---- IDX -----------------------------------------------------------------

namespace {

std::string read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::uint32_t be32(const std::string& b, std::size_t off, const std::filesystem::path& path) {
  if (off + 4 > b.size()) throw FormatError("truncated IDX header in '" + path.string() + "'");
  return (std::uint32_t(static_cast<unsigned char>(b[off])) << 24) |
         (std::uint32_t(static_cast<unsigned char>(b[off + 1])) << 16) |
         (std::uint32_t(static_cast<unsigned char>(b[off + 2])) << 8) |
         std::uint32_t(static_cast<unsigned char>(b[off + 3]));
}

}  // namespace

Dataset load_idx(const std::filesystem::path& images, const std::optional<std::filesystem::path>& labels) {
  const std::string ib = read_all(images);
  const std::uint32_t magic = be32(ib, 0, images);
  if (magic != 0x00000803u)
    throw FormatError("bad IDX image magic in '" + images.string() + "' (expected 0x00000803)");
  const std::uint32_t count = be32(ib, 4, images);
  const std::uint32_t h = be32(ib, 8, images);
  const std::uint32_t w = be32(ib, 12, images);
  const std::size_t dim = std::size_t(h) * w;
  if (count == 0 || dim == 0) throw FormatError("IDX image file '" + images.string() + "' is empty");
  if (ib.size() != 16 + std::size_t(count) * dim)
    throw FormatError("IDX image payload size mismatch in '" + images.string() + "'");

  std::optional<std::vector<int>> lab;
  if (labels) {
    const std::string lb = read_all(*labels);
    if (be32(lb, 0, *labels) != 0x00000801u)
      throw FormatError("bad IDX label magic in '" + labels->string() + "' (expected 0x00000801)");
    const std::uint32_t lcount = be32(lb, 4, *labels);
    if (lcount != count)
      throw FormatError("image/label count mismatch: " + std::to_string(count) + " images, " +
                        std::to_string(lcount) + " labels");
    if (lb.size() != 8 + std::size_t(lcount))
      throw FormatError("IDX label payload size mismatch in '" + labels->string() + "'");
    lab.emplace();
    for (std::uint32_t i = 0; i < lcount; ++i) lab->push_back(static_cast<unsigned char>(lb[8 + i]));
  }

  Dataset d;
  d.data.resize(count, static_cast<Index>(dim));
  for (std::uint32_t i = 0; i < count; ++i)
    for (std::size_t j = 0; j < dim; ++j)
      d.data(i, static_cast<Index>(j)) = static_cast<unsigned char>(ib[16 + std::size_t(i) * dim + j]) / 255.0;
  d.normalization.feature_min = Vector::Zero(static_cast<Index>(dim));
  d.normalization.feature_max = Vector::Constant(static_cast<Index>(dim), 255.0);
  d.labels = std::move(lab);
  return d;
}

// ---- metrics -------------------------------------------------------------

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) return "nan";
  return std::string(buf, ptr);
}

MetricsLine::MetricsLine(const std::string& event) : line_("event=" + event) {}

MetricsLine& MetricsLine::add(const std::string& key, double value) {
  line_ += ' ' + key + '=' + format_double(value);
  return *this;
}

MetricsLine& MetricsLine::add(const std::string& key, long long value) {
  line_ += ' ' + key + '=' + std::to_string(value);
  return *this;
}

MetricsLine& MetricsLine::add(const std::string& key, const std::string& value) {
  line_ += ' ' + key + '=' + value;
  return *this;
}

MetricsLine& MetricsLine::add(const std::string& key, const Vector& values) {
  line_ += ' ' + key + '=';
  for (Index i = 0; i < values.size(); ++i) line_ += (i ? "," : "") + format_double(values(i));
  return *this;
}

MetricsLine& MetricsLine::add(const std::string& key, const std::vector<int>& values) {
  line_ += ' ' + key + '=';
  for (std::size_t i = 0; i < values.size(); ++i) line_ += (i ? "," : "") + std::to_string(values[i]);
  return *this;
}

std::ostream& operator<<(std::ostream& os, const MetricsLine& line) { return os << line.str() << '\n'; }

}  // namespace mixnet
