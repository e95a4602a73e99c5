#pragma once

#include <mixnet/mixture.hpp>

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace mixnet {

/// Per-dimension affine record: original = min + normalized * (max - min).
struct Normalization {
  Vector feature_min;
  Vector feature_max;

  Matrix normalize(const Matrix& raw) const;
  Matrix denormalize(const Matrix& unit) const;
  bool operator==(const Normalization& o) const {
    return feature_min == o.feature_min && feature_max == o.feature_max;
  }
};

/// N x D rows in [0, 1] with optional integer labels.
struct Dataset {
  Matrix data;
  std::optional<std::vector<int>> labels;
  Normalization normalization;

  Index size() const { return data.rows(); }
  Index dim() const { return data.cols(); }
  /// Rows (and labels) at the given indices; normalization is shared.
  Dataset subset(const std::vector<Index>& rows) const;
};

/// Min-max per column; constant columns map to 0.
Dataset make_dataset(const Matrix& raw, std::optional<std::vector<int>> labels = std::nullopt);

// ---- toy data ----------------------------------------------------------

enum class ToyKind { TwoMoon, MoonCircle, TwoCircle };

ToyKind parse_toy_kind(const std::string& name);
std::string to_string(ToyKind kind);

inline constexpr double kTwoCircleInner = 0.5;
inline constexpr double kTwoCircleOuter = 1.0;

/// Raw (pre-normalization) coordinates and labels.
struct ToyPoints {
  Matrix points;
  std::vector<int> labels;
};

ToyPoints toy_points(ToyKind kind, Index n, double noise, std::uint64_t seed);

/// toy_points, normalized to [0, 1]^2.
Dataset gen_toy(ToyKind kind, Index n, double noise, std::uint64_t seed);

// ---- files ---------------------------------------------------------------

/// Comma-separated numbers; with `has_labels` the last column is an integer label.
Dataset load_csv(const std::filesystem::path& path, bool has_labels);
/// Same, without normalizing (values as written).
Matrix read_csv_matrix(const std::filesystem::path& path, std::vector<int>* labels);

/// IDX images (magic 0x00000803) and optional labels (0x00000801); pixels / 255.
Dataset load_idx(const std::filesystem::path& images, const std::optional<std::filesystem::path>& labels);

/// Writes rows as CSV with full round-trip precision; labels become the last column.
void write_csv(std::ostream& out, const Matrix& rows, const std::vector<int>* labels = nullptr);

/// Writes via a temporary file and renames, so failures leave no partial file.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

// ---- checkpoint --------------------------------------------------------

inline constexpr char kCheckpointMagic[8] = {'M', 'I', 'X', 'N', 'E', 'T', '0', '1'};

struct ModelCheckpoint {
  MixtureModel model;
  Normalization normalization;
  std::vector<std::uint64_t> seeds;
};

std::string serialize_checkpoint(const ModelCheckpoint& ckpt);
ModelCheckpoint deserialize_checkpoint(const std::string& bytes);
void save_model(const ModelCheckpoint& ckpt, const std::filesystem::path& path);
ModelCheckpoint load_model(const std::filesystem::path& path);

// ---- membership grid ---------------------------------------------------

struct GridBounds {
  double x_min = 0.0, x_max = 1.0;
  double y_min = 0.0, y_max = 1.0;
};

/// r*r rows of (x, y, m_1..m_K) over a regular grid in generator target space.
Matrix membership_grid(const MixtureModel& model, const GridBounds& bounds, Index resolution,
                       Index samples_s, Rng& rng);

/// Header line "x,y,m1,...,mK" then one CSV row per grid point.
void export_grid(std::ostream& out, const MixtureModel& model, const GridBounds& bounds,
                 Index resolution, Index samples_s, Rng& rng);

// ---- metrics -------------------------------------------------------------

/// One "key=value key=value ..." line.
class MetricsLine {
 public:
  explicit MetricsLine(const std::string& event);
  MetricsLine& add(const std::string& key, double value);
  MetricsLine& add(const std::string& key, long long value);
  MetricsLine& add(const std::string& key, int value) { return add(key, static_cast<long long>(value)); }
  MetricsLine& add(const std::string& key, const std::string& value);
  MetricsLine& add(const std::string& key, const Vector& values);
  MetricsLine& add(const std::string& key, const std::vector<int>& values);
  const std::string& str() const { return line_; }

 private:
  std::string line_;
};

std::ostream& operator<<(std::ostream& os, const MetricsLine& line);

/// Shortest decimal form that round-trips a double.
std::string format_double(double v);

}  // namespace mixnet
