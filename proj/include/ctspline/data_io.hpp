#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "ctspline/error.hpp"
#include "ctspline/random.hpp"

namespace ctspline {

struct DataSet {
  Eigen::VectorXd times;
  Eigen::VectorXd values;
  Eigen::VectorXd weights;

  Eigen::Index size() const { return times.size(); }
};

/// Shortest decimal text that parses back to the same double.
inline std::string format_double(double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

/// Fixed 17 significant digits.
inline std::string format_double17(double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), x, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

inline std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    fields.push_back(trim(line.substr(start, comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return fields;
}

inline double parse_field(std::string_view field, std::size_t row, std::size_t col) {
  double value = 0.0;
  const char* begin = field.data();
  const char* end = begin + field.size();
  if (!field.empty() && *begin == '+') ++begin;
  const auto res = std::from_chars(begin, end, value);
  if (field.empty() || res.ec != std::errc() || res.ptr != end || !std::isfinite(value)) {
    throw Error(ErrorKind::ParseError, "row " + std::to_string(row) + ", column " +
                                           std::to_string(col) + ": cannot parse '" +
                                           std::string(field) + "' as a finite number");
  }
  return value;
}

}  // namespace detail

/// Validates DataSet invariants; rows must already be sorted by time.
inline void validate_dataset(const DataSet& data) {
  const Eigen::Index count = data.times.size();
  if (data.values.size() != count || data.weights.size() != count) {
    throw Error(ErrorKind::DimensionMismatch, "dataset columns differ in length");
  }
  if (count == 0) throw Error(ErrorKind::InvalidArgument, "dataset is empty");
  if (!data.times.allFinite() || !data.values.allFinite() || !data.weights.allFinite()) {
    throw Error(ErrorKind::NonFinite, "dataset has NaN/Inf entries");
  }
  for (Eigen::Index i = 0; i < count; ++i) {
    if (data.times(i) <= 0.0) {
      throw Error(ErrorKind::NonPositiveTime,
                  "t = " + format_double(data.times(i)) + " must be > 0");
    }
    if (i > 0 && data.times(i) == data.times(i - 1)) {
      throw Error(ErrorKind::DuplicateTime, "t = " + format_double(data.times(i)) +
                                                " appears more than once");
    }
    if (i > 0 && data.times(i) < data.times(i - 1)) {
      throw Error(ErrorKind::NonIncreasingTimes, "times are not sorted");
    }
    if (!(data.weights(i) > 0.0)) {
      throw Error(ErrorKind::NonPositiveWeight,
                  "w = " + format_double(data.weights(i)) + " at t = " +
                      format_double(data.times(i)) + " must be > 0");
    }
  }
}

/// Parses `t,y` or `t,y,w` CSV. Rows are sorted by t; a missing w column
/// means unit weights.
inline DataSet read_dataset(std::istream& in) {
  std::string line;
  std::size_t row = 0;
  // Header: first non-blank line.
  while (std::getline(in, line)) {
    ++row;
    if (!detail::trim(line).empty()) break;
  }
  const auto header = detail::split_csv(line);
  const bool has_weights = header.size() == 3 && header[2] == "w";
  if (header.size() < 2 || header[0] != "t" || header[1] != "y" ||
      (header.size() == 3 && !has_weights) || header.size() > 3) {
    throw Error(ErrorKind::ParseError, "row " + std::to_string(row) +
                                           ": expected header 't,y' or 't,y,w', got '" +
                                           line + "'");
  }
  const std::size_t columns = header.size();

  struct Row {
    double t, y, w;
  };
  std::vector<Row> rows;
  while (std::getline(in, line)) {
    ++row;
    if (detail::trim(line).empty()) continue;
    const auto fields = detail::split_csv(line);
    if (fields.size() != columns) {
      throw Error(ErrorKind::ParseError, "row " + std::to_string(row) + ": expected " +
                                             std::to_string(columns) + " fields, got " +
                                             std::to_string(fields.size()));
    }
    Row r{detail::parse_field(fields[0], row, 1), detail::parse_field(fields[1], row, 2),
          has_weights ? detail::parse_field(fields[2], row, 3) : 1.0};
    rows.push_back(r);
  }
  std::stable_sort(rows.begin(), rows.end(),
                   [](const Row& a, const Row& b) { return a.t < b.t; });

  DataSet data;
  const auto count = static_cast<Eigen::Index>(rows.size());
  data.times.resize(count);
  data.values.resize(count);
  data.weights.resize(count);
  for (Eigen::Index i = 0; i < count; ++i) {
    const auto& r = rows[static_cast<std::size_t>(i)];
    data.times(i) = r.t;
    data.values(i) = r.y;
    data.weights(i) = r.w;
  }
  validate_dataset(data);
  return data;
}

inline DataSet read_dataset_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoError, "cannot open '" + path + "' for reading");
  return read_dataset(in);
}

/// Writes `t,y,w` with LF line endings and round-trip number formatting.
inline void write_dataset(std::ostream& out, const DataSet& data) {
  out << "t,y,w\n";
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    out << format_double(data.times(i)) << ',' << format_double(data.values(i)) << ','
        << format_double(data.weights(i)) << '\n';
  }
}

inline void write_dataset_file(const std::string& path, const DataSet& data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::IoError, "cannot open '" + path + "' for writing");
  write_dataset(out, data);
  if (!out) throw Error(ErrorKind::IoError, "write to '" + path + "' failed");
}

/// The noiseless target curve sin(2t) + 1.
inline double reference_curve(double t) { return std::sin(2.0 * t) + 1.0; }

inline constexpr std::size_t kReferenceSamples = 501;

/// Sample times t_i = 0.1 + 0.01 (i - 1), i = 1..501.
inline Eigen::VectorXd reference_times() {
  Eigen::VectorXd times(static_cast<Eigen::Index>(kReferenceSamples));
  for (Eigen::Index i = 0; i < times.size(); ++i) {
    times(i) = 0.1 + 0.01 * static_cast<double>(i);
  }
  return times;
}

struct SyntheticData {
  DataSet data;
  std::function<double(double)> reference;
};

/// 501 samples of sin(2t) + 1 on [0.1, 5.1] plus Laplace noise of the given
/// variance (variance 0 gives the clean samples), unit weights.
inline SyntheticData synth_reference_dataset(std::uint64_t seed, double variance = 1.0) {
  if (!(variance >= 0.0) || !std::isfinite(variance)) {
    throw Error(ErrorKind::InvalidArgument, "noise variance must be finite and >= 0");
  }
  SyntheticData out;
  out.reference = reference_curve;
  out.data.times = reference_times();
  const Eigen::Index count = out.data.times.size();
  out.data.values = out.data.times.unaryExpr([](double t) { return reference_curve(t); });
  out.data.weights = Eigen::VectorXd::Ones(count);
  if (variance > 0.0) {
    const auto noise = laplace_noise(seed, variance, static_cast<std::size_t>(count));
    for (Eigen::Index i = 0; i < count; ++i) {
      out.data.values(i) += noise[static_cast<std::size_t>(i)];
    }
  }
  return out;
}

}  // namespace ctspline
