#pragma once

// Labelled samples and their CSV form.
//
// The first row is a header. Feature columns come first, then the label
// column(s):
//   multiclass   one column, 1-based class index in [1, q]
//   multilabel   one column, semicolon-joined 1-based indices ("2;5"), may be empty
//   binary       one column, +1 or -1
//   regression   the trailing q columns

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "mobound/errors.hpp"
#include "mobound/loss_spec.hpp"
#include "mobound/losses.hpp"
#include "mobound/matrix.hpp"

namespace mobound {

enum class TaskKind { Multiclass, Multilabel, Regression, Binary };

inline std::string to_string(TaskKind t) {
  switch (t) {
    case TaskKind::Multiclass: return "multiclass";
    case TaskKind::Multilabel: return "multilabel";
    case TaskKind::Regression: return "regression";
    default: return "binary";
  }
}

inline TaskKind parse_task(std::string_view s) {
  if (s == "multiclass") return TaskKind::Multiclass;
  if (s == "multilabel") return TaskKind::Multilabel;
  if (s == "regression") return TaskKind::Regression;
  if (s == "binary") return TaskKind::Binary;
  throw UsageError("unknown task '" + std::string(s) + "' (multiclass, multilabel, regression, binary)");
}

struct DatasetSchema {
  TaskKind task = TaskKind::Multiclass;
  int q = 2;
  int k = 0;  // multilabel: max positives per row, 0 means q
};

struct Dataset {
  Matrix X;
  std::vector<Label> labels;
  DatasetSchema schema;
  std::vector<std::string> feature_names;

  std::size_t n() const { return X.rows(); }
  std::size_t d() const { return X.cols(); }
  int q() const { return schema.q; }
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = line.find(sep, start);
    out.push_back(trim(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

[[noreturn]] inline void line_error(std::size_t line, const std::string& why) {
  throw DataError("line " + std::to_string(line) + ": " + why);
}

inline double parse_number(std::string_view s, std::size_t line) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || res.ec != std::errc() || res.ptr != s.data() + s.size())
    line_error(line, "cannot parse number '" + std::string(s) + "'");
  return v;
}

inline int parse_int(std::string_view s, std::size_t line) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  int v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || res.ec != std::errc() || res.ptr != s.data() + s.size())
    line_error(line, "cannot parse integer label '" + std::string(s) + "'");
  return v;
}

}  // namespace detail

inline void validate_schema(const DatasetSchema& s) {
  if (s.q < 1) throw UsageError("q must be >= 1");
  if (s.task == TaskKind::Multiclass && s.q < 2) throw UsageError("multiclass data needs q >= 2");
  if (s.task == TaskKind::Binary && s.q != 1) throw UsageError("binary data has q = 1");
  if (s.k < 0) throw UsageError("k must be >= 0");
}

inline Dataset parse_dataset(std::istream& in, const DatasetSchema& schema) {
  validate_schema(schema);
  const std::size_t label_cols = schema.task == TaskKind::Regression ? static_cast<std::size_t>(schema.q) : 1;
  const int k_cap = schema.k == 0 ? schema.q : schema.k;

  std::string line;
  std::size_t lineno = 0;
  Dataset ds;
  ds.schema = schema;
  std::vector<double> values;
  std::size_t width = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    const auto cells = detail::split(line, ',');
    if (!have_header) {
      if (cells.size() <= label_cols) detail::line_error(lineno, "header needs at least one feature column");
      width = cells.size();
      for (std::size_t c = 0; c + label_cols < width; ++c) ds.feature_names.emplace_back(cells[c]);
      have_header = true;
      continue;
    }
    if (cells.size() != width)
      detail::line_error(lineno, "expected " + std::to_string(width) + " fields, got " + std::to_string(cells.size()));
    const std::size_t d = width - label_cols;
    for (std::size_t c = 0; c < d; ++c) {
      const double v = detail::parse_number(cells[c], lineno);
      if (std::isnan(v)) detail::line_error(lineno, "NaN feature in column " + std::to_string(c + 1));
      if (!std::isfinite(v)) detail::line_error(lineno, "non-finite feature in column " + std::to_string(c + 1));
      values.push_back(v);
    }
    switch (schema.task) {
      case TaskKind::Multiclass: {
        const int c = detail::parse_int(cells[d], lineno);
        if (c < 1 || c > schema.q)
          detail::line_error(lineno, "class label " + std::to_string(c) + " outside [1, " + std::to_string(schema.q) + "]");
        ds.labels.push_back(ClassIndex{c - 1});
        break;
      }
      case TaskKind::Multilabel: {
        SparseBinary b{std::vector<std::uint8_t>(static_cast<std::size_t>(schema.q), 0)};
        int ones = 0;
        if (!cells[d].empty()) {
          for (auto part : detail::split(cells[d], ';')) {
            const int c = detail::parse_int(part, lineno);
            if (c < 1 || c > schema.q)
              detail::line_error(lineno, "label index " + std::to_string(c) + " outside [1, " + std::to_string(schema.q) + "]");
            auto& bit = b.bits[static_cast<std::size_t>(c - 1)];
            if (bit) detail::line_error(lineno, "repeated label index " + std::to_string(c));
            bit = 1;
            ++ones;
          }
        }
        if (ones > k_cap) detail::line_error(lineno, "more than k = " + std::to_string(k_cap) + " positive labels");
        ds.labels.push_back(std::move(b));
        break;
      }
      case TaskKind::Binary: {
        const int s = detail::parse_int(cells[d], lineno);
        if (s != 1 && s != -1) detail::line_error(lineno, "binary label must be +1 or -1");
        ds.labels.push_back(BinarySign{s});
        break;
      }
      case TaskKind::Regression: {
        RealVector r;
        for (std::size_t j = 0; j < label_cols; ++j) {
          const double v = detail::parse_number(cells[d + j], lineno);
          if (!std::isfinite(v)) detail::line_error(lineno, "non-finite target");
          r.values.push_back(v);
        }
        ds.labels.push_back(std::move(r));
        break;
      }
    }
  }
  if (ds.labels.empty()) throw DataError("no rows");
  ds.X = Matrix(ds.labels.size(), width - label_cols, std::move(values));
  return ds;
}

inline Dataset load_dataset(const std::string& path, const DatasetSchema& schema) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  return parse_dataset(in, schema);
}

/// Writes the CSV form; parse_dataset() of the output reproduces the dataset bit-exactly.
inline void write_dataset(std::ostream& out, const Dataset& ds) {
  const std::size_t d = ds.d();
  for (std::size_t c = 0; c < d; ++c)
    out << (c < ds.feature_names.size() ? ds.feature_names[c] : "x" + std::to_string(c + 1)) << ',';
  if (ds.schema.task == TaskKind::Regression) {
    for (int j = 0; j < ds.schema.q; ++j) out << (j ? ",y" : "y") << j + 1;
  } else {
    out << "label";
  }
  out << '\n';
  for (std::size_t i = 0; i < ds.n(); ++i) {
    for (std::size_t c = 0; c < d; ++c) out << format_double(ds.X(i, c)) << ',';
    std::visit(
        [&](const auto& y) {
          using Y = std::decay_t<decltype(y)>;
          if constexpr (std::is_same_v<Y, ClassIndex>) {
            out << y.index + 1;
          } else if constexpr (std::is_same_v<Y, SparseBinary>) {
            bool first = true;
            for (std::size_t j = 0; j < y.bits.size(); ++j) {
              if (!y.bits[j]) continue;
              out << (first ? "" : ";") << j + 1;
              first = false;
            }
          } else if constexpr (std::is_same_v<Y, BinarySign>) {
            out << y.sign;
          } else {
            for (std::size_t j = 0; j < y.values.size(); ++j) out << (j ? "," : "") << format_double(y.values[j]);
          }
        },
        ds.labels[i]);
    out << '\n';
  }
}

inline void save_dataset(const std::string& path, const Dataset& ds) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  write_dataset(out, ds);
}

/// Throws DataError when the loss cannot be evaluated on this dataset's labels.
inline void check_compatible(const Dataset& ds, const LossKind& loss) {
  if (ds.n() == 0) throw DataError("empty dataset");
  const std::vector<double> zero(static_cast<std::size_t>(ds.q()), 0.0);
  eval(loss, zero, ds.labels.front());
}

}  // namespace mobound
