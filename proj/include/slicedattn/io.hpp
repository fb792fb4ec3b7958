#pragma once

// File formats for the CLI: token matrices as JSON ({"n","d","data"}) or
// headerless CSV, per-head parameter bundles as JSON, and the CSV emitters
// for benchmark records and heatmaps.

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "slicedattn/bench.hpp"
#include "slicedattn/core.hpp"
#include "slicedattn/diagnostics.hpp"
#include "slicedattn/model.hpp"

namespace slicedattn {

using json = nlohmann::json;

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot write '" + path + "'");
  out << content;
}

inline bool has_suffix(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

namespace detail {

inline std::string format_value(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <class T>
Matrix<T> matrix_from_json(const json& j, const char* what) {
  if (!j.is_array() || j.empty() || !j[0].is_array())
    throw ParseError(std::string(what) + ": expected an array of rows");
  Matrix<T> m(j.size(), j[0].size());
  for (std::size_t r = 0; r < m.rows; ++r) {
    if (!j[r].is_array() || j[r].size() != m.cols)
      throw ShapeError(std::string(what) + ": ragged rows");
    for (std::size_t c = 0; c < m.cols; ++c) {
      if (!j[r][c].is_number()) throw ParseError(std::string(what) + ": non-numeric entry");
      m(r, c) = static_cast<T>(j[r][c].template get<double>());
    }
  }
  return m;
}

template <class T>
std::vector<T> vector_from_json(const json& j, const char* what) {
  if (!j.is_array()) throw ParseError(std::string(what) + ": expected an array");
  std::vector<T> v(j.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!j[i].is_number()) throw ParseError(std::string(what) + ": non-numeric entry");
    v[i] = static_cast<T>(j[i].template get<double>());
  }
  return v;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Token matrices

template <class T>
Matrix<T> read_matrix_csv(const std::string& text, const char* what = "csv") {
  std::vector<T> values;
  std::size_t cols = 0, rows = 0;
  std::istringstream lines(text);
  std::string line;
  while (std::getline(lines, line)) {
    if (line.empty() || line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream fields(line);
    std::string field;
    std::size_t this_cols = 0;
    while (std::getline(fields, field, ',')) {
      try {
        values.push_back(static_cast<T>(std::stod(field)));
      } catch (const std::exception&) {
        throw ParseError(std::string(what) + ": bad number '" + field + "' on line " + std::to_string(rows + 1));
      }
      ++this_cols;
    }
    if (cols == 0)
      cols = this_cols;
    else if (this_cols != cols)
      throw ShapeError(std::string(what) + ": line " + std::to_string(rows + 1) + " has " +
                       std::to_string(this_cols) + " fields, expected " + std::to_string(cols));
    ++rows;
  }
  if (rows == 0) throw ParseError(std::string(what) + ": no data rows");
  Matrix<T> m(rows, cols);
  m.data = std::move(values);
  return m;
}

template <class T>
Matrix<T> read_tokens(const std::string& path) {
  const std::string text = read_file(path);
  if (has_suffix(path, ".csv")) return read_matrix_csv<T>(text, path.c_str());
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  if (!j.contains("data")) throw ParseError(path + ": missing 'data'");
  Matrix<T> m = detail::matrix_from_json<T>(j["data"], "data");
  if (j.contains("n") && j["n"].template get<std::size_t>() != m.rows)
    throw ShapeError(path + ": 'n' disagrees with data rows");
  if (j.contains("d") && j["d"].template get<std::size_t>() != m.cols)
    throw ShapeError(path + ": 'd' disagrees with data columns");
  return m;
}

template <class T>
std::string matrix_to_csv(const Matrix<T>& m) {
  std::string out;
  for (std::size_t r = 0; r < m.rows; ++r) {
    for (std::size_t c = 0; c < m.cols; ++c) {
      if (c) out += ',';
      out += detail::format_value(static_cast<double>(m(r, c)));
    }
    out += '\n';
  }
  return out;
}

template <class T>
std::string matrix_to_json(const Matrix<T>& m) {
  std::string out = "{\"n\": " + std::to_string(m.rows) + ", \"d\": " + std::to_string(m.cols) + ", \"data\": [";
  for (std::size_t r = 0; r < m.rows; ++r) {
    out += r ? ",\n  [" : "\n  [";
    for (std::size_t c = 0; c < m.cols; ++c) {
      if (c) out += ", ";
      out += detail::format_value(static_cast<double>(m(r, c)));
    }
    out += ']';
  }
  out += "\n]}\n";
  return out;
}

template <class T>
void write_matrix(const std::string& path, const Matrix<T>& m) {
  write_file(path, has_suffix(path, ".csv") ? matrix_to_csv(m) : matrix_to_json(m));
}

// ---------------------------------------------------------------------------
// Parameter files: {"heads": [{"Q": {...}, "K": {...}, "V": {...},
// "W": {...}?, "projection": {...}, "proj_head": 0?}, ...]}

template <class T>
AffineMap<T> affine_from_json(const json& j, const char* what) {
  if (!j.contains("weight")) throw ParseError(std::string(what) + ": missing 'weight'");
  AffineMap<T> m;
  m.weight = detail::matrix_from_json<T>(j["weight"], what);
  if (j.contains("bias")) m.bias = detail::vector_from_json<T>(j["bias"], what);
  return m;
}

template <class T>
Projection<T> projection_from_json(const json& j) {
  if (!j.contains("kind")) throw ParseError("projection: missing 'kind'");
  const std::string kind = j["kind"].template get<std::string>();
  Projection<T> p;
  if (kind == "linear") {
    p = Projection<T>::linear(detail::matrix_from_json<T>(j.at("weight"), "projection.weight"));
    if (j.contains("bias")) p.bias = detail::vector_from_json<T>(j["bias"], "projection.bias");
  } else if (kind == "mlp1") {
    p = Projection<T>::mlp1(detail::matrix_from_json<T>(j.at("hidden_weight"), "projection.hidden_weight"),
                            j.contains("hidden_bias")
                                ? detail::vector_from_json<T>(j["hidden_bias"], "projection.hidden_bias")
                                : std::vector<T>{},
                            detail::matrix_from_json<T>(j.at("weight"), "projection.weight"),
                            j.contains("bias") ? detail::vector_from_json<T>(j["bias"], "projection.bias")
                                               : std::vector<T>{});
  } else {
    throw ParseError("projection: unknown kind '" + kind + "'");
  }
  return p;
}

template <class T>
std::vector<HeadParams<T>> read_params(const std::string& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  if (!j.contains("heads") || !j["heads"].is_array() || j["heads"].empty())
    throw ParseError(path + ": expected a non-empty 'heads' array");
  std::vector<HeadParams<T>> heads;
  for (const auto& hj : j["heads"]) {
    HeadParams<T> h;
    try {
      h.q = affine_from_json<T>(hj.at("Q"), "Q");
      h.k = affine_from_json<T>(hj.at("K"), "K");
      h.v = affine_from_json<T>(hj.at("V"), "V");
      if (hj.contains("W")) h.mixer = detail::matrix_from_json<T>(hj["W"].at("weight"), "W");
      h.projection = projection_from_json<T>(hj.at("projection"));
      if (hj.contains("proj_head")) h.proj_head = hj["proj_head"].template get<std::size_t>();
    } catch (const json::exception& e) {
      throw ParseError(path + ": " + e.what());
    }
    heads.push_back(std::move(h));
  }
  return heads;
}

// ---------------------------------------------------------------------------
// CSV emitters

inline std::string bench_records_to_csv(const std::vector<BenchRecord>& records) {
  std::string out = "n,d,heads,impl,dtype,mean_ms,std_ms,reps\n";
  for (const auto& r : records) {
    out += std::to_string(r.n) + ',' + std::to_string(r.d) + ',' + std::to_string(r.heads) + ',';
    out += bench_impl_name(r.impl);
    out += ',';
    out += r.dtype + ',' + detail::format_value(r.mean_ms) + ',' + detail::format_value(r.std_ms) + ',' +
           std::to_string(r.reps) + '\n';
  }
  return out;
}

inline std::string heatmap_to_csv(const HeatmapField& field) {
  std::string out = "x,y,weight\n";
  for (std::size_t j = 0; j < field.grid.ny; ++j)
    for (std::size_t i = 0; i < field.grid.nx; ++i)
      out += detail::format_value(field.xs[i]) + "," + detail::format_value(field.ys[j]) + "," +
             detail::format_value(field.weights(j, i)) + "\n";
  return out;
}

}  // namespace slicedattn
