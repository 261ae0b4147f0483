// Copyright 2026 The BFtS Lab Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "bfts/autodiff.hpp"
#include "bfts/error.hpp"
#include "bfts/graph.hpp"

namespace bfts {

inline constexpr const char* kEdgeFile = "edges.tsv";
inline constexpr const char* kFeatureFile = "features.csv";
inline constexpr const char* kNodeFile = "nodes.csv";
inline constexpr const char* kNodeHeader = "node,y,s,observed,train,val,test";

namespace io_detail {

inline std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(line);
  while (std::getline(in, cur, sep)) out.push_back(cur);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

inline std::string where(const std::string& path, std::size_t line_no) {
  return path + ":" + std::to_string(line_no) + ": ";
}

inline std::size_t parse_index(const std::string& tok, const std::string& ctx) {
  if (tok.empty() || tok.find_first_not_of("0123456789") != std::string::npos) {
    throw DataError(ctx + "expected a non-negative integer, got '" + tok + "'");
  }
  return static_cast<std::size_t>(std::stoull(tok));
}

inline double parse_real(const std::string& tok, const std::string& ctx) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(tok, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (tok.empty() || used != tok.size() || !std::isfinite(v)) {
    throw DataError(ctx + "expected a finite real, got '" + tok + "'");
  }
  return v;
}

inline std::uint8_t parse_bit(const std::string& tok, const std::string& ctx) {
  if (tok == "0") return 0;
  if (tok == "1") return 1;
  throw DataError(ctx + "expected 0 or 1, got '" + tok + "'");
}

inline std::ifstream open_in(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  return in;
}

inline void strip_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

}  // namespace io_detail

// Reads the three-file graph format: a tab-separated edge list, a headerless
// feature CSV and the node table with header kNodeHeader.
inline Graph load_graph(const std::string& edge_path,
                        const std::string& feature_path,
                        const std::string& label_path) {
  using namespace io_detail;
  GraphData d;
  {
    auto in = open_in(label_path);
    std::string line;
    std::size_t line_no = 1;
    if (!std::getline(in, line)) throw DataError(label_path + ": empty file");
    strip_cr(line);
    if (line != kNodeHeader) {
      throw DataError(where(label_path, 1) + "expected header '" +
                      std::string(kNodeHeader) + "'");
    }
    while (std::getline(in, line)) {
      ++line_no;
      strip_cr(line);
      if (line.empty()) continue;
      const auto ctx = where(label_path, line_no);
      const auto f = split(line, ',');
      if (f.size() != 7) {
        throw DataError(ctx + "expected 7 columns, got " +
                        std::to_string(f.size()));
      }
      if (parse_index(f[0], ctx) != d.n_nodes) {
        throw DataError(ctx + "node ids must be 0..n-1 in order");
      }
      d.labels.push_back(parse_bit(f[1], ctx));
      d.sensitive.push_back(parse_bit(f[2], ctx));
      d.observed.push_back(parse_bit(f[3], ctx));
      d.train.push_back(parse_bit(f[4], ctx));
      d.val.push_back(parse_bit(f[5], ctx));
      d.test.push_back(parse_bit(f[6], ctx));
      ++d.n_nodes;
    }
  }
  {
    auto in = open_in(feature_path);
    std::string line;
    std::size_t line_no = 0;
    std::vector<double> values;
    std::size_t cols = 0, rows = 0;
    while (std::getline(in, line)) {
      ++line_no;
      strip_cr(line);
      if (line.empty()) continue;
      const auto ctx = where(feature_path, line_no);
      const auto f = split(line, ',');
      if (rows == 0) {
        cols = f.size();
      } else if (f.size() != cols) {
        throw DataError(ctx + "feature dimension mismatch: " +
                        std::to_string(f.size()) + " columns, expected " +
                        std::to_string(cols));
      }
      for (const auto& tok : f) values.push_back(parse_real(tok, ctx));
      ++rows;
    }
    if (rows != d.n_nodes) {
      throw DataError(feature_path + ": " + std::to_string(rows) +
                      " feature rows for " + std::to_string(d.n_nodes) +
                      " nodes");
    }
    d.features = Matrix(rows, cols);
    d.features.data = std::move(values);
  }
  {
    auto in = open_in(edge_path);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      strip_cr(line);
      if (line.empty()) continue;
      const auto ctx = where(edge_path, line_no);
      auto f = split(line, '\t');
      if (f.size() != 2) {
        // tolerate a single space separator
        f = split(line, ' ');
      }
      if (f.size() != 2) throw DataError(ctx + "expected 'u<TAB>v'");
      const std::size_t u = parse_index(f[0], ctx);
      const std::size_t v = parse_index(f[1], ctx);
      if (u == v) throw DataError(ctx + "self-loop on node " + f[0]);
      if (u >= d.n_nodes || v >= d.n_nodes) {
        throw DataError(ctx + "node index out of range");
      }
      d.edges.emplace_back(u, v);
    }
  }
  return Graph(std::move(d));
}

inline Graph load_graph_dir(const std::filesystem::path& dir) {
  return load_graph((dir / kEdgeFile).string(), (dir / kFeatureFile).string(),
                    (dir / kNodeFile).string());
}

inline void save_graph(const Graph& g, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto open_out = [&](const char* name) {
    std::ofstream out(dir / name, std::ios::binary);
    if (!out) throw DataError("cannot write " + (dir / name).string());
    return out;
  };
  {
    auto out = open_out(kEdgeFile);
    for (const auto& [u, v] : g.edges()) out << u << '\t' << v << '\n';
  }
  {
    auto out = open_out(kFeatureFile);
    const Matrix& x = g.features();
    for (std::size_t r = 0; r < x.rows; ++r) {
      for (std::size_t c = 0; c < x.cols; ++c) {
        if (c) out << ',';
        out << format_double(x(r, c));
      }
      out << '\n';
    }
  }
  {
    auto out = open_out(kNodeFile);
    out << kNodeHeader << '\n';
    for (std::size_t v = 0; v < g.n_nodes(); ++v) {
      out << v << ',' << int(g.labels()[v]) << ',' << int(g.sensitive()[v])
          << ',' << int(g.observed()[v] != 0) << ',' << int(g.train()[v] != 0)
          << ',' << int(g.val()[v] != 0) << ',' << int(g.test()[v] != 0)
          << '\n';
    }
  }
}

}  // namespace bfts
