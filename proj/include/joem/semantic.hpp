#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "joem/error.hpp"

namespace joem {

/// Euclidean distance between two equal-length vectors.
inline double euclidean(const std::vector<double>& a,
                        const std::vector<double>& b) {
  if (a.size() != b.size()) {
    fail(ErrorKind::invalid_input,
         "euclidean: dimension mismatch (" + std::to_string(a.size()) + " vs " +
             std::to_string(b.size()) + ")");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    sum += d * d;
  }
  return std::sqrt(sum);
}

/// Per-class D-dimensional semantic vectors (word2vec stand-in).
///
/// Reads can optionally be recorded; the training audit uses this to prove
/// that unseen-class vectors are never touched while fitting the model.
class SemanticTable {
 public:
  SemanticTable() = default;
  explicit SemanticTable(int dim) : dim_(dim) {}

  int dim() const { return dim_; }
  std::size_t size() const { return entries_.size(); }
  bool contains(int id) const { return entries_.count(id) != 0; }

  void insert(int id, std::vector<double> vec, std::string name = "") {
    if (dim_ == 0) dim_ = static_cast<int>(vec.size());
    if (static_cast<int>(vec.size()) != dim_) {
      fail(ErrorKind::invalid_input,
           "SemanticTable: vector for class " + std::to_string(id) + " has dimension " +
               std::to_string(vec.size()) + ", expected " + std::to_string(dim_));
    }
    entries_[id] = std::move(vec);
    names_[id] = name.empty() ? "class_" + std::to_string(id) : std::move(name);
  }

  const std::vector<double>& vector(int id) const {
    auto it = entries_.find(id);
    if (it == entries_.end()) {
      fail(ErrorKind::unknown_class,
           "SemanticTable: no semantic vector for class " + std::to_string(id));
    }
    if (access_log_) access_log_->insert(id);
    return it->second;
  }

  const std::string& name(int id) const {
    auto it = names_.find(id);
    if (it == names_.end()) {
      fail(ErrorKind::unknown_class,
           "SemanticTable: no name for class " + std::to_string(id));
    }
    return it->second;
  }

  std::vector<int> ids() const {
    std::vector<int> out;
    out.reserve(entries_.size());
    for (const auto& [id, _] : entries_) out.push_back(id);
    return out;
  }

  /// Start recording the ids whose vectors are read through this table.
  void start_access_log() { access_log_ = std::make_shared<std::set<int>>(); }
  void stop_access_log() { access_log_.reset(); }
  std::set<int> accessed_ids() const {
    return access_log_ ? *access_log_ : std::set<int>{};
  }

 private:
  int dim_ = 0;
  std::map<int, std::vector<double>> entries_;
  std::map<int, std::string> names_;
  std::shared_ptr<std::set<int>> access_log_;
};

/// Text format: one line per class, `<class_name> <id> <v_1> ... <v_D>`.
inline SemanticTable load_semantic_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io_failure, "cannot open semantic table " + path);
  SemanticTable table;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string name;
    int id = 0;
    if (!(ss >> name >> id)) {
      fail(ErrorKind::io_failure,
           path + ":" + std::to_string(line_no) + ": expected `name id v...`");
    }
    std::vector<double> vec;
    double v = 0.0;
    while (ss >> v) vec.push_back(v);
    if (vec.empty()) {
      fail(ErrorKind::io_failure,
           path + ":" + std::to_string(line_no) + ": class " + name +
               " has no vector components");
    }
    if (table.dim() != 0 && static_cast<int>(vec.size()) != table.dim()) {
      fail(ErrorKind::io_failure,
           path + ":" + std::to_string(line_no) + ": inconsistent dimension " +
               std::to_string(vec.size()) + " (expected " +
               std::to_string(table.dim()) + ")");
    }
    table.insert(id, std::move(vec), name);
  }
  if (table.size() == 0) {
    fail(ErrorKind::io_failure, path + ": empty semantic table");
  }
  return table;
}

inline void save_semantic_table(const SemanticTable& table,
                                const std::string& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::io_failure, "cannot write semantic table " + path);
  for (int id : table.ids()) {
    out << table.name(id) << ' ' << id;
    for (double v : table.vector(id)) {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%.17g", v);
      out << ' ' << buf;
    }
    out << '\n';
  }
}

/// Linear semantic encoder (the 1x1-convolution equivalent): a D x C weight
/// matrix plus a C bias, mapping semantic features to semantic prototypes.
struct SemanticEncoderParams {
  int in_dim = 0;    // D
  int out_dim = 0;   // C
  std::vector<double> weight;  // row-major [d][c]
  std::vector<double> bias;    // [c]

  SemanticEncoderParams() = default;
  SemanticEncoderParams(int d, int c)
      : in_dim(d), out_dim(c), weight(static_cast<std::size_t>(d) * c, 0.0),
        bias(c, 0.0) {
    if (d <= 0 || c <= 0) {
      fail(ErrorKind::invalid_parameter, "SemanticEncoderParams: dimensions must be positive");
    }
  }

  double& w(int d, int c) { return weight[static_cast<std::size_t>(d) * out_dim + c]; }
  double w(int d, int c) const {
    return weight[static_cast<std::size_t>(d) * out_dim + c];
  }
};

/// Affine map weight^T * s + bias.
inline std::vector<double> encode_semantic(const SemanticEncoderParams& params,
                                           const std::vector<double>& s) {
  if (static_cast<int>(s.size()) != params.in_dim) {
    fail(ErrorKind::invalid_input,
         "encode_semantic: input dimension " + std::to_string(s.size()) +
             " does not match encoder D=" + std::to_string(params.in_dim));
  }
  std::vector<double> out(params.bias);
  for (int d = 0; d < params.in_dim; ++d) {
    const double sd = s[d];
    const double* wrow = params.weight.data() + static_cast<std::size_t>(d) * params.out_dim;
    for (int c = 0; c < params.out_dim; ++c) out[c] += sd * wrow[c];
  }
  return out;
}

/// Per-class C-dimensional semantic prototypes mu_c.
struct PrototypeSet {
  int dim = 0;
  std::map<int, std::vector<double>> entries;

  bool contains(int id) const { return entries.count(id) != 0; }

  const std::vector<double>& at(int id) const {
    auto it = entries.find(id);
    if (it == entries.end()) {
      fail(ErrorKind::unknown_class,
           "PrototypeSet: no prototype for class " + std::to_string(id));
    }
    return it->second;
  }

  std::vector<int> ids() const {
    std::vector<int> out;
    out.reserve(entries.size());
    for (const auto& [id, _] : entries) out.push_back(id);
    return out;
  }

  void insert(int id, std::vector<double> vec) {
    if (dim == 0) dim = static_cast<int>(vec.size());
    if (static_cast<int>(vec.size()) != dim) {
      fail(ErrorKind::invalid_input, "PrototypeSet: inconsistent prototype dimension");
    }
    entries[id] = std::move(vec);
  }
};

/// Encode every requested class; the same encoder handles arbitrary class
/// sets at test time, which is what makes retraining-free inference work.
template <typename ClassRange>
PrototypeSet encode_prototype_set(const SemanticEncoderParams& params,
                                  const SemanticTable& table,
                                  const ClassRange& classes) {
  PrototypeSet protos;
  protos.dim = params.out_dim;
  for (int id : classes) {
    protos.insert(id, encode_semantic(params, table.vector(id)));
  }
  return protos;
}

/// Row-stochastic class-relation matrix: row i is a softmax over j != i of
/// -tau * d(x_i, x_j). The diagonal is excluded from the support.
struct RelationMatrix {
  std::vector<int> classes;        // row/column ordering
  std::vector<double> values;      // K x K row-major, diagonal fixed at 0

  int size() const { return static_cast<int>(classes.size()); }
  double at(int i, int j) const {
    return values[static_cast<std::size_t>(i) * classes.size() + j];
  }
};

inline RelationMatrix relation_matrix(
    const std::map<int, std::vector<double>>& vectors, double tau) {
  if (tau <= 0.0) {
    fail(ErrorKind::invalid_parameter, "relation_matrix: temperature must be positive");
  }
  if (vectors.size() < 2) {
    fail(ErrorKind::invalid_input, "relation_matrix: need at least 2 classes");
  }
  RelationMatrix rel;
  for (const auto& [id, _] : vectors) rel.classes.push_back(id);
  const int k = rel.size();
  rel.values.assign(static_cast<std::size_t>(k) * k, 0.0);

  std::vector<double> logits(k);
  for (int i = 0; i < k; ++i) {
    const auto& xi = vectors.at(rel.classes[i]);
    double max_logit = -HUGE_VAL;
    for (int j = 0; j < k; ++j) {
      if (j == i) continue;
      logits[j] = -tau * euclidean(xi, vectors.at(rel.classes[j]));
      max_logit = std::max(max_logit, logits[j]);
    }
    double denom = 0.0;
    for (int j = 0; j < k; ++j) {
      if (j == i) continue;
      denom += std::exp(logits[j] - max_logit);
    }
    for (int j = 0; j < k; ++j) {
      if (j == i) continue;
      rel.values[static_cast<std::size_t>(i) * k + j] =
          std::exp(logits[j] - max_logit) / denom;
    }
  }
  return rel;
}

}  // namespace joem
