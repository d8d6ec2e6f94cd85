#pragma once

// Tabular datasets, standardization, and the monomial feature map that turns
// (x, z) into the regressor vector of a linear decision rule.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "fairopt/detail/csv.hpp"
#include "fairopt/error.hpp"

namespace fairopt {

enum class Role { predictor, target, protected_attribute };
enum class ColumnType { binary, categorical, continuous };

inline const char* to_string(Role r) {
  switch (r) {
    case Role::predictor: return "predictor";
    case Role::target: return "target";
    case Role::protected_attribute: return "protected";
  }
  return "?";
}

inline const char* to_string(ColumnType t) {
  switch (t) {
    case ColumnType::binary: return "binary";
    case ColumnType::categorical: return "categorical";
    case ColumnType::continuous: return "continuous";
  }
  return "?";
}

struct ColumnSpec {
  Role role = Role::predictor;
  ColumnType type = ColumnType::continuous;
  std::optional<std::string> reference;  // level coded 0 / dropped from the one-hot block
  std::optional<std::string> positive;   // binary target level coded +1
};

/// Column name -> role/type. Columns of the CSV that are not listed are ignored.
using Schema = std::map<std::string, ColumnSpec>;

/// Accepts either {"col": "target:binary"} or {"col": {"role": ..., "type": ...,
/// "reference": ..., "positive": ...}}. A top-level "columns" key is unwrapped.
inline Schema parse_schema(const nlohmann::json& j) {
  const nlohmann::json& cols = j.contains("columns") ? j.at("columns") : j;
  if (!cols.is_object()) throw SchemaError("schema must be a JSON object");
  auto parse_role = [](const std::string& s) {
    if (s == "predictor") return Role::predictor;
    if (s == "target") return Role::target;
    if (s == "protected") return Role::protected_attribute;
    throw SchemaError("unknown column role '" + s + "'");
  };
  auto parse_type = [](const std::string& s) {
    if (s == "binary") return ColumnType::binary;
    if (s == "categorical") return ColumnType::categorical;
    if (s == "continuous") return ColumnType::continuous;
    throw SchemaError("unknown column type '" + s + "'");
  };
  Schema schema;
  for (const auto& [name, v] : cols.items()) {
    ColumnSpec spec;
    if (v.is_string()) {
      const auto s = v.get<std::string>();
      const auto colon = s.find(':');
      spec.role = parse_role(s.substr(0, colon));
      if (colon != std::string::npos) spec.type = parse_type(s.substr(colon + 1));
    } else if (v.is_object()) {
      spec.role = parse_role(v.at("role").get<std::string>());
      if (v.contains("type")) spec.type = parse_type(v.at("type").get<std::string>());
      if (v.contains("reference")) spec.reference = v.at("reference").get<std::string>();
      if (v.contains("positive")) spec.positive = v.at("positive").get<std::string>();
    } else {
      throw SchemaError("schema entry for '" + name + "' must be a string or object");
    }
    schema.emplace(name, spec);
  }
  return schema;
}

inline Schema load_schema(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open schema file: " + path);
  try {
    return parse_schema(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError("malformed schema file " + path + ": " + e.what());
  }
}

/// One column of the encoded design (x or z block).
struct EncodedColumn {
  std::string name;    // e.g. "alcohol" or "race=black"
  std::string source;  // originating CSV column
  ColumnType type = ColumnType::continuous;  // categorical => 0/1 indicator
};

/// A protected variable before encoding. For binary/categorical variables
/// `group` holds the level index of every row (0 = reference level).
struct ProtectedVariable {
  std::string name;
  ColumnType type = ColumnType::continuous;
  Eigen::Index first_col = 0;  // first column in Dataset::z
  Eigen::Index width = 1;      // number of encoded columns
  std::vector<std::string> levels;
  std::vector<int> group;
};

struct Dataset {
  Eigen::MatrixXd x;  // n x p_x
  Eigen::VectorXd y;  // {-1,+1} for a binary target, reals otherwise
  Eigen::MatrixXd z;  // n x r
  std::vector<EncodedColumn> x_columns;
  std::vector<EncodedColumn> z_columns;
  std::string target_name = "y";
  ColumnType target_type = ColumnType::continuous;
  std::vector<std::string> target_levels;  // binary target: {negative, positive}
  std::vector<ProtectedVariable> protected_vars;
  std::vector<std::pair<std::string, Role>> column_roles;
  std::size_t dropped_rows = 0;

  Eigen::Index n() const { return x.rows(); }
  Eigen::Index px() const { return x.cols(); }
  Eigen::Index r() const { return z.cols(); }

  /// Rows selected in the given order; column metadata is shared.
  Dataset subset(std::span<const Eigen::Index> rows) const {
    Dataset out = *this;
    out.x.resize(static_cast<Eigen::Index>(rows.size()), x.cols());
    out.z.resize(static_cast<Eigen::Index>(rows.size()), z.cols());
    out.y.resize(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t k = 0; k < rows.size(); ++k) {
      const auto i = rows[k];
      const auto kk = static_cast<Eigen::Index>(k);
      out.x.row(kk) = x.row(i);
      out.z.row(kk) = z.row(i);
      out.y(kk) = y(i);
    }
    for (std::size_t v = 0; v < protected_vars.size(); ++v) {
      auto& g = out.protected_vars[v].group;
      if (g.empty()) continue;
      g.resize(rows.size());
      for (std::size_t k = 0; k < rows.size(); ++k) {
        g[k] = protected_vars[v].group[static_cast<std::size_t>(rows[k])];
      }
    }
    out.dropped_rows = 0;
    return out;
  }
};

namespace detail {

inline void check_dataset_shape(const Dataset& ds) {
  if (ds.n() < 2) throw DataError("dataset needs at least 2 rows, got " + std::to_string(ds.n()));
  if (ds.y.size() != ds.n() || ds.z.rows() != ds.n()) {
    throw ShapeError("x, y and z must have the same number of rows");
  }
}

// Sorted distinct levels: numerically when every level parses, else lexically.
inline std::vector<std::string> sorted_levels(const std::set<std::string>& raw) {
  std::vector<std::string> levels(raw.begin(), raw.end());
  const bool numeric = std::all_of(levels.begin(), levels.end(), [](const std::string& s) {
    return parse_double(s).has_value();
  });
  if (numeric) {
    std::stable_sort(levels.begin(), levels.end(), [](const std::string& a, const std::string& b) {
      return *parse_double(a) < *parse_double(b);
    });
  }
  return levels;
}

inline void move_to_front(std::vector<std::string>& levels, const std::string& level,
                          const std::string& column) {
  auto it = std::find(levels.begin(), levels.end(), level);
  if (it == levels.end()) {
    throw SchemaError("level '" + level + "' does not occur in column '" + column + "'");
  }
  std::rotate(levels.begin(), it, it + 1);
}

}  // namespace detail

/// Builds a dataset directly from matrices. Each z column becomes its own
/// protected variable: binary when it holds exactly two distinct values,
/// continuous otherwise. The target is binary when every value is -1 or +1.
inline Dataset make_dataset(Eigen::MatrixXd x, Eigen::VectorXd y, Eigen::MatrixXd z) {
  Dataset ds;
  ds.x = std::move(x);
  ds.y = std::move(y);
  ds.z = std::move(z);
  detail::check_dataset_shape(ds);
  for (Eigen::Index j = 0; j < ds.px(); ++j) {
    const std::string name = "x" + std::to_string(j + 1);
    ds.x_columns.push_back({name, name, ColumnType::continuous});
    ds.column_roles.emplace_back(name, Role::predictor);
  }
  const bool pm_one = (ds.y.array().abs() == 1.0).all();
  const bool has_both = pm_one && (ds.y.array() > 0).any() && (ds.y.array() < 0).any();
  ds.target_type = has_both ? ColumnType::binary : ColumnType::continuous;
  if (has_both) ds.target_levels = {"-1", "1"};
  ds.column_roles.emplace_back(ds.target_name, Role::target);
  for (Eigen::Index j = 0; j < ds.r(); ++j) {
    const std::string name = "z" + std::to_string(j + 1);
    ProtectedVariable pv;
    pv.name = name;
    pv.first_col = j;
    std::set<double> distinct(ds.z.col(j).data(), ds.z.col(j).data() + ds.n());
    if (distinct.size() == 2) {
      pv.type = ColumnType::binary;
      const double lo = *distinct.begin();
      pv.levels = {std::to_string(lo), std::to_string(*distinct.rbegin())};
      pv.group.resize(static_cast<std::size_t>(ds.n()));
      for (Eigen::Index i = 0; i < ds.n(); ++i) {
        pv.group[static_cast<std::size_t>(i)] = ds.z(i, j) == lo ? 0 : 1;
      }
    }
    ds.z_columns.push_back({name, name, pv.type});
    ds.protected_vars.push_back(std::move(pv));
    ds.column_roles.emplace_back(name, Role::protected_attribute);
  }
  return ds;
}

/// Reads a CSV with a header row. Rows containing a missing cell in any
/// schema column are dropped and counted in `Dataset::dropped_rows`.
inline Dataset load_csv(const std::string& path, const Schema& schema) {
  const detail::CsvTable table = detail::read_csv(path);

  std::map<std::string, std::size_t> index;
  for (std::size_t c = 0; c < table.header.size(); ++c) index.emplace(table.header[c], c);

  int n_target = 0, n_pred = 0, n_prot = 0;
  for (const auto& [name, spec] : schema) {
    if (!index.count(name)) throw SchemaError("schema column '" + name + "' not found in " + path);
    n_target += spec.role == Role::target;
    n_pred += spec.role == Role::predictor;
    n_prot += spec.role == Role::protected_attribute;
  }
  if (n_target != 1) throw SchemaError("schema must name exactly one target column");
  if (n_pred < 1) throw SchemaError("schema must name at least one predictor column");
  if (n_prot < 1) throw SchemaError("schema must name at least one protected column");

  // Columns in file order so the encoding is independent of map ordering.
  std::vector<std::pair<std::string, ColumnSpec>> used;
  for (const auto& h : table.header) {
    auto it = schema.find(h);
    if (it != schema.end()) used.emplace_back(h, it->second);
  }

  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const bool missing = std::any_of(used.begin(), used.end(), [&](const auto& u) {
      return detail::is_missing(table.rows[i][index.at(u.first)]);
    });
    if (!missing) keep.push_back(i);
  }

  Dataset ds;
  ds.dropped_rows = table.rows.size() - keep.size();
  const auto n = static_cast<Eigen::Index>(keep.size());
  if (n < 2) {
    throw DataError("dataset needs at least 2 complete rows, got " + std::to_string(n));
  }

  std::vector<Eigen::VectorXd> xcols, zcols;
  for (const auto& [name, spec] : used) {
    const std::size_t c = index.at(name);
    ds.column_roles.emplace_back(name, spec.role);

    if (spec.type == ColumnType::continuous) {
      Eigen::VectorXd col(n);
      for (Eigen::Index k = 0; k < n; ++k) {
        const std::size_t row = keep[static_cast<std::size_t>(k)];
        const auto v = detail::parse_double(table.rows[row][c]);
        if (!v) {
          throw ParseError("non-numeric value '" + table.rows[row][c] + "' in column '" + name +
                           "' at data row " + std::to_string(row + 1));
        }
        col(k) = *v;
      }
      if (spec.role == Role::target) {
        ds.y = col;
        ds.target_name = name;
        ds.target_type = ColumnType::continuous;
      } else if (spec.role == Role::predictor) {
        xcols.push_back(col);
        ds.x_columns.push_back({name, name, ColumnType::continuous});
      } else {
        ProtectedVariable pv;
        pv.name = name;
        pv.first_col = static_cast<Eigen::Index>(zcols.size());
        zcols.push_back(col);
        ds.z_columns.push_back({name, name, ColumnType::continuous});
        ds.protected_vars.push_back(std::move(pv));
      }
      continue;
    }

    std::set<std::string> raw;
    for (auto row : keep) raw.insert(table.rows[row][c]);
    std::vector<std::string> levels = detail::sorted_levels(raw);
    if (spec.type == ColumnType::binary && levels.size() != 2) {
      throw SchemaError("binary column '" + name + "' has " + std::to_string(levels.size()) +
                        " distinct values, expected exactly 2");
    }
    if (spec.type == ColumnType::categorical && levels.size() < 2) {
      throw SchemaError("categorical column '" + name + "' has fewer than 2 levels");
    }
    if (spec.role == Role::target && spec.type == ColumnType::binary && spec.positive) {
      detail::move_to_front(levels, *spec.positive, name);
      std::rotate(levels.begin(), levels.begin() + 1, levels.end());
    } else if (spec.reference) {
      detail::move_to_front(levels, *spec.reference, name);
    }
    std::map<std::string, int> level_index;
    for (std::size_t l = 0; l < levels.size(); ++l) level_index[levels[l]] = static_cast<int>(l);
    std::vector<int> group(static_cast<std::size_t>(n));
    for (Eigen::Index k = 0; k < n; ++k) {
      group[static_cast<std::size_t>(k)] =
          level_index.at(table.rows[keep[static_cast<std::size_t>(k)]][c]);
    }

    if (spec.role == Role::target) {
      if (spec.type != ColumnType::binary) {
        throw SchemaError("target column '" + name + "' must be binary or continuous");
      }
      ds.y.resize(n);
      for (Eigen::Index k = 0; k < n; ++k) ds.y(k) = group[static_cast<std::size_t>(k)] == 1 ? 1.0 : -1.0;
      ds.target_name = name;
      ds.target_type = ColumnType::binary;
      ds.target_levels = levels;
      continue;
    }

    // binary: one 0/1 column; categorical: one indicator per non-reference level
    ProtectedVariable pv;
    pv.name = name;
    pv.type = spec.type;
    pv.levels = levels;
    pv.group = group;
    const std::size_t width = spec.type == ColumnType::binary ? 1 : levels.size() - 1;
    auto& cols = spec.role == Role::predictor ? xcols : zcols;
    auto& meta = spec.role == Role::predictor ? ds.x_columns : ds.z_columns;
    pv.first_col = static_cast<Eigen::Index>(cols.size());
    pv.width = static_cast<Eigen::Index>(width);
    for (std::size_t l = 1; l <= width; ++l) {
      Eigen::VectorXd col(n);
      for (Eigen::Index k = 0; k < n; ++k) {
        col(k) = group[static_cast<std::size_t>(k)] == static_cast<int>(l) ? 1.0 : 0.0;
      }
      cols.push_back(col);
      const std::string enc = spec.type == ColumnType::binary ? name : name + "=" + levels[l];
      meta.push_back({enc, name, spec.type});
    }
    if (spec.role == Role::protected_attribute) ds.protected_vars.push_back(std::move(pv));
  }

  ds.x.resize(n, static_cast<Eigen::Index>(xcols.size()));
  for (std::size_t j = 0; j < xcols.size(); ++j) ds.x.col(static_cast<Eigen::Index>(j)) = xcols[j];
  ds.z.resize(n, static_cast<Eigen::Index>(zcols.size()));
  for (std::size_t j = 0; j < zcols.size(); ++j) ds.z.col(static_cast<Eigen::Index>(j)) = zcols[j];
  return ds;
}

/// Per-column affine transform; binary and indicator columns keep mean 0, scale 1.
struct StandardizationParams {
  Eigen::VectorXd x_mean, x_scale;
  Eigen::VectorXd z_mean, z_scale;
  double alpha = 1.0;
  bool z_standardized = false;  // true if any continuous protected column was rescaled

  Dataset apply(const Dataset& ds) const {
    Dataset out = ds;
    for (Eigen::Index j = 0; j < ds.px(); ++j) {
      out.x.col(j) = (ds.x.col(j).array() - x_mean(j)) / x_scale(j);
    }
    for (Eigen::Index j = 0; j < ds.r(); ++j) {
      out.z.col(j) = (ds.z.col(j).array() - z_mean(j)) / z_scale(j);
    }
    return out;
  }

  Dataset invert(const Dataset& ds) const {
    Dataset out = ds;
    for (Eigen::Index j = 0; j < ds.px(); ++j) {
      out.x.col(j) = ds.x.col(j).array() * x_scale(j) + x_mean(j);
    }
    for (Eigen::Index j = 0; j < ds.r(); ++j) {
      out.z.col(j) = ds.z.col(j).array() * z_scale(j) + z_mean(j);
    }
    return out;
  }
};

namespace detail {

inline double max_abs_entry(const Dataset& ds) {
  double m = 0.0;
  if (ds.x.size() > 0) m = std::max(m, ds.x.cwiseAbs().maxCoeff());
  if (ds.z.size() > 0) m = std::max(m, ds.z.cwiseAbs().maxCoeff());
  return m;
}

inline void fit_columns(const Eigen::MatrixXd& m, const std::vector<EncodedColumn>& meta,
                        Eigen::VectorXd& mean, Eigen::VectorXd& scale, bool& any) {
  mean = Eigen::VectorXd::Zero(m.cols());
  scale = Eigen::VectorXd::Ones(m.cols());
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    const bool continuous =
        meta.empty() || meta[static_cast<std::size_t>(j)].type == ColumnType::continuous;
    if (!continuous) continue;
    const double mu = m.col(j).mean();
    const double var = (m.col(j).array() - mu).square().mean();
    const double sd = std::sqrt(var);
    if (!(sd > 1e-12 * std::max(1.0, std::abs(mu)))) {
      const std::string name = meta.empty() ? std::to_string(j) : meta[static_cast<std::size_t>(j)].name;
      throw DegenerateColumnError("continuous column '" + name + "' has zero variance");
    }
    mean(j) = mu;
    scale(j) = sd;
    any = true;
  }
}

}  // namespace detail

/// Continuous predictor and protected columns get empirical mean 0 and
/// (population) variance 1. alpha = max(1, largest absolute standardized entry).
inline std::pair<Dataset, StandardizationParams> standardize(const Dataset& ds) {
  StandardizationParams params;
  bool any_x = false;
  detail::fit_columns(ds.x, ds.x_columns, params.x_mean, params.x_scale, any_x);
  detail::fit_columns(ds.z, ds.z_columns, params.z_mean, params.z_scale, params.z_standardized);
  Dataset out = params.apply(ds);
  params.alpha = std::max(1.0, detail::max_abs_entry(out));
  return {std::move(out), params};
}

/// Ordered list of monomials over the concatenated vector (x, z). A monomial
/// is the sorted list of variable indices it multiplies (repeats = powers);
/// indices >= px refer to z. The empty list is the constant monomial.
class FeatureMapSpec {
 public:
  FeatureMapSpec() = default;

  FeatureMapSpec(Eigen::Index px, Eigen::Index r, std::vector<std::vector<int>> monomials)
      : px_(px), r_(r), monomials_(std::move(monomials)) {
    for (auto& m : monomials_) {
      for (int v : m) {
        if (v < 0 || v >= px_ + r_) throw ShapeError("monomial variable index out of range");
      }
      std::sort(m.begin(), m.end());
    }
    std::sort(monomials_.begin(), monomials_.end());
    monomials_.erase(std::unique(monomials_.begin(), monomials_.end()), monomials_.end());
    if (monomials_.empty()) throw ShapeError("feature map needs at least one monomial");
  }

  /// [1, x_1, ..., x_px]
  static FeatureMapSpec affine(Eigen::Index px, Eigen::Index r) {
    std::vector<std::vector<int>> m{{}};
    for (int j = 0; j < px; ++j) m.push_back({j});
    return {px, r, std::move(m)};
  }

  /// [x_1, ..., x_px]
  static FeatureMapSpec linear(Eigen::Index px, Eigen::Index r) {
    std::vector<std::vector<int>> m;
    for (int j = 0; j < px; ++j) m.push_back({j});
    return {px, r, std::move(m)};
  }

  /// Every monomial of total degree <= `degree` over x (and z if requested).
  static FeatureMapSpec polynomial(Eigen::Index px, Eigen::Index r, int degree, bool include_z,
                                   bool include_constant = true) {
    const int nvars = static_cast<int>(px + (include_z ? r : 0));
    std::vector<std::vector<int>> out;
    std::vector<int> cur;
    auto rec = [&](auto&& self, int start) -> void {
      if (!cur.empty() || include_constant) out.push_back(cur);
      if (static_cast<int>(cur.size()) == degree) return;
      for (int v = start; v < nvars; ++v) {
        cur.push_back(v);
        self(self, v);
        cur.pop_back();
      }
    };
    rec(rec, 0);
    return {px, r, std::move(out)};
  }

  const std::vector<std::vector<int>>& monomials() const { return monomials_; }
  Eigen::Index p() const { return static_cast<Eigen::Index>(monomials_.size()); }
  Eigen::Index px() const { return px_; }
  Eigen::Index r() const { return r_; }

  /// Largest total degree, floored at 1.
  int rho() const {
    std::size_t deg = 1;
    for (const auto& m : monomials_) deg = std::max(deg, m.size());
    return static_cast<int>(deg);
  }

  bool uses_z() const {
    return std::any_of(monomials_.begin(), monomials_.end(), [&](const auto& m) {
      return std::any_of(m.begin(), m.end(), [&](int v) { return v >= px_; });
    });
  }

  bool operator==(const FeatureMapSpec&) const = default;

 private:
  Eigen::Index px_ = 0;
  Eigen::Index r_ = 0;
  std::vector<std::vector<int>> monomials_;
};

inline Eigen::VectorXd eval_feature_map(const FeatureMapSpec& spec, const Eigen::VectorXd& x,
                                        const Eigen::VectorXd& z) {
  if (x.size() != spec.px() || z.size() != spec.r()) {
    throw ShapeError("feature map expects x of size " + std::to_string(spec.px()) +
                     " and z of size " + std::to_string(spec.r()));
  }
  Eigen::VectorXd out(spec.p());
  for (Eigen::Index j = 0; j < spec.p(); ++j) {
    double v = 1.0;
    for (int var : spec.monomials()[static_cast<std::size_t>(j)]) {
      v *= var < spec.px() ? x(var) : z(var - spec.px());
    }
    out(j) = v;
  }
  return out;
}

/// Omega = omega(X, Z), one row per sample.
inline Eigen::MatrixXd feature_matrix(const FeatureMapSpec& spec, const Dataset& ds) {
  if (ds.px() != spec.px() || ds.r() != spec.r()) {
    throw ShapeError("feature map domain does not match dataset dimensions");
  }
  Eigen::MatrixXd omega(ds.n(), spec.p());
  for (Eigen::Index j = 0; j < spec.p(); ++j) {
    Eigen::VectorXd col = Eigen::VectorXd::Ones(ds.n());
    for (int var : spec.monomials()[static_cast<std::size_t>(j)]) {
      col.array() *= var < spec.px() ? ds.x.col(var).array() : ds.z.col(var - spec.px()).array();
    }
    omega.col(j) = col;
  }
  return omega;
}

/// delta(x, z) = b * omega(x, z) with b of shape d x p.
struct DecisionRule {
  Eigen::MatrixXd b;
  FeatureMapSpec feature_map;

  Eigen::Index d() const { return b.rows(); }

  /// Frobenius norm of b, i.e. the Euclidean norm of the flattened matrix.
  double norm() const { return b.norm(); }

  Eigen::VectorXd evaluate(const Eigen::VectorXd& x, const Eigen::VectorXd& z) const {
    return b * eval_feature_map(feature_map, x, z);
  }

  /// n x d outputs for a dataset.
  Eigen::MatrixXd outputs(const Dataset& ds) const {
    return feature_matrix(feature_map, ds) * b.transpose();
  }

  /// Scalar scores for a d = 1 rule.
  Eigen::VectorXd scores(const Dataset& ds) const {
    if (d() != 1) throw ShapeError("scores() requires a rule with d = 1");
    return outputs(ds).col(0);
  }
};

}  // namespace fairopt
