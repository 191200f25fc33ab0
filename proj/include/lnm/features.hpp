#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "lnm/cohort.hpp"

namespace lnm {

struct ColumnSpec {
  enum class Encoding { StandardizedContinuous, OneHotLevel };
  std::string name;
  Encoding encoding = Encoding::StandardizedContinuous;
  std::size_t source = 0;  // continuous feature index, or categorical feature index
  std::uint8_t level = 0;  // one-hot level (OneHotLevel only)

  bool operator==(const ColumnSpec&) const = default;
};

struct FeatureMatrix {
  Eigen::MatrixXd rows;  // one row per patient
  std::vector<ColumnSpec> columns;
};

/// n x 26 numeric view of structured features: raw continuous values followed
/// by categorical level indices. Missing values are NaN.
Eigen::MatrixXd raw_features(const Cohort& cohort);

/// Standardization, imputation and one-hot parameters fit on training rows
/// only and then applied unchanged to any other rows.
///
/// Binary categoricals keep a single indicator column (the reference level is
/// dropped); multi-level categoricals get one column per level of the fixed
/// domain, so column order never depends on which levels a split happens to
/// contain. Continuous columns are z-scored with the population SD; a
/// zero-variance column encodes as constant 0 and records a warning.
class Preprocessor {
 public:
  static Preprocessor fit(const Eigen::MatrixXd& raw, std::span<const std::size_t> rows);

  FeatureMatrix transform(const Eigen::MatrixXd& raw, std::span<const std::size_t> rows) const;
  FeatureMatrix transform(const Eigen::MatrixXd& raw) const;

  const std::vector<ColumnSpec>& columns() const noexcept { return columns_; }
  std::size_t width() const noexcept { return columns_.size(); }
  double mean(std::size_t continuous_index) const { return means_[continuous_index]; }
  double sd(std::size_t continuous_index) const { return sds_[continuous_index]; }
  std::uint8_t mode(std::size_t categorical_index) const { return modes_[categorical_index]; }
  const std::vector<std::string>& warnings() const noexcept { return warnings_; }

  nlohmann::json to_json() const;
  static Preprocessor from_json(const nlohmann::json& j);

  bool operator==(const Preprocessor&) const = default;

 private:
  std::vector<double> means_;  // also the imputation value for missing entries
  std::vector<double> sds_;    // 0 marks a zero-variance column
  std::vector<std::uint8_t> modes_;
  std::vector<ColumnSpec> columns_;
  std::vector<std::string> warnings_;
};

std::vector<ColumnSpec> encoded_columns();

/// Fits preprocessing on a labeled training cohort and encodes it.
std::pair<FeatureMatrix, Preprocessor> preprocess_fit(const Cohort& train);

}  // namespace lnm
