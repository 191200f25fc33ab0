#include "lnm/features.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "lnm/error.hpp"

namespace lnm {

std::vector<ColumnSpec> encoded_columns() {
  std::vector<ColumnSpec> cols;
  for (ContinuousFeature f : kAllContinuous) {
    cols.push_back({std::string(info(f).column), ColumnSpec::Encoding::StandardizedContinuous,
                    static_cast<std::size_t>(f), 0});
  }
  for (CategoricalFeature f : kAllCategorical) {
    const auto& levels = info(f).levels;
    const std::size_t kept = levels.size() == 2 ? 1 : levels.size();
    for (std::size_t l = 0; l < kept; ++l) {
      cols.push_back({std::string(info(f).column) + "=" + std::string(levels[l]),
                      ColumnSpec::Encoding::OneHotLevel, static_cast<std::size_t>(f),
                      static_cast<std::uint8_t>(l)});
    }
  }
  return cols;
}

Eigen::MatrixXd raw_features(const Cohort& cohort) {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  Eigen::MatrixXd raw(static_cast<Eigen::Index>(cohort.size()), static_cast<Eigen::Index>(kFeatureCount));
  for (std::size_t i = 0; i < cohort.size(); ++i) {
    const auto& r = cohort[i];
    const auto row = static_cast<Eigen::Index>(i);
    for (std::size_t c = 0; c < kContinuousCount; ++c) {
      raw(row, static_cast<Eigen::Index>(c)) = r.continuous[c].value_or(nan);
    }
    for (std::size_t c = 0; c < kCategoricalCount; ++c) {
      const auto lvl = r.categorical[c];
      raw(row, static_cast<Eigen::Index>(kContinuousCount + c)) = lvl ? static_cast<double>(*lvl) : nan;
    }
  }
  return raw;
}

Preprocessor Preprocessor::fit(const Eigen::MatrixXd& raw, std::span<const std::size_t> rows) {
  if (raw.cols() != static_cast<Eigen::Index>(kFeatureCount)) {
    throw DataError("raw feature table has " + std::to_string(raw.cols()) + " columns, expected " +
                    std::to_string(kFeatureCount));
  }
  if (rows.empty()) throw DataError("cannot fit preprocessing on zero rows");
  Preprocessor p;
  p.columns_ = encoded_columns();
  p.means_.assign(kContinuousCount, 0.0);
  p.sds_.assign(kContinuousCount, 0.0);
  p.modes_.assign(kCategoricalCount, 0);

  for (std::size_t c = 0; c < kContinuousCount; ++c) {
    const auto col = static_cast<Eigen::Index>(c);
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t i : rows) {
      const double v = raw(static_cast<Eigen::Index>(i), col);
      if (std::isnan(v)) continue;
      sum += v;
      ++count;
    }
    if (count == 0) {
      p.warnings_.push_back(std::string(info(kAllContinuous[c]).column) +
                            ": no observed values in training split");
      continue;
    }
    const double mean = sum / static_cast<double>(count);
    double ss = 0.0;
    for (std::size_t i : rows) {
      const double v = raw(static_cast<Eigen::Index>(i), col);
      if (!std::isnan(v)) ss += (v - mean) * (v - mean);
    }
    p.means_[c] = mean;
    p.sds_[c] = std::sqrt(ss / static_cast<double>(count));
    if (!(p.sds_[c] > 1e-12 * std::max(1.0, std::abs(mean)))) {
      p.sds_[c] = 0.0;
      p.warnings_.push_back(std::string(info(kAllContinuous[c]).column) +
                            ": zero variance in training split, encoded as constant 0");
    }
  }
  for (std::size_t c = 0; c < kCategoricalCount; ++c) {
    const auto col = static_cast<Eigen::Index>(kContinuousCount + c);
    std::vector<std::size_t> counts(info(kAllCategorical[c]).levels.size(), 0);
    for (std::size_t i : rows) {
      const double v = raw(static_cast<Eigen::Index>(i), col);
      if (!std::isnan(v)) counts[static_cast<std::size_t>(v)] += 1;
    }
    // Ties resolve to the lowest level index.
    p.modes_[c] = static_cast<std::uint8_t>(
        std::max_element(counts.begin(), counts.end()) - counts.begin());
  }
  return p;
}

FeatureMatrix Preprocessor::transform(const Eigen::MatrixXd& raw,
                                      std::span<const std::size_t> rows) const {
  if (raw.cols() != static_cast<Eigen::Index>(kFeatureCount)) {
    throw DataError("schema mismatch: raw feature table has " + std::to_string(raw.cols()) +
                    " columns, expected " + std::to_string(kFeatureCount));
  }
  FeatureMatrix out;
  out.columns = columns_;
  out.rows.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(columns_.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto src = static_cast<Eigen::Index>(rows[r]);
    const auto dst = static_cast<Eigen::Index>(r);
    for (std::size_t c = 0; c < columns_.size(); ++c) {
      const ColumnSpec& spec = columns_[c];
      double value = 0.0;
      if (spec.encoding == ColumnSpec::Encoding::StandardizedContinuous) {
        double v = raw(src, static_cast<Eigen::Index>(spec.source));
        if (std::isnan(v)) v = means_[spec.source];
        value = sds_[spec.source] > 0.0 ? (v - means_[spec.source]) / sds_[spec.source] : 0.0;
      } else {
        double v = raw(src, static_cast<Eigen::Index>(kContinuousCount + spec.source));
        const auto lvl = std::isnan(v) ? modes_[spec.source] : static_cast<std::uint8_t>(v);
        value = lvl == spec.level ? 1.0 : 0.0;
      }
      out.rows(dst, static_cast<Eigen::Index>(c)) = value;
    }
  }
  return out;
}

FeatureMatrix Preprocessor::transform(const Eigen::MatrixXd& raw) const {
  std::vector<std::size_t> all(static_cast<std::size_t>(raw.rows()));
  std::iota(all.begin(), all.end(), std::size_t{0});
  return transform(raw, all);
}

nlohmann::json Preprocessor::to_json() const {
  nlohmann::json cols = nlohmann::json::array();
  for (const auto& c : columns_) cols.push_back(c.name);
  return {{"means", means_}, {"sds", sds_}, {"modes", modes_}, {"columns", cols},
          {"warnings", warnings_}};
}

Preprocessor Preprocessor::from_json(const nlohmann::json& j) {
  Preprocessor p;
  p.means_ = j.at("means").get<std::vector<double>>();
  p.sds_ = j.at("sds").get<std::vector<double>>();
  p.modes_ = j.at("modes").get<std::vector<std::uint8_t>>();
  p.warnings_ = j.at("warnings").get<std::vector<std::string>>();
  p.columns_ = encoded_columns();
  const auto names = j.at("columns").get<std::vector<std::string>>();
  if (names.size() != p.columns_.size() || p.means_.size() != kContinuousCount ||
      p.sds_.size() != kContinuousCount || p.modes_.size() != kCategoricalCount) {
    throw DataError("serialized preprocessing does not match the feature schema");
  }
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] != p.columns_[i].name) {
      throw DataError("serialized preprocessing column '" + names[i] + "' does not match '" +
                      p.columns_[i].name + "'");
    }
  }
  return p;
}

std::pair<FeatureMatrix, Preprocessor> preprocess_fit(const Cohort& train) {
  const Eigen::MatrixXd raw = raw_features(train);
  std::vector<std::size_t> all(train.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  Preprocessor p = Preprocessor::fit(raw, all);
  FeatureMatrix X = p.transform(raw, all);
  return {std::move(X), std::move(p)};
}

}  // namespace lnm
