#pragma once

#include <atomic>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "lnm/cohort.hpp"
#include "lnm/features.hpp"
#include "lnm/forest.hpp"
#include "lnm/logistic.hpp"
#include "lnm/svm.hpp"

namespace lnm {

enum class ModelKind { LR, RF, SVM };

std::string_view to_string(ModelKind kind);       // "lr", "rf", "svm"
std::string_view display_name(ModelKind kind);    // "LR", "RF", "SVM"
std::string_view long_name(ModelKind kind);       // "logistic regression", ...
ModelKind parse_model_kind(std::string_view text);
/// Tag used in seed derivation paths.
std::uint64_t seed_tag(ModelKind kind);

using Hyperparameters = std::variant<LrParams, RfParams, SvmParams>;

ModelKind kind_of(const Hyperparameters& h);
std::string describe(const Hyperparameters& h);
/// Throws ConfigError when a value is out of range for `feature_count` columns.
void validate(const Hyperparameters& h, std::size_t feature_count);
nlohmann::json to_json(const Hyperparameters& h);
Hyperparameters hyperparameters_from_json(const nlohmann::json& j);

/// Fixed tuning grids; `feature_count` resolves the "1/p" gamma entry.
std::vector<Hyperparameters> default_grid(ModelKind kind, std::size_t feature_count);

/// Fitted classifier together with the preprocessing it was trained under.
/// Immutable after construction.
struct TrainedModel {
  Hyperparameters hyperparameters;
  std::uint64_t seed = 0;
  Preprocessor preprocessing;
  std::variant<LogisticModel, RandomForest, SvmModel> fitted;
  bool converged = true;

  ModelKind kind() const { return kind_of(hyperparameters); }
};

LogisticModel fit_lr(const FeatureMatrix& X, std::span<const int> y, const Hyperparameters& h);
RandomForest fit_rf(const FeatureMatrix& X, std::span<const int> y, const Hyperparameters& h,
                    std::uint64_t seed);
SvmModel fit_svm(const FeatureMatrix& X, std::span<const int> y, const Hyperparameters& h,
                 std::uint64_t seed);

/// Fits preprocessing on `rows` of `raw`, then the model on the encoded rows.
TrainedModel train_model(const Eigen::MatrixXd& raw, std::span<const std::size_t> rows,
                         std::span<const int> labels, const Hyperparameters& h, std::uint64_t seed);
TrainedModel train_model(const Cohort& train, const Hyperparameters& h, std::uint64_t seed);

/// Probabilities in [0,1] for the chosen rows, using the bound preprocessing.
std::vector<double> predict_proba(const TrainedModel& m, const Eigen::MatrixXd& raw,
                                  std::span<const std::size_t> rows);
std::vector<double> predict_proba(const TrainedModel& m, const Cohort& records);
double predict_encoded(const TrainedModel& m, const Eigen::Ref<const Eigen::RowVectorXd>& x);

nlohmann::json to_json(const TrainedModel& m);
TrainedModel trained_model_from_json(const nlohmann::json& j);

/// Number of train_model calls since process start (resume accounting).
std::uint64_t model_fit_count();

}  // namespace lnm
