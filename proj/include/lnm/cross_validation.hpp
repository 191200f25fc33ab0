#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lnm/cohort.hpp"
#include "lnm/models.hpp"

namespace lnm {

struct CvOptions {
  std::size_t outer_folds = 10;
  std::size_t inner_folds = 5;
};

/// Stratified nested partition. Outer test sets partition the cohort; the
/// inner validation sets of fold k partition that fold's training indices.
struct CvPlan {
  std::size_t cohort_size = 0;
  std::uint64_t seed = 0;
  bool stratified = true;
  std::vector<std::vector<std::size_t>> outer_test;                     // sorted
  std::vector<std::vector<std::vector<std::size_t>>> inner_validation;  // sorted

  std::size_t outer_count() const noexcept { return outer_test.size(); }
  std::vector<std::size_t> outer_training(std::size_t fold) const;
  std::vector<std::size_t> inner_training(std::size_t fold, std::size_t inner) const;
  /// Outer fold holding `patient` as a test index.
  std::size_t fold_of(std::size_t patient) const;

  nlohmann::json to_json() const;
  static CvPlan from_json(const nlohmann::json& j);
  bool operator==(const CvPlan&) const = default;
};

/// Positives and negatives are shuffled separately and dealt round-robin, so
/// each fold's positive count is floor or ceil of n_pos / k. Throws DataError
/// when either class has fewer members than folds.
CvPlan make_cv_plan(const Cohort& cohort, std::uint64_t seed, const CvOptions& options = {});
CvPlan make_cv_plan(std::span<const int> labels, std::uint64_t seed, const CvOptions& options = {});

struct MlFoldResult {
  std::size_t fold_index = 0;
  ModelKind model_kind = ModelKind::LR;
  Hyperparameters chosen_hyperparameters;
  std::size_t chosen_grid_index = 0;
  std::vector<std::size_t> test_indices;
  std::vector<double> oof_probabilities;  // aligned with test_indices
  double inner_cv_auc = 0.0;
  double inner_cv_ap = 0.0;
  double train_prevalence = 0.0;
  std::vector<double> grid_mean_auc;  // per grid point
  std::vector<double> grid_mean_ap;
};

struct NestedCvRun {
  std::vector<MlFoldResult> folds;
  std::vector<TrainedModel> fold_models;  // refit on each outer training split
};

struct NestedCvOptions {
  unsigned threads = 1;  // outer folds run concurrently up to this many
};

/// For each outer fold: score every grid point by mean inner-validation AUC
/// (ties keep the earlier grid point), refit the winner on the whole outer
/// training split and predict the held-out fold. Per-fit seeds are
/// derive_seed(seed, {fold, seed_tag(kind), inner, grid}) for tuning and
/// derive_seed(seed, {fold, seed_tag(kind), kRefitMarker}) for the refit.
NestedCvRun run_nested_cv(const Cohort& cohort, ModelKind kind, std::span<const Hyperparameters> grid,
                          const CvPlan& plan, std::uint64_t seed, const NestedCvOptions& options = {});

inline constexpr std::uint64_t kRefitMarker = 0xFFFF;

/// One probability per patient, gathered from the folds' test predictions.
/// Throws InvariantError unless every patient is covered exactly once.
std::vector<double> out_of_fold_probabilities(std::span<const MlFoldResult> folds, std::size_t cohort_size);

/// Exactly-once coverage and disjointness of the outer test sets, plus inner
/// containment. Throws InvariantError with details on failure.
void check_plan(const CvPlan& plan);

nlohmann::json to_json(const MlFoldResult& r);
MlFoldResult fold_result_from_json(const nlohmann::json& j);

/// Persisted nested-CV output keyed by (cohort hash, model kind, seed).
struct CvRunFile {
  std::string cohort_hash;
  ModelKind model_kind = ModelKind::LR;
  std::uint64_t seed = 0;
  CvPlan plan;
  NestedCvRun run;
};

void save_cv_run(const CvRunFile& file, const std::filesystem::path& path);
CvRunFile load_cv_run(const std::filesystem::path& path);
/// Loads the file only when it exists and matches the key.
std::optional<CvRunFile> load_cv_run_if_matching(const std::filesystem::path& path,
                                                 const std::string& cohort_hash, ModelKind kind,
                                                 std::uint64_t seed);

}  // namespace lnm
