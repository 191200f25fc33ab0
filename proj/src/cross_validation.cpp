#include "lnm/cross_validation.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <fstream>
#include <mutex>
#include <numeric>
#include <random>
#include <thread>

#include "lnm/error.hpp"
#include "lnm/features.hpp"
#include "lnm/metrics.hpp"
#include "lnm/seeding.hpp"

namespace lnm {
namespace {

constexpr std::uint64_t kInnerPlanTag = 0x494E4E52;  // "INNR"

// Stratified assignment of `members` (given with their labels) into k folds.
std::vector<std::vector<std::size_t>> stratified_folds(std::span<const std::size_t> members,
                                                       std::span<const int> labels, std::size_t k,
                                                       std::uint64_t seed) {
  std::vector<std::size_t> pos, neg;
  for (std::size_t m : members) (labels[m] ? pos : neg).push_back(m);
  if (pos.size() < k || neg.size() < k) {
    throw DataError("cannot stratify into " + std::to_string(k) + " folds: " + std::to_string(pos.size()) +
                    " positives and " + std::to_string(neg.size()) + " negatives");
  }
  std::mt19937_64 rng(seed);
  std::shuffle(pos.begin(), pos.end(), rng);
  std::shuffle(neg.begin(), neg.end(), rng);
  std::vector<std::vector<std::size_t>> folds(k);
  std::size_t slot = 0;
  for (std::size_t m : pos) folds[slot++ % k].push_back(m);
  for (std::size_t m : neg) folds[slot++ % k].push_back(m);
  for (auto& f : folds) std::sort(f.begin(), f.end());
  return folds;
}

std::vector<std::size_t> complement(std::size_t n, const std::vector<std::size_t>& sorted_excluded) {
  std::vector<std::size_t> out;
  out.reserve(n - sorted_excluded.size());
  std::size_t e = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (e < sorted_excluded.size() && sorted_excluded[e] == i) {
      ++e;
    } else {
      out.push_back(i);
    }
  }
  return out;
}

std::vector<int> gather(std::span<const int> labels, std::span<const std::size_t> rows) {
  std::vector<int> out(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) out[i] = labels[rows[i]];
  return out;
}

struct FoldOutput {
  MlFoldResult result;
  TrainedModel model;
};

FoldOutput run_fold(const Eigen::MatrixXd& raw, std::span<const int> labels, ModelKind kind,
                    std::span<const Hyperparameters> grid, const CvPlan& plan, std::size_t fold,
                    std::uint64_t seed) {
  const std::size_t inner_count = plan.inner_validation[fold].size();
  MlFoldResult r;
  r.fold_index = fold;
  r.model_kind = kind;
  r.grid_mean_auc.assign(grid.size(), 0.0);
  r.grid_mean_ap.assign(grid.size(), 0.0);

  for (std::size_t g = 0; g < grid.size(); ++g) {
    double auc_sum = 0.0, ap_sum = 0.0;
    for (std::size_t inner = 0; inner < inner_count; ++inner) {
      const auto train_rows = plan.inner_training(fold, inner);
      const auto& val_rows = plan.inner_validation[fold][inner];
      const auto y_train = gather(labels, train_rows);
      const auto y_val = gather(labels, val_rows);
      const auto model = train_model(raw, train_rows, y_train, grid[g],
                                     derive_seed(seed, {fold, seed_tag(kind), inner, g}));
      const auto p = predict_proba(model, raw, val_rows);
      auc_sum += roc_auc(p, y_val);
      ap_sum += average_precision(p, y_val);
    }
    r.grid_mean_auc[g] = auc_sum / static_cast<double>(inner_count);
    r.grid_mean_ap[g] = ap_sum / static_cast<double>(inner_count);
  }

  std::size_t best = 0;
  for (std::size_t g = 1; g < grid.size(); ++g) {
    if (r.grid_mean_auc[g] > r.grid_mean_auc[best]) best = g;
  }
  r.chosen_grid_index = best;
  r.chosen_hyperparameters = grid[best];
  r.inner_cv_auc = r.grid_mean_auc[best];
  r.inner_cv_ap = r.grid_mean_ap[best];

  const auto train_rows = plan.outer_training(fold);
  const auto y_train = gather(labels, train_rows);
  r.train_prevalence = static_cast<double>(std::accumulate(y_train.begin(), y_train.end(), 0)) /
                       static_cast<double>(y_train.size());
  TrainedModel model = train_model(raw, train_rows, y_train, grid[best],
                                   derive_seed(seed, {fold, seed_tag(kind), kRefitMarker}));
  r.test_indices = plan.outer_test[fold];
  r.oof_probabilities = predict_proba(model, raw, r.test_indices);
  return {std::move(r), std::move(model)};
}

}  // namespace

std::vector<std::size_t> CvPlan::outer_training(std::size_t fold) const {
  return complement(cohort_size, outer_test.at(fold));
}

std::vector<std::size_t> CvPlan::inner_training(std::size_t fold, std::size_t inner) const {
  const auto outer = outer_training(fold);
  const auto& held = inner_validation.at(fold).at(inner);
  std::vector<std::size_t> out;
  out.reserve(outer.size() - held.size());
  std::set_difference(outer.begin(), outer.end(), held.begin(), held.end(), std::back_inserter(out));
  return out;
}

std::size_t CvPlan::fold_of(std::size_t patient) const {
  for (std::size_t f = 0; f < outer_test.size(); ++f) {
    if (std::binary_search(outer_test[f].begin(), outer_test[f].end(), patient)) return f;
  }
  throw InvariantError("patient index " + std::to_string(patient) + " is in no outer test fold");
}

nlohmann::json CvPlan::to_json() const {
  return {{"cohort_size", cohort_size},
          {"seed", seed},
          {"stratified", stratified},
          {"outer_test", outer_test},
          {"inner_validation", inner_validation}};
}

CvPlan CvPlan::from_json(const nlohmann::json& j) {
  CvPlan p;
  try {
    p.cohort_size = j.at("cohort_size").get<std::size_t>();
    p.seed = j.at("seed").get<std::uint64_t>();
    p.stratified = j.at("stratified").get<bool>();
    p.outer_test = j.at("outer_test").get<std::vector<std::vector<std::size_t>>>();
    p.inner_validation = j.at("inner_validation").get<std::vector<std::vector<std::vector<std::size_t>>>>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed CV plan: ") + e.what());
  }
  check_plan(p);
  return p;
}

CvPlan make_cv_plan(std::span<const int> labels, std::uint64_t seed, const CvOptions& options) {
  if (options.outer_folds < 2 || options.inner_folds < 2) throw ConfigError("fold counts must be at least 2");
  CvPlan plan;
  plan.cohort_size = labels.size();
  plan.seed = seed;
  std::vector<std::size_t> all(labels.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  plan.outer_test = stratified_folds(all, labels, options.outer_folds, seed);
  for (std::size_t f = 0; f < plan.outer_test.size(); ++f) {
    const auto train = plan.outer_training(f);
    plan.inner_validation.push_back(
        stratified_folds(train, labels, options.inner_folds, derive_seed(seed, {kInnerPlanTag, f})));
  }
  return plan;
}

CvPlan make_cv_plan(const Cohort& cohort, std::uint64_t seed, const CvOptions& options) {
  const auto labels = cohort.labels();
  return make_cv_plan(labels, seed, options);
}

void check_plan(const CvPlan& plan) {
  const std::size_t n = plan.cohort_size;
  std::vector<int> seen(n, 0);
  for (std::size_t f = 0; f < plan.outer_test.size(); ++f) {
    for (std::size_t i : plan.outer_test[f]) {
      if (i >= n) throw InvariantError("outer fold " + std::to_string(f) + " holds out-of-range index " + std::to_string(i));
      if (++seen[i] > 1) throw InvariantError("patient index " + std::to_string(i) + " appears in more than one outer test fold");
    }
    if (!std::is_sorted(plan.outer_test[f].begin(), plan.outer_test[f].end())) {
      throw InvariantError("outer fold " + std::to_string(f) + " is not sorted");
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (seen[i] == 0) throw InvariantError("patient index " + std::to_string(i) + " is in no outer test fold");
  }
  if (plan.inner_validation.size() != plan.outer_test.size()) {
    throw InvariantError("inner plan count does not match outer fold count");
  }
  for (std::size_t f = 0; f < plan.outer_test.size(); ++f) {
    const auto train = plan.outer_training(f);
    std::vector<int> inner_seen(n, 0);
    for (const auto& v : plan.inner_validation[f]) {
      for (std::size_t i : v) {
        if (!std::binary_search(train.begin(), train.end(), i)) {
          throw InvariantError("inner validation index " + std::to_string(i) + " of fold " + std::to_string(f) +
                               " is outside its outer training split");
        }
        if (++inner_seen[i] > 1) throw InvariantError("inner validation folds of fold " + std::to_string(f) + " overlap");
      }
    }
    for (std::size_t i : train) {
      if (inner_seen[i] == 0) {
        throw InvariantError("training index " + std::to_string(i) + " of fold " + std::to_string(f) +
                             " is in no inner validation fold");
      }
    }
  }
}

NestedCvRun run_nested_cv(const Cohort& cohort, ModelKind kind, std::span<const Hyperparameters> grid,
                          const CvPlan& plan, std::uint64_t seed, const NestedCvOptions& options) {
  if (grid.empty()) throw ConfigError("hyperparameter grid is empty");
  for (const auto& h : grid) {
    if (kind_of(h) != kind) throw ConfigError("grid entry does not match model kind " + std::string(to_string(kind)));
  }
  if (plan.cohort_size != cohort.size()) throw InvariantError("CV plan size does not match cohort size");
  check_plan(plan);

  const Eigen::MatrixXd raw = raw_features(cohort);
  const auto labels = cohort.labels();
  const std::size_t folds = plan.outer_count();

  std::vector<std::optional<FoldOutput>> outputs(folds);
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t f = next.fetch_add(1); f < folds; f = next.fetch_add(1)) {
      try {
        outputs[f] = run_fold(raw, labels, kind, grid, plan, f, seed);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const unsigned threads = std::max(1u, std::min<unsigned>(options.threads, static_cast<unsigned>(folds)));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);

  NestedCvRun run;
  for (auto& o : outputs) {
    run.folds.push_back(std::move(o->result));
    run.fold_models.push_back(std::move(o->model));
  }
  return run;
}

std::vector<double> out_of_fold_probabilities(std::span<const MlFoldResult> folds, std::size_t cohort_size) {
  std::vector<double> out(cohort_size, 0.0);
  std::vector<int> seen(cohort_size, 0);
  for (const auto& f : folds) {
    if (f.test_indices.size() != f.oof_probabilities.size()) {
      throw InvariantError("fold " + std::to_string(f.fold_index) + " has mismatched test indices and probabilities");
    }
    for (std::size_t k = 0; k < f.test_indices.size(); ++k) {
      const std::size_t i = f.test_indices[k];
      if (i >= cohort_size) throw InvariantError("test index " + std::to_string(i) + " is out of range");
      if (++seen[i] > 1) throw InvariantError("patient index " + std::to_string(i) + " predicted more than once");
      out[i] = f.oof_probabilities[k];
    }
  }
  for (std::size_t i = 0; i < cohort_size; ++i) {
    if (seen[i] == 0) throw InvariantError("patient index " + std::to_string(i) + " has no out-of-fold prediction");
  }
  return out;
}

nlohmann::json to_json(const MlFoldResult& r) {
  return {{"fold_index", r.fold_index},
          {"model_kind", to_string(r.model_kind)},
          {"chosen_hyperparameters", to_json(r.chosen_hyperparameters)},
          {"chosen_grid_index", r.chosen_grid_index},
          {"test_indices", r.test_indices},
          {"oof_probabilities", r.oof_probabilities},
          {"inner_cv_auc", r.inner_cv_auc},
          {"inner_cv_ap", r.inner_cv_ap},
          {"train_prevalence", r.train_prevalence},
          {"grid_mean_auc", r.grid_mean_auc},
          {"grid_mean_ap", r.grid_mean_ap}};
}

MlFoldResult fold_result_from_json(const nlohmann::json& j) {
  MlFoldResult r;
  try {
    r.fold_index = j.at("fold_index").get<std::size_t>();
    r.model_kind = parse_model_kind(j.at("model_kind").get<std::string>());
    r.chosen_hyperparameters = hyperparameters_from_json(j.at("chosen_hyperparameters"));
    r.chosen_grid_index = j.at("chosen_grid_index").get<std::size_t>();
    r.test_indices = j.at("test_indices").get<std::vector<std::size_t>>();
    r.oof_probabilities = j.at("oof_probabilities").get<std::vector<double>>();
    r.inner_cv_auc = j.at("inner_cv_auc").get<double>();
    r.inner_cv_ap = j.at("inner_cv_ap").get<double>();
    r.train_prevalence = j.at("train_prevalence").get<double>();
    r.grid_mean_auc = j.at("grid_mean_auc").get<std::vector<double>>();
    r.grid_mean_ap = j.at("grid_mean_ap").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed fold result: ") + e.what());
  }
  return r;
}

void save_cv_run(const CvRunFile& file, const std::filesystem::path& path) {
  nlohmann::json folds = nlohmann::json::array();
  for (const auto& f : file.run.folds) folds.push_back(to_json(f));
  nlohmann::json models = nlohmann::json::array();
  for (const auto& m : file.run.fold_models) models.push_back(to_json(m));
  const nlohmann::json j = {{"format", "lnm-cv-run/1"},
                            {"cohort_hash", file.cohort_hash},
                            {"model_kind", to_string(file.model_kind)},
                            {"seed", file.seed},
                            {"plan", file.plan.to_json()},
                            {"folds", folds},
                            {"fold_models", models}};
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw DataError("cannot write " + tmp.string());
    out << j.dump() << '\n';
    if (!out) throw DataError("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

CvRunFile load_cv_run(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed CV run file " + path.string() + ": " + e.what());
  }
  CvRunFile file;
  try {
    if (j.at("format").get<std::string>() != "lnm-cv-run/1") throw DataError("unsupported CV run format in " + path.string());
    file.cohort_hash = j.at("cohort_hash").get<std::string>();
    file.model_kind = parse_model_kind(j.at("model_kind").get<std::string>());
    file.seed = j.at("seed").get<std::uint64_t>();
    file.plan = CvPlan::from_json(j.at("plan"));
    for (const auto& f : j.at("folds")) file.run.folds.push_back(fold_result_from_json(f));
    for (const auto& m : j.at("fold_models")) file.run.fold_models.push_back(trained_model_from_json(m));
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed CV run file " + path.string() + ": " + e.what());
  }
  return file;
}

std::optional<CvRunFile> load_cv_run_if_matching(const std::filesystem::path& path, const std::string& cohort_hash,
                                                 ModelKind kind, std::uint64_t seed) {
  if (!std::filesystem::exists(path)) return std::nullopt;
  CvRunFile file;
  try {
    file = load_cv_run(path);
  } catch (const DataError&) {
    return std::nullopt;
  }
  if (file.cohort_hash != cohort_hash || file.model_kind != kind || file.seed != seed) return std::nullopt;
  return file;
}

}  // namespace lnm
