#include "lnm/models.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "lnm/error.hpp"

namespace lnm {
namespace {

std::atomic<std::uint64_t> g_fit_count{0};

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

nlohmann::json matrix_to_json(const Eigen::MatrixXd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    std::vector<double> row(static_cast<std::size_t>(m.cols()));
    for (Eigen::Index c = 0; c < m.cols(); ++c) row[static_cast<std::size_t>(c)] = m(r, c);
    rows.push_back(row);
  }
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", rows}};
}

Eigen::MatrixXd matrix_from_json(const nlohmann::json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  Eigen::MatrixXd m(rows, cols);
  const auto& data = j.at("data");
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      m(r, c) = data.at(static_cast<std::size_t>(r)).at(static_cast<std::size_t>(c)).get<double>();
    }
  }
  return m;
}

std::vector<double> to_vector(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

Eigen::VectorXd from_vector(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

std::string_view to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::LR: return "lr";
    case ModelKind::RF: return "rf";
    case ModelKind::SVM: return "svm";
  }
  return "?";
}

std::string_view display_name(ModelKind kind) {
  switch (kind) {
    case ModelKind::LR: return "LR";
    case ModelKind::RF: return "RF";
    case ModelKind::SVM: return "SVM";
  }
  return "?";
}

std::string_view long_name(ModelKind kind) {
  switch (kind) {
    case ModelKind::LR: return "logistic regression";
    case ModelKind::RF: return "random forest";
    case ModelKind::SVM: return "support vector machine";
  }
  return "?";
}

ModelKind parse_model_kind(std::string_view text) {
  if (text == "lr" || text == "LR") return ModelKind::LR;
  if (text == "rf" || text == "RF") return ModelKind::RF;
  if (text == "svm" || text == "SVM") return ModelKind::SVM;
  throw ConfigError("unknown model kind '" + std::string(text) + "' (expected lr, rf or svm)");
}

std::uint64_t seed_tag(ModelKind kind) { return static_cast<std::uint64_t>(kind) + 1; }

ModelKind kind_of(const Hyperparameters& h) {
  return std::visit(Overloaded{[](const LrParams&) { return ModelKind::LR; },
                               [](const RfParams&) { return ModelKind::RF; },
                               [](const SvmParams&) { return ModelKind::SVM; }},
                    h);
}

std::string describe(const Hyperparameters& h) {
  std::ostringstream out;
  std::visit(Overloaded{
                 [&](const LrParams& p) { out << "LR(l2=" << p.l2_strength << ")"; },
                 [&](const RfParams& p) {
                   out << "RF(trees=" << p.tree_count << ", depth="
                       << (p.max_depth == 0 ? std::string("unlimited") : std::to_string(p.max_depth))
                       << ", min_leaf=" << p.min_leaf << ", mtry="
                       << (p.feature_subset_size == 0 ? std::string("sqrt")
                                                      : std::to_string(p.feature_subset_size))
                       << (p.bootstrap ? "" : ", no-bootstrap") << ")";
                 },
                 [&](const SvmParams& p) {
                   out << "SVM(C=" << p.box_constraint << ", gamma="
                       << (p.rbf_gamma == 0.0 ? std::string("1/p") : std::to_string(p.rbf_gamma))
                       << ")";
                 }},
             h);
  return out.str();
}

void validate(const Hyperparameters& h, std::size_t feature_count) {
  std::visit(Overloaded{
                 [](const LrParams& p) {
                   if (!(p.l2_strength > 0.0)) throw ConfigError("LR l2_strength must be positive");
                 },
                 [&](const RfParams& p) {
                   if (p.tree_count < 1) throw ConfigError("RF tree_count must be >= 1");
                   if (p.min_leaf < 1) throw ConfigError("RF min_leaf must be >= 1");
                   if (p.max_depth < 0) throw ConfigError("RF max_depth must be >= 0");
                   if (p.feature_subset_size < 0 ||
                       static_cast<std::size_t>(resolved_feature_subset(p, feature_count)) > feature_count) {
                     throw ConfigError("RF feature_subset_size must lie in [1, feature count]");
                   }
                 },
                 [](const SvmParams& p) {
                   if (!(p.box_constraint > 0.0)) throw ConfigError("SVM box_constraint must be positive");
                   if (p.rbf_gamma < 0.0) throw ConfigError("SVM rbf_gamma must be positive (0 = 1/p)");
                 }},
             h);
}

nlohmann::json to_json(const Hyperparameters& h) {
  return std::visit(
      Overloaded{[](const LrParams& p) -> nlohmann::json {
                   return {{"kind", "lr"}, {"l2_strength", p.l2_strength}};
                 },
                 [](const RfParams& p) -> nlohmann::json {
                   return {{"kind", "rf"},
                           {"tree_count", p.tree_count},
                           {"max_depth", p.max_depth},
                           {"min_leaf", p.min_leaf},
                           {"feature_subset_size", p.feature_subset_size},
                           {"bootstrap", p.bootstrap}};
                 },
                 [](const SvmParams& p) -> nlohmann::json {
                   return {{"kind", "svm"}, {"box_constraint", p.box_constraint}, {"rbf_gamma", p.rbf_gamma}};
                 }},
      h);
}

Hyperparameters hyperparameters_from_json(const nlohmann::json& j) {
  switch (parse_model_kind(j.at("kind").get<std::string>())) {
    case ModelKind::LR:
      return LrParams{j.at("l2_strength").get<double>()};
    case ModelKind::RF:
      return RfParams{j.at("tree_count").get<int>(), j.at("max_depth").get<int>(),
                      j.at("min_leaf").get<int>(), j.at("feature_subset_size").get<int>(),
                      j.value("bootstrap", true)};
    case ModelKind::SVM:
      return SvmParams{j.at("box_constraint").get<double>(), j.at("rbf_gamma").get<double>()};
  }
  throw ConfigError("unreachable model kind");
}

std::vector<Hyperparameters> default_grid(ModelKind kind, std::size_t feature_count) {
  std::vector<Hyperparameters> grid;
  switch (kind) {
    case ModelKind::LR:
      for (double l2 : {0.01, 0.1, 1.0, 10.0}) grid.emplace_back(LrParams{l2});
      break;
    case ModelKind::RF: {
      RfParams base;
      base.feature_subset_size = resolved_feature_subset(base, feature_count);
      for (int trees : {100, 300}) {
        for (int depth : {4, 8, 0}) {
          for (int leaf : {1, 5}) {
            RfParams p = base;
            p.tree_count = trees;
            p.max_depth = depth;
            p.min_leaf = leaf;
            grid.emplace_back(p);
          }
        }
      }
      break;
    }
    case ModelKind::SVM:
      for (double C : {0.1, 1.0, 10.0}) {
        for (double gamma : {1.0 / static_cast<double>(feature_count), 0.1, 0.01}) {
          grid.emplace_back(SvmParams{C, gamma});
        }
      }
      break;
  }
  return grid;
}

LogisticModel fit_lr(const FeatureMatrix& X, std::span<const int> y, const Hyperparameters& h) {
  const auto* p = std::get_if<LrParams>(&h);
  if (!p) throw ConfigError("fit_lr requires LR hyperparameters");
  return fit_logistic(X.rows, y, *p);
}

RandomForest fit_rf(const FeatureMatrix& X, std::span<const int> y, const Hyperparameters& h,
                    std::uint64_t seed) {
  const auto* p = std::get_if<RfParams>(&h);
  if (!p) throw ConfigError("fit_rf requires RF hyperparameters");
  return fit_forest(X.rows, y, *p, seed);
}

SvmModel fit_svm(const FeatureMatrix& X, std::span<const int> y, const Hyperparameters& h,
                 std::uint64_t seed) {
  const auto* p = std::get_if<SvmParams>(&h);
  if (!p) throw ConfigError("fit_svm requires SVM hyperparameters");
  return fit_svm(X.rows, y, *p, seed);
}

TrainedModel train_model(const Eigen::MatrixXd& raw, std::span<const std::size_t> rows,
                         std::span<const int> labels, const Hyperparameters& h, std::uint64_t seed) {
  if (labels.size() != rows.size()) throw DataError("train_model: labels and rows differ in length");
  TrainedModel m{h, seed, Preprocessor::fit(raw, rows), LogisticModel{}, true};
  validate(h, m.preprocessing.width());
  const FeatureMatrix X = m.preprocessing.transform(raw, rows);
  g_fit_count.fetch_add(1, std::memory_order_relaxed);
  switch (kind_of(h)) {
    case ModelKind::LR: {
      auto lr = fit_lr(X, labels, h);
      m.converged = lr.converged;
      m.fitted = std::move(lr);
      break;
    }
    case ModelKind::RF:
      m.fitted = fit_rf(X, labels, h, seed);
      break;
    case ModelKind::SVM: {
      auto svm = fit_svm(X, labels, h, seed);
      m.converged = svm.converged;
      m.fitted = std::move(svm);
      break;
    }
  }
  return m;
}

TrainedModel train_model(const Cohort& train, const Hyperparameters& h, std::uint64_t seed) {
  const Eigen::MatrixXd raw = raw_features(train);
  std::vector<std::size_t> rows(train.size());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  const auto y = train.labels();
  return train_model(raw, rows, y, h, seed);
}

double predict_encoded(const TrainedModel& m, const Eigen::Ref<const Eigen::RowVectorXd>& x) {
  if (static_cast<std::size_t>(x.size()) != m.preprocessing.width()) {
    throw DataError("schema mismatch: encoded row has " + std::to_string(x.size()) +
                    " columns, model expects " + std::to_string(m.preprocessing.width()));
  }
  const double p = std::visit(
      Overloaded{[&](const LogisticModel& lr) { return lr.probability(x); },
                 [&](const RandomForest& rf) { return rf.probability(x); },
                 [&](const SvmModel& svm) { return svm.probability(x); }},
      m.fitted);
  return std::clamp(p, 0.0, 1.0);
}

std::vector<double> predict_proba(const TrainedModel& m, const Eigen::MatrixXd& raw,
                                  std::span<const std::size_t> rows) {
  const FeatureMatrix X = m.preprocessing.transform(raw, rows);
  std::vector<double> out(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out[i] = predict_encoded(m, X.rows.row(static_cast<Eigen::Index>(i)));
  }
  return out;
}

std::vector<double> predict_proba(const TrainedModel& m, const Cohort& records) {
  const Eigen::MatrixXd raw = raw_features(records);
  std::vector<std::size_t> rows(records.size());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  return predict_proba(m, raw, rows);
}

nlohmann::json to_json(const TrainedModel& m) {
  nlohmann::json j;
  j["format"] = "lnm-trained-model/1";
  j["kind"] = std::string(to_string(m.kind()));
  j["hyperparameters"] = to_json(m.hyperparameters);
  j["seed"] = m.seed;
  j["converged"] = m.converged;
  j["preprocessing"] = m.preprocessing.to_json();
  std::visit(Overloaded{
                 [&](const LogisticModel& lr) {
                   j["parameters"] = {{"weights", to_vector(lr.weights)},
                                      {"intercept", lr.intercept},
                                      {"iterations", lr.iterations}};
                 },
                 [&](const RandomForest& rf) {
                   nlohmann::json trees = nlohmann::json::array();
                   for (const auto& t : rf.trees) {
                     nlohmann::json nodes = nlohmann::json::array();
                     for (const auto& n : t.nodes()) {
                       nodes.push_back({n.feature, n.threshold, n.left, n.right, n.positives, n.samples});
                     }
                     trees.push_back(nodes);
                   }
                   j["parameters"] = {{"trees", trees}};
                 },
                 [&](const SvmModel& svm) {
                   j["parameters"] = {{"support_vectors", matrix_to_json(svm.support_vectors)},
                                      {"dual_coef", to_vector(svm.dual_coef)},
                                      {"bias", svm.bias},
                                      {"gamma", svm.gamma},
                                      {"platt_a", svm.platt.a},
                                      {"platt_b", svm.platt.b}};
                 }},
             m.fitted);
  return j;
}

TrainedModel trained_model_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != "lnm-trained-model/1") {
      throw DataError("unsupported trained-model format");
    }
    TrainedModel m{hyperparameters_from_json(j.at("hyperparameters")), j.at("seed").get<std::uint64_t>(),
                   Preprocessor::from_json(j.at("preprocessing")), LogisticModel{},
                   j.at("converged").get<bool>()};
    const auto& p = j.at("parameters");
    switch (m.kind()) {
      case ModelKind::LR: {
        LogisticModel lr;
        lr.weights = from_vector(p.at("weights").get<std::vector<double>>());
        lr.intercept = p.at("intercept").get<double>();
        lr.iterations = p.at("iterations").get<int>();
        lr.converged = m.converged;
        m.fitted = std::move(lr);
        break;
      }
      case ModelKind::RF: {
        RandomForest rf;
        for (const auto& tree : p.at("trees")) {
          std::vector<TreeNode> nodes;
          for (const auto& n : tree) {
            nodes.push_back({n.at(0).get<int>(), n.at(1).get<double>(), n.at(2).get<int>(),
                             n.at(3).get<int>(), n.at(4).get<int>(), n.at(5).get<int>()});
          }
          rf.trees.emplace_back(std::move(nodes));
        }
        m.fitted = std::move(rf);
        break;
      }
      case ModelKind::SVM: {
        SvmModel svm;
        svm.support_vectors = matrix_from_json(p.at("support_vectors"));
        svm.dual_coef = from_vector(p.at("dual_coef").get<std::vector<double>>());
        svm.bias = p.at("bias").get<double>();
        svm.gamma = p.at("gamma").get<double>();
        svm.platt = {p.at("platt_a").get<double>(), p.at("platt_b").get<double>()};
        svm.converged = m.converged;
        m.fitted = std::move(svm);
        break;
      }
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed trained-model file: ") + e.what());
  }
}

std::uint64_t model_fit_count() { return g_fit_count.load(std::memory_order_relaxed); }

}  // namespace lnm
