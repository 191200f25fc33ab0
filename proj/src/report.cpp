#include "lnm/report.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <tuple>
#include <sstream>

#include "lnm/csv.hpp"
#include "lnm/error.hpp"

namespace lnm {
namespace {

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  return out;
}

std::string full(double v) { return csv::format_double(v); }
std::string fixed3(double v) { return csv::format_fixed(v, 3); }

std::string p_text(double p) { return p < 0.001 ? std::string("<0.001") : fixed3(p); }

nlohmann::json curve_json(const std::vector<CurvePoint>& c) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& p : c) out.push_back({p.x, p.y});
  return out;
}

std::vector<CurvePoint> curve_from_json(const nlohmann::json& j) {
  std::vector<CurvePoint> c;
  for (const auto& p : j) c.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
  return c;
}

nlohmann::json ttest_json(const TTestResult& t) {
  // JSON has no infinity; a zero-variance non-zero difference is stored as a string.
  nlohmann::json stat = std::isinf(t.t) ? nlohmann::json(t.t > 0 ? "inf" : "-inf") : nlohmann::json(t.t);
  return {{"t", stat}, {"p", t.p_value}, {"df", t.df}};
}

TTestResult ttest_from_json(const nlohmann::json& j) {
  TTestResult t;
  const auto& stat = j.at("t");
  if (stat.is_string()) {
    t.t = stat.get<std::string>() == "inf" ? std::numeric_limits<double>::infinity()
                                            : -std::numeric_limits<double>::infinity();
  } else {
    t.t = stat.get<double>();
  }
  t.p_value = j.at("p").get<double>();
  t.df = j.at("df").get<int>();
  return t;
}

std::string t_text(double t) {
  if (std::isinf(t)) return t > 0 ? "inf" : "-inf";
  return full(t);
}

}  // namespace

std::string_view to_string(VariantKind v) {
  switch (v) {
    case VariantKind::LlmAlone: return "llm";
    case VariantKind::Ml: return "ml";
    case VariantKind::LlmMlNoEstimate: return "llm_ml_star";
    case VariantKind::Full: return "full";
  }
  return "?";
}

VariantKind parse_variant_kind(std::string_view text) {
  for (auto v : {VariantKind::LlmAlone, VariantKind::Ml, VariantKind::LlmMlNoEstimate, VariantKind::Full}) {
    if (to_string(v) == text) return v;
  }
  throw DataError("unknown variant '" + std::string(text) + "'");
}

std::string VariantMetrics::slug() const {
  std::string s = std::string(to_string(model)) + "_" + std::string(to_string(variant));
  if (strategy && variant == VariantKind::Full) s += "_" + std::string(to_string(*strategy));
  return s;
}

VariantMetrics score_variant(ModelKind model, VariantKind variant, std::optional<EnsembleStrategy> strategy,
                             std::string label, std::span<const double> probabilities, std::span<const int> labels,
                             const CvPlan& plan) {
  if (probabilities.size() != labels.size() || labels.size() != plan.cohort_size) {
    throw InvariantError("probabilities, labels and CV plan disagree on cohort size");
  }
  VariantMetrics m;
  m.model = model;
  m.variant = variant;
  m.strategy = strategy;
  m.label = std::move(label);
  for (std::size_t f = 0; f < plan.outer_count(); ++f) {
    std::vector<double> p;
    std::vector<int> y;
    for (std::size_t i : plan.outer_test[f]) {
      p.push_back(probabilities[i]);
      y.push_back(labels[i]);
    }
    m.fold_auc.push_back(roc_auc(p, y));
    m.fold_ap.push_back(average_precision(p, y));
  }
  m.auc_mean = mean(m.fold_auc);
  m.auc_sd = sample_sd(m.fold_auc);
  m.ap_mean = mean(m.fold_ap);
  m.ap_sd = sample_sd(m.fold_ap);
  m.pooled_auc = roc_auc(probabilities, labels);
  m.pooled_ap = average_precision(probabilities, labels);
  m.roc = roc_curve(probabilities, labels);
  m.pr = pr_curve(probabilities, labels);
  return m;
}

Comparison compare(const VariantMetrics& baseline, const VariantMetrics& variant, Sidedness sidedness) {
  Comparison c;
  c.model = variant.model;
  c.baseline = baseline.label;
  c.variant = variant.label;
  c.auc_diff = variant.auc_mean - baseline.auc_mean;
  c.ap_diff = variant.ap_mean - baseline.ap_mean;
  c.auc_test = paired_t_test(variant.fold_auc, baseline.fold_auc, sidedness);
  c.ap_test = paired_t_test(variant.fold_ap, baseline.fold_ap, sidedness);
  return c;
}

nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& m : r.rows) {
    rows.push_back({{"model", to_string(m.model)},
                    {"variant", to_string(m.variant)},
                    {"strategy", m.strategy ? nlohmann::json(std::string(to_string(*m.strategy))) : nlohmann::json()},
                    {"label", m.label},
                    {"fold_auc", m.fold_auc},
                    {"fold_ap", m.fold_ap},
                    {"auc_mean", m.auc_mean},
                    {"auc_sd", m.auc_sd},
                    {"ap_mean", m.ap_mean},
                    {"ap_sd", m.ap_sd},
                    {"pooled_auc", m.pooled_auc},
                    {"pooled_ap", m.pooled_ap},
                    {"roc", curve_json(m.roc)},
                    {"pr", curve_json(m.pr)}});
  }
  nlohmann::json comps = nlohmann::json::array();
  for (const auto& c : r.comparisons) {
    comps.push_back({{"model", to_string(c.model)},
                     {"baseline", c.baseline},
                     {"variant", c.variant},
                     {"auc_diff", c.auc_diff},
                     {"ap_diff", c.ap_diff},
                     {"auc_test", ttest_json(c.auc_test)},
                     {"ap_test", ttest_json(c.ap_test)}});
  }
  return {{"format", "lnm-eval-report/1"}, {"rows", rows}, {"comparisons", comps}, {"manifest", r.manifest}};
}

EvalReport eval_report_from_json(const nlohmann::json& j) {
  EvalReport r;
  try {
    if (j.at("format").get<std::string>() != "lnm-eval-report/1") throw DataError("unsupported evaluation format");
    for (const auto& row : j.at("rows")) {
      VariantMetrics m;
      m.model = parse_model_kind(row.at("model").get<std::string>());
      m.variant = parse_variant_kind(row.at("variant").get<std::string>());
      if (!row.at("strategy").is_null()) m.strategy = parse_strategy(row.at("strategy").get<std::string>());
      m.label = row.at("label").get<std::string>();
      m.fold_auc = row.at("fold_auc").get<std::vector<double>>();
      m.fold_ap = row.at("fold_ap").get<std::vector<double>>();
      m.auc_mean = row.at("auc_mean").get<double>();
      m.auc_sd = row.at("auc_sd").get<double>();
      m.ap_mean = row.at("ap_mean").get<double>();
      m.ap_sd = row.at("ap_sd").get<double>();
      m.pooled_auc = row.at("pooled_auc").get<double>();
      m.pooled_ap = row.at("pooled_ap").get<double>();
      m.roc = curve_from_json(row.at("roc"));
      m.pr = curve_from_json(row.at("pr"));
      r.rows.push_back(std::move(m));
    }
    for (const auto& c : j.at("comparisons")) {
      Comparison out;
      out.model = parse_model_kind(c.at("model").get<std::string>());
      out.baseline = c.at("baseline").get<std::string>();
      out.variant = c.at("variant").get<std::string>();
      out.auc_diff = c.at("auc_diff").get<double>();
      out.ap_diff = c.at("ap_diff").get<double>();
      out.auc_test = ttest_from_json(c.at("auc_test"));
      out.ap_test = ttest_from_json(c.at("ap_test"));
      r.comparisons.push_back(std::move(out));
    }
    r.manifest = j.at("manifest");
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed evaluation file: ") + e.what());
  }
  return r;
}

void emit_report(const EvalReport& r, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir / "curves", ec);
  if (ec) throw DataError("cannot create report directory " + dir.string() + ": " + ec.message());

  {
    auto out = open_output(dir / "results.csv");
    csv::write_row(out, {"model", "variant", "strategy", "label", "folds", "auc_mean", "auc_sd_across_folds", "ap_mean",
                         "ap_sd_across_folds", "pooled_auc", "pooled_ap"});
    for (const auto& m : r.rows) {
      csv::write_row(out, {std::string(to_string(m.model)), std::string(to_string(m.variant)),
                           m.strategy ? std::string(to_string(*m.strategy)) : std::string(), m.label,
                           std::to_string(m.fold_auc.size()), full(m.auc_mean), full(m.auc_sd), full(m.ap_mean),
                           full(m.ap_sd), full(m.pooled_auc), full(m.pooled_ap)});
    }
  }
  {
    auto out = open_output(dir / "fold_metrics.csv");
    csv::write_row(out, {"model", "label", "fold", "auc", "ap"});
    for (const auto& m : r.rows) {
      for (std::size_t f = 0; f < m.fold_auc.size(); ++f) {
        csv::write_row(out, {std::string(to_string(m.model)), m.label, std::to_string(f), full(m.fold_auc[f]),
                             full(m.fold_ap[f])});
      }
    }
  }
  {
    auto out = open_output(dir / "comparisons.csv");
    csv::write_row(out, {"model", "baseline", "variant", "auc_diff", "auc_t", "auc_p", "ap_diff", "ap_t", "ap_p", "df"});
    for (const auto& c : r.comparisons) {
      csv::write_row(out, {std::string(to_string(c.model)), c.baseline, c.variant, full(c.auc_diff), t_text(c.auc_test.t),
                           full(c.auc_test.p_value), full(c.ap_diff), t_text(c.ap_test.t), full(c.ap_test.p_value),
                           std::to_string(c.auc_test.df)});
    }
  }
  {
    auto out = open_output(dir / "results.md");
    out << "# Results\n\n"
        << "Means and SDs are over the outer cross-validation folds (SD with n-1 denominator). "
           "Pooled values use all out-of-fold predictions together.\n\n"
        << "| Model | AUC (mean ± SD) | AP (mean ± SD) | Pooled AUC | Pooled AP |\n"
        << "|---|---|---|---|---|\n";
    for (const auto& m : r.rows) {
      out << "| " << m.label << " | " << fixed3(m.auc_mean) << " ± " << fixed3(m.auc_sd) << " | "
          << fixed3(m.ap_mean) << " ± " << fixed3(m.ap_sd) << " | " << fixed3(m.pooled_auc) << " | "
          << fixed3(m.pooled_ap) << " |\n";
    }
    out << "\n## Paired t-tests against the model baseline\n\n"
        << "| Baseline | Variant | AUC diff | p (AUC) | AP diff | p (AP) |\n"
        << "|---|---|---|---|---|---|\n";
    for (const auto& c : r.comparisons) {
      out << "| " << c.baseline << " | " << c.variant << " | " << fixed3(c.auc_diff) << " | "
          << p_text(c.auc_test.p_value) << " | " << fixed3(c.ap_diff) << " | " << p_text(c.ap_test.p_value) << " |\n";
    }
  }
  for (const auto& m : r.rows) {
    for (const auto& [name, curve, xs, ys] :
         {std::tuple{"roc", &m.roc, "fpr", "tpr"}, std::tuple{"pr", &m.pr, "recall", "precision"}}) {
      auto out = open_output(dir / "curves" / (m.slug() + "_" + name + ".csv"));
      csv::write_row(out, {xs, ys});
      for (const auto& p : *curve) csv::write_row(out, {full(p.x), full(p.y)});
    }
  }
  {
    auto out = open_output(dir / "manifest.json");
    out << r.manifest.dump(2) << '\n';
  }
}

}  // namespace lnm
