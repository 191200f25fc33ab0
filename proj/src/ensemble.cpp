#include "lnm/ensemble.hpp"

#include <algorithm>
#include <fstream>

#include "lnm/csv.hpp"
#include "lnm/error.hpp"

namespace lnm {
namespace {

double number_cell(const std::string& cell, const std::filesystem::path& path, std::size_t line) {
  double v = 0.0;
  if (!csv::parse_double(cell, v)) {
    throw DataError(path.string() + ":" + std::to_string(line) + ": not a number: '" + cell + "'");
  }
  return v;
}

}  // namespace

std::string_view to_string(EnsembleStrategy s) {
  switch (s) {
    case EnsembleStrategy::Max: return "max";
    case EnsembleStrategy::Min: return "min";
    case EnsembleStrategy::Median: return "median";
    case EnsembleStrategy::Mean: return "mean";
  }
  return "?";
}

EnsembleStrategy parse_strategy(std::string_view text) {
  for (auto s : kAllStrategies) {
    if (to_string(s) == text) return s;
  }
  throw ConfigError("unknown ensemble strategy '" + std::string(text) + "' (expected max, min, median or mean)");
}

double aggregate(std::span<const double> values, EnsembleStrategy strategy) {
  if (values.empty()) throw DataError("cannot aggregate an empty list");
  for (double v : values) {
    if (!(v >= 0.0 && v <= 1.0)) throw DataError("ensemble inputs must lie in [0, 1]");
  }
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  switch (strategy) {
    case EnsembleStrategy::Max: return *hi;
    case EnsembleStrategy::Min: return *lo;
    case EnsembleStrategy::Median: {
      std::vector<double> sorted(values.begin(), values.end());
      std::sort(sorted.begin(), sorted.end());
      const std::size_t k = sorted.size();
      if (k % 2 == 1) return sorted[k / 2];
      const double a = sorted[k / 2 - 1];
      const double b = sorted[k / 2];
      return a + (b - a) / 2.0;
    }
    case EnsembleStrategy::Mean: {
      // Offsets from the first value keep identical inputs exact.
      double offset = 0.0;
      for (double v : values) offset += v - values[0];
      return std::clamp(values[0] + offset / static_cast<double>(values.size()), *lo, *hi);
    }
  }
  throw InvariantError("unknown ensemble strategy");
}

ResolvedInputs resolve_inputs(std::span<const LlmJudgment> judgments, double ml_probability) {
  if (!(ml_probability >= 0.0 && ml_probability <= 1.0)) throw DataError("ML probability must lie in [0, 1]");
  ResolvedInputs r;
  r.values.reserve(judgments.size());
  for (const auto& j : judgments) {
    if (j.parse_status == ParseStatus::Fallback || !j.answer) {
      r.values.push_back(ml_probability);
      ++r.substitutions;
    } else {
      r.values.push_back(*j.answer);
    }
  }
  return r;
}

EnsembledPrediction ensemble(std::span<const LlmJudgment> judgments, double ml_probability, EnsembleStrategy strategy,
                             ModelKind model_kind) {
  if (judgments.empty()) throw DataError("no judgments to ensemble");
  auto resolved = resolve_inputs(judgments, ml_probability);
  EnsembledPrediction p;
  p.patient_id = judgments.front().patient_id;
  p.template_kind = judgments.front().template_kind;
  p.model_kind = model_kind;
  p.strategy = strategy;
  p.final_probability = aggregate(resolved.values, strategy);
  p.inputs = std::move(resolved.values);
  p.substitutions = resolved.substitutions;
  return p;
}

void write_predictions_csv(std::span<const EnsembledPrediction> rows, const std::filesystem::path& path) {
  const std::size_t k = rows.empty() ? 0 : rows.front().inputs.size();
  std::vector<std::string> header{"patient_id", "template_kind", "model", "strategy"};
  for (std::size_t i = 1; i <= k; ++i) header.push_back("input_" + std::to_string(i));
  header.push_back("final");
  header.push_back("substitutions");

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  csv::write_row(out, header);
  for (const auto& r : rows) {
    if (r.inputs.size() != k) throw InvariantError("prediction rows have differing repeat counts");
    std::vector<std::string> cells{r.patient_id, std::string(to_string(r.template_kind)),
                                   std::string(to_string(r.model_kind)), std::string(to_string(r.strategy))};
    for (double v : r.inputs) cells.push_back(csv::format_double(v));
    cells.push_back(csv::format_double(r.final_probability));
    cells.push_back(std::to_string(r.substitutions));
    csv::write_row(out, cells);
  }
  if (!out) throw DataError("write failed: " + path.string());
}

std::vector<EnsembledPrediction> read_predictions_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  csv::Reader reader(in);
  csv::Row header;
  if (!reader.next(header) || header.size() < 6) throw DataError(path.string() + ": missing header");
  const std::size_t k = header.size() - 6;
  std::vector<EnsembledPrediction> rows;
  csv::Row row;
  while (reader.next(row)) {
    if (row.size() != header.size()) {
      throw DataError(path.string() + ":" + std::to_string(reader.line()) + ": expected " +
                      std::to_string(header.size()) + " fields");
    }
    EnsembledPrediction p;
    p.patient_id = row[0];
    p.template_kind = parse_template_kind(row[1]);
    p.model_kind = parse_model_kind(row[2]);
    p.strategy = parse_strategy(row[3]);
    for (std::size_t i = 0; i < k; ++i) p.inputs.push_back(number_cell(row[4 + i], path, reader.line()));
    p.final_probability = number_cell(row[4 + k], path, reader.line());
    p.substitutions = static_cast<std::size_t>(number_cell(row[5 + k], path, reader.line()));
    rows.push_back(std::move(p));
  }
  return rows;
}

}  // namespace lnm
