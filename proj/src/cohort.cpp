#include "lnm/cohort.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <set>
#include <sstream>

#include "lnm/csv.hpp"
#include "lnm/error.hpp"
#include "lnm/hash.hpp"

namespace lnm {
namespace {

constexpr std::array<std::string_view, 2> kYesNo{"yes", "no"};
constexpr std::array<std::string_view, 2> kGender{"male", "female"};
constexpr std::array<std::string_view, 6> kLocation{"RUL", "RML", "RLL", "LUL", "LLL", "Others"};
constexpr std::array<std::string_view, 3> kDensity{"Solid", "mGGO", "GGO"};

constexpr std::array<ContinuousInfo, kContinuousCount> kContinuousInfo{{
    {"age", "Age", "years"},
    {"height", "Height", "cm"},
    {"weight", "Weight", "kg"},
    {"tumor_long_size", "Tumor long size", "cm"},
    {"tumor_short_size", "Tumor short size", "cm"},
    {"cea", "CEA", "ng/mL"},
    {"ca199", "CA199", "U/mL"},
    {"ca125", "CA125", "U/mL"},
    {"nse", "NSE", "ng/mL"},
    {"cyfra211", "CYFRA211", "ng/mL"},
    {"sccag", "SCCAG", "ng/mL"},
}};

const std::array<CategoricalInfo, kCategoricalCount> kCategoricalInfo{{
    {"gender", "Gender", kGender},
    {"smoking_history", "Smoking history", kYesNo},
    {"drinking_history", "Drinking history", kYesNo},
    {"family_tumor_history", "Family tumor history", kYesNo},
    {"hypertension", "Hypertension", kYesNo},
    {"diabetes", "Diabetes", kYesNo},
    {"tuberculosis_history", "Tuberculosis history", kYesNo},
    {"cardiovascular_diseases", "Cardiovascular diseases", kYesNo},
    {"cerebrovascular_diseases", "Cerebrovascular diseases", kYesNo},
    {"spiculation", "Spiculation", kYesNo},
    {"lobulation", "Lobulation", kYesNo},
    {"mlnsa_ge_10mm", "MLNSA >= 10mm", kYesNo},
    {"hlnsa_ge_10mm", "HLNSA >= 10mm", kYesNo},
    {"tumor_location", "Tumor location", kLocation},
    {"tumor_density", "Tumor density", kDensity},
}};

constexpr std::string_view kIdColumn = "patient_id";
constexpr std::string_view kHistoryColumn = "disease_history_text";
constexpr std::string_view kCtColumn = "ct_report_text";
constexpr std::string_view kLabelColumn = "n2_label";

bool iequals(std::string_view a, std::string_view b) {
  return a.size() == b.size() &&
         std::equal(a.begin(), a.end(), b.begin(), [](char x, char y) {
           return std::tolower(static_cast<unsigned char>(x)) ==
                  std::tolower(static_cast<unsigned char>(y));
         });
}

std::string trimmed(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return std::string(s);
}

}  // namespace

const ContinuousInfo& info(ContinuousFeature f) {
  return kContinuousInfo[static_cast<std::size_t>(f)];
}

const CategoricalInfo& info(CategoricalFeature f) {
  return kCategoricalInfo[static_cast<std::size_t>(f)];
}

std::optional<std::uint8_t> level_index(CategoricalFeature f, std::string_view text) {
  const auto& levels = info(f).levels;
  for (std::size_t i = 0; i < levels.size(); ++i) {
    if (iequals(levels[i], text)) return static_cast<std::uint8_t>(i);
  }
  return std::nullopt;
}

std::string_view PatientRecord::level_name(CategoricalFeature f) const {
  const auto lvl = level(f);
  if (!lvl) return {};
  return info(f).levels[*lvl];
}

std::optional<std::string> validate(const PatientRecord& r, bool allow_missing) {
  if (r.patient_id.empty()) return "empty patient_id";
  for (ContinuousFeature f : kAllContinuous) {
    const auto v = r.value(f);
    if (!v) {
      if (!allow_missing) return std::string("missing value for ") + std::string(info(f).column);
      continue;
    }
    if (!std::isfinite(*v) || *v < 0.0) {
      return std::string(info(f).column) + " must be finite and non-negative";
    }
  }
  for (CategoricalFeature f : kAllCategorical) {
    const auto lvl = r.level(f);
    if (!lvl) {
      if (!allow_missing) return std::string("missing value for ") + std::string(info(f).column);
      continue;
    }
    if (*lvl >= info(f).levels.size()) {
      return std::string(info(f).column) + " level out of domain";
    }
  }
  const auto long_size = r.value(ContinuousFeature::TumorLongSize);
  const auto short_size = r.value(ContinuousFeature::TumorShortSize);
  if (long_size && short_size && *short_size > *long_size) {
    return "tumor_short_size exceeds tumor_long_size";
  }
  return std::nullopt;
}

Cohort::Cohort(std::vector<PatientRecord> records, Provenance provenance, bool allow_missing)
    : records_(std::move(records)), provenance_(std::move(provenance)) {
  if (records_.empty()) throw DataError("cohort is empty");
  for (std::size_t i = 0; i < records_.size(); ++i) {
    if (auto problem = validate(records_[i], allow_missing)) {
      throw DataError("record " + std::to_string(i) + " (" + records_[i].patient_id +
                      "): " + *problem);
    }
    if (!index_.emplace(records_[i].patient_id, i).second) {
      throw DataError("duplicate patient_id '" + records_[i].patient_id + "' at record " +
                      std::to_string(i));
    }
  }
}

bool Cohort::labeled() const {
  return std::all_of(records_.begin(), records_.end(),
                     [](const PatientRecord& r) { return r.n2_positive.has_value(); });
}

std::vector<int> Cohort::labels() const {
  std::vector<int> y;
  y.reserve(records_.size());
  for (const auto& r : records_) {
    if (!r.n2_positive) throw DataError("record " + r.patient_id + " has no n2_label");
    y.push_back(*r.n2_positive ? 1 : 0);
  }
  return y;
}

std::size_t Cohort::positives() const {
  return static_cast<std::size_t>(std::count_if(
      records_.begin(), records_.end(),
      [](const PatientRecord& r) { return r.n2_positive.value_or(false); }));
}

bool Cohort::has_missing() const {
  for (const auto& r : records_) {
    for (const auto& v : r.continuous) {
      if (!v) return true;
    }
    for (const auto& v : r.categorical) {
      if (!v) return true;
    }
  }
  return false;
}

std::optional<std::size_t> Cohort::find(std::string_view patient_id) const {
  auto it = index_.find(patient_id);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

Cohort Cohort::subset(std::span<const std::size_t> indices) const {
  std::vector<PatientRecord> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(records_.at(i));
  return Cohort(std::move(out), provenance_, has_missing());
}

std::vector<std::string> canonical_columns() {
  std::vector<std::string> cols{std::string(kIdColumn)};
  for (const auto& c : kContinuousInfo) cols.emplace_back(c.column);
  for (const auto& c : kCategoricalInfo) cols.emplace_back(c.column);
  cols.emplace_back(kHistoryColumn);
  cols.emplace_back(kCtColumn);
  cols.emplace_back(kLabelColumn);
  return cols;
}

Cohort load_cohort(const std::filesystem::path& path, const CohortSchema& schema, LoadMode mode) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open cohort file: " + path.string());
  csv::Reader reader(in);
  csv::Row header;
  if (!reader.next(header)) throw DataError("cohort file is empty: " + path.string());
  if (!header.empty() && header[0].starts_with("\xEF\xBB\xBF")) header[0].erase(0, 3);

  const auto canonical = canonical_columns();
  std::map<std::string, std::size_t> column_of;  // canonical name -> file column index
  for (std::size_t c = 0; c < header.size(); ++c) {
    std::string name = trimmed(header[c]);
    if (auto it = schema.rename.find(name); it != schema.rename.end()) name = it->second;
    if (std::find(canonical.begin(), canonical.end(), name) == canonical.end()) {
      throw DataError("unknown column '" + header[c] + "' (file column " + std::to_string(c + 1) +
                      ")");
    }
    if (!column_of.emplace(name, c).second) throw DataError("duplicate column '" + name + "'");
  }
  for (const auto& name : canonical) {
    const bool optional = name == kHistoryColumn || name == kCtColumn || name == kLabelColumn;
    if (!optional && !column_of.contains(name)) {
      throw DataError("missing required column '" + name + "'");
    }
  }

  const bool lenient = mode == LoadMode::Lenient;
  std::vector<PatientRecord> records;
  std::set<std::string, std::less<>> seen;
  csv::Row row;
  std::size_t row_number = 0;
  while (reader.next(row)) {
    if (row.size() == 1 && trimmed(row[0]).empty()) continue;  // blank line
    ++row_number;
    const std::string where = "row " + std::to_string(row_number) + " (line " +
                              std::to_string(reader.line()) + ")";
    if (row.size() != header.size()) {
      throw DataError(where + ": expected " + std::to_string(header.size()) + " fields, got " +
                      std::to_string(row.size()));
    }
    auto cell = [&](std::string_view name) -> std::optional<std::string> {
      auto it = column_of.find(std::string(name));
      if (it == column_of.end()) return std::nullopt;
      return row[it->second];
    };

    PatientRecord r;
    r.patient_id = trimmed(*cell(kIdColumn));
    for (ContinuousFeature f : kAllContinuous) {
      const std::string text = trimmed(*cell(info(f).column));
      if (text.empty()) continue;
      double v = 0.0;
      if (!csv::parse_double(text, v)) {
        throw DataError(where + ", column '" + std::string(info(f).column) +
                        "': unparseable value '" + text + "'");
      }
      r.set(f, v);
    }
    for (CategoricalFeature f : kAllCategorical) {
      const std::string text = trimmed(*cell(info(f).column));
      if (text.empty()) continue;
      const auto lvl = level_index(f, text);
      if (!lvl) {
        throw DataError(where + ", column '" + std::string(info(f).column) +
                        "': unparseable value '" + text + "'");
      }
      r.set(f, *lvl);
    }
    r.disease_history_text = cell(kHistoryColumn).value_or("");
    r.ct_report_text = cell(kCtColumn).value_or("");
    if (auto label = cell(kLabelColumn)) {
      const std::string text = trimmed(*label);
      if (iequals(text, "positive") || text == "1") {
        r.n2_positive = true;
      } else if (iequals(text, "negative") || text == "0") {
        r.n2_positive = false;
      } else if (!text.empty()) {
        throw DataError(where + ", column 'n2_label': unparseable value '" + text + "'");
      }
    }
    if (auto problem = validate(r, lenient)) throw DataError(where + ": " + *problem);
    if (!seen.insert(r.patient_id).second) {
      throw DataError(where + ": duplicate patient_id '" + r.patient_id + "'");
    }
    records.push_back(std::move(r));
  }
  if (records.empty()) throw DataError("cohort file has no data rows: " + path.string());
  return Cohort(std::move(records), IngestedProvenance{path.string()}, lenient);
}

std::string cohort_to_csv(const Cohort& cohort) {
  std::ostringstream out;
  csv::write_row(out, canonical_columns());
  for (const auto& r : cohort.records()) {
    csv::Row row{r.patient_id};
    for (ContinuousFeature f : kAllContinuous) {
      const auto v = r.value(f);
      row.push_back(v ? csv::format_double(*v) : std::string());
    }
    for (CategoricalFeature f : kAllCategorical) row.emplace_back(r.level_name(f));
    row.push_back(r.disease_history_text);
    row.push_back(r.ct_report_text);
    row.push_back(!r.n2_positive ? "" : (*r.n2_positive ? "positive" : "negative"));
    csv::write_row(out, row);
  }
  return out.str();
}

void write_cohort(const Cohort& cohort, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write cohort file: " + path.string());
  out << cohort_to_csv(cohort);
}

std::string cohort_hash(const Cohort& cohort) { return sha256_hex(cohort_to_csv(cohort)); }

CohortSummary summarize(const Cohort& cohort) {
  if (!cohort.labeled()) throw DataError("summarize requires a fully labeled cohort");
  CohortSummary s;
  s.total = cohort.size();
  s.positives = cohort.positives();
  s.prevalence = static_cast<double>(s.positives) / static_cast<double>(s.total);

  for (ContinuousFeature f : kAllContinuous) {
    std::array<std::vector<double>, 2> groups;
    for (const auto& r : cohort.records()) {
      if (auto v = r.value(f)) groups[*r.n2_positive ? 0 : 1].push_back(*v);
    }
    for (std::size_t g = 0; g < 2; ++g) {
      MeanSd& out = s.continuous[static_cast<std::size_t>(f)][g];
      const auto& xs = groups[g];
      out.n = xs.size();
      if (xs.empty()) continue;
      out.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
      if (xs.size() > 1) {
        double ss = 0.0;
        for (double x : xs) ss += (x - out.mean) * (x - out.mean);
        out.sd = std::sqrt(ss / static_cast<double>(xs.size() - 1));
      }
    }
  }
  for (CategoricalFeature f : kAllCategorical) {
    const std::size_t levels = info(f).levels.size();
    auto& counts = s.counts[static_cast<std::size_t>(f)];
    counts[0].assign(levels + 1, 0);
    counts[1].assign(levels + 1, 0);
    for (const auto& r : cohort.records()) {
      const auto lvl = r.level(f);
      counts[*r.n2_positive ? 0 : 1][lvl ? *lvl : levels] += 1;
    }
  }
  return s;
}

std::string format_summary(const CohortSummary& s) {
  std::ostringstream out;
  const std::size_t negatives = s.total - s.positives;
  out << std::left << std::setw(28) << "Clinical feature" << std::setw(22)
      << ("Positive (n=" + std::to_string(s.positives) + ")")
      << ("Negative (n=" + std::to_string(negatives) + ")") << '\n';
  auto mean_sd = [](const MeanSd& m) {
    return csv::format_fixed(m.mean, 2) + " +/- " + csv::format_fixed(m.sd, 2);
  };
  for (ContinuousFeature f : kAllContinuous) {
    const auto& g = s.continuous[static_cast<std::size_t>(f)];
    out << std::setw(28) << info(f).display << std::setw(22) << mean_sd(g[0]) << mean_sd(g[1])
        << '\n';
  }
  for (CategoricalFeature f : kAllCategorical) {
    const auto& levels = info(f).levels;
    const auto& counts = s.counts[static_cast<std::size_t>(f)];
    out << info(f).display << '\n';
    for (std::size_t l = 0; l <= levels.size(); ++l) {
      if (l == levels.size() && counts[0][l] == 0 && counts[1][l] == 0) continue;
      const std::string name = l < levels.size() ? std::string(levels[l]) : "(missing)";
      out << "    " << std::setw(24) << name << std::setw(22) << counts[0][l] << counts[1][l]
          << '\n';
    }
  }
  out << "Prevalence: " << csv::format_fixed(s.prevalence, 4) << '\n';
  return out.str();
}

}  // namespace lnm
