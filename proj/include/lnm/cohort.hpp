#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace lnm {

// Structured clinical features, in the row order of the cohort statistics table.
enum class ContinuousFeature : std::size_t {
  Age,
  Height,
  Weight,
  TumorLongSize,
  TumorShortSize,
  Cea,
  Ca199,
  Ca125,
  Nse,
  Cyfra211,
  Sccag,
};

enum class CategoricalFeature : std::size_t {
  Gender,
  SmokingHistory,
  DrinkingHistory,
  FamilyTumorHistory,
  Hypertension,
  Diabetes,
  TuberculosisHistory,
  CardiovascularDiseases,
  CerebrovascularDiseases,
  Spiculation,
  Lobulation,
  MlnsaGe10mm,
  HlnsaGe10mm,
  TumorLocation,
  TumorDensity,
};

inline constexpr std::size_t kContinuousCount = 11;
inline constexpr std::size_t kCategoricalCount = 15;
inline constexpr std::size_t kFeatureCount = kContinuousCount + kCategoricalCount;

struct ContinuousInfo {
  std::string_view column;   // canonical file column
  std::string_view display;  // human label
  std::string_view unit;
};

struct CategoricalInfo {
  std::string_view column;
  std::string_view display;
  std::span<const std::string_view> levels;  // last level is the reference level
};

const ContinuousInfo& info(ContinuousFeature f);
const CategoricalInfo& info(CategoricalFeature f);

inline constexpr std::array<ContinuousFeature, kContinuousCount> kAllContinuous{
    ContinuousFeature::Age,      ContinuousFeature::Height,        ContinuousFeature::Weight,
    ContinuousFeature::TumorLongSize, ContinuousFeature::TumorShortSize, ContinuousFeature::Cea,
    ContinuousFeature::Ca199,    ContinuousFeature::Ca125,         ContinuousFeature::Nse,
    ContinuousFeature::Cyfra211, ContinuousFeature::Sccag};

inline constexpr std::array<CategoricalFeature, kCategoricalCount> kAllCategorical{
    CategoricalFeature::Gender,          CategoricalFeature::SmokingHistory,
    CategoricalFeature::DrinkingHistory, CategoricalFeature::FamilyTumorHistory,
    CategoricalFeature::Hypertension,    CategoricalFeature::Diabetes,
    CategoricalFeature::TuberculosisHistory, CategoricalFeature::CardiovascularDiseases,
    CategoricalFeature::CerebrovascularDiseases, CategoricalFeature::Spiculation,
    CategoricalFeature::Lobulation,      CategoricalFeature::MlnsaGe10mm,
    CategoricalFeature::HlnsaGe10mm,     CategoricalFeature::TumorLocation,
    CategoricalFeature::TumorDensity};

/// Level index for `text` within the feature's domain, if any.
std::optional<std::uint8_t> level_index(CategoricalFeature f, std::string_view text);

struct PatientRecord {
  std::string patient_id;
  std::array<std::optional<double>, kContinuousCount> continuous{};
  std::array<std::optional<std::uint8_t>, kCategoricalCount> categorical{};
  std::string disease_history_text;
  std::string ct_report_text;
  std::optional<bool> n2_positive;  // gold label; absent for inference-only records

  std::optional<double> value(ContinuousFeature f) const {
    return continuous[static_cast<std::size_t>(f)];
  }
  std::optional<std::uint8_t> level(CategoricalFeature f) const {
    return categorical[static_cast<std::size_t>(f)];
  }
  /// Level name, or empty when missing.
  std::string_view level_name(CategoricalFeature f) const;

  void set(ContinuousFeature f, double v) { continuous[static_cast<std::size_t>(f)] = v; }
  void set(CategoricalFeature f, std::uint8_t level) {
    categorical[static_cast<std::size_t>(f)] = level;
  }

  bool operator==(const PatientRecord&) const = default;
};

/// Describes the first invariant `r` violates, or nullopt when valid.
/// Missing feature values are violations unless `allow_missing`.
std::optional<std::string> validate(const PatientRecord& r, bool allow_missing);

struct IngestedProvenance {
  std::string source;
  bool operator==(const IngestedProvenance&) const = default;
};
struct SyntheticProvenance {
  std::uint64_t seed = 0;
  bool operator==(const SyntheticProvenance&) const = default;
};
using Provenance = std::variant<IngestedProvenance, SyntheticProvenance>;

/// Non-empty, validated, read-only list of patients with unique ids.
class Cohort {
 public:
  /// Throws DataError naming the offending record index on any violation.
  Cohort(std::vector<PatientRecord> records, Provenance provenance, bool allow_missing = false);

  const std::vector<PatientRecord>& records() const noexcept { return records_; }
  const PatientRecord& operator[](std::size_t i) const { return records_[i]; }
  std::size_t size() const noexcept { return records_.size(); }
  const Provenance& provenance() const noexcept { return provenance_; }

  bool labeled() const;
  /// 0/1 labels; throws DataError if any record is unlabeled.
  std::vector<int> labels() const;
  std::size_t positives() const;
  bool has_missing() const;
  std::optional<std::size_t> find(std::string_view patient_id) const;

  /// Cohort restricted to `indices`, preserving order.
  Cohort subset(std::span<const std::size_t> indices) const;

  bool operator==(const Cohort& other) const { return records_ == other.records_; }

 private:
  std::vector<PatientRecord> records_;
  Provenance provenance_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

enum class LoadMode {
  Strict,   // any missing value rejects the row
  Lenient,  // missing values are kept and imputed later from training folds
};

/// Maps file columns to canonical column names. Columns absent from the map
/// must already carry a canonical name.
struct CohortSchema {
  std::map<std::string, std::string> rename;
};

Cohort load_cohort(const std::filesystem::path& path, const CohortSchema& schema = {},
                   LoadMode mode = LoadMode::Strict);
void write_cohort(const Cohort& cohort, const std::filesystem::path& path);
std::string cohort_to_csv(const Cohort& cohort);
/// SHA-256 of the canonical CSV serialization.
std::string cohort_hash(const Cohort& cohort);
std::vector<std::string> canonical_columns();

struct MeanSd {
  double mean = 0.0;
  double sd = 0.0;
  std::size_t n = 0;
};

struct CohortSummary {
  std::size_t total = 0;
  std::size_t positives = 0;
  double prevalence = 0.0;
  // index 0: positive group, 1: negative group
  std::array<std::array<MeanSd, 2>, kContinuousCount> continuous{};
  // per feature: per label group: count per level, plus a trailing missing count
  std::array<std::array<std::vector<std::size_t>, 2>, kCategoricalCount> counts{};
};

/// Mean and sample SD (n-1; SD 0 for a singleton) per label group, and level
/// counts per label group. Throws DataError on an unlabeled cohort.
CohortSummary summarize(const Cohort& cohort);

/// Two-group statistics table laid out like the published cohort table.
std::string format_summary(const CohortSummary& s);

}  // namespace lnm
