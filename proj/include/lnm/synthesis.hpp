#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "lnm/cohort.hpp"

namespace lnm {

struct GroupMoments {
  double mean = 0.0;
  double sd = 0.0;
};

/// Per-label-group marginals for every structured feature plus the label
/// prevalence. Index 0 is the positive group, 1 the negative group.
struct MarginalSpec {
  double prevalence = 0.0;
  std::array<std::array<GroupMoments, 2>, kContinuousCount> continuous{};
  // Relative level frequencies (need not be normalized).
  std::array<std::array<std::vector<double>, 2>, kCategoricalCount> categorical{};
};

/// Marginals of the published 767-patient cohort (104 positive).
MarginalSpec default_marginal_spec();
MarginalSpec load_marginal_spec(const std::filesystem::path& path);
MarginalSpec marginal_spec_from_json_text(const std::string& text);
std::string marginal_spec_to_json_text(const MarginalSpec& spec);

/// Throws ConfigError naming the first infeasible entry.
void check_feasible(const MarginalSpec& spec);

/// Non-negative sampler whose distribution has exactly the requested mean and
/// SD. Below the coefficient-of-variation cutoff it is a normal truncated at
/// zero with location/scale solved for those moments; above it (a zero-truncated
/// normal cannot reach CV >= 1) it falls back to a moment-matched log-normal.
class ContinuousSampler {
 public:
  enum class Family { Constant, TruncatedNormal, LogNormal };
  static constexpr double kTruncatedNormalMaxCv = 0.85;

  static ContinuousSampler moment_matched(double mean, double sd);

  double draw(std::mt19937_64& rng) const;

  Family family() const noexcept { return family_; }
  double location() const noexcept { return location_; }
  double scale() const noexcept { return scale_; }

 private:
  Family family_ = Family::Constant;
  double location_ = 0.0;
  double scale_ = 0.0;
};

/// Deterministic in (spec, n, seed). Labels are Bernoulli(prevalence); each
/// feature is drawn from its group's marginal; tumor_short_size is redrawn
/// until it does not exceed tumor_long_size; free text is filled from fixed
/// sentence templates over the structured values.
Cohort synthesize_cohort(const MarginalSpec& spec, std::size_t n, std::uint64_t seed);

std::string render_history_text(const PatientRecord& r);
std::string render_ct_text(const PatientRecord& r);

}  // namespace lnm
