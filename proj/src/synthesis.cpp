#include "lnm/synthesis.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include <nlohmann/json.hpp>

#include "lnm/csv.hpp"
#include "lnm/error.hpp"

namespace lnm {
namespace {

using nlohmann::json;

constexpr std::array<const char*, 2> kGroupKeys{"positive", "negative"};

// Decimal places kept for each continuous feature, mirroring clinical charting.
constexpr std::array<int, kContinuousCount> kPrecision{0, 1, 1, 1, 1, 2, 2, 2, 2, 2, 2};

double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }
double normal_sf(double x) { return 0.5 * std::erfc(x / std::numbers::sqrt2); }

// Inverse Mills ratio phi(a) / (1 - Phi(a)).
double mills(double a) { return normal_pdf(a) / normal_sf(a); }

// Coefficient of variation of N(mu, sigma) truncated to [0, inf) as a
// function of the standardized truncation point a = -mu / sigma.
double truncated_cv(double a) {
  const double lam = mills(a);
  const double var_ratio = 1.0 + a * lam - lam * lam;
  return std::sqrt(std::max(var_ratio, 0.0)) / (lam - a);
}

double round_to(double v, int decimals) {
  const double scale = std::pow(10.0, decimals);
  return std::round(v * scale) / scale;
}

std::uint8_t draw_level(const std::vector<double>& weights, std::mt19937_64& rng) {
  std::discrete_distribution<int> dist(weights.begin(), weights.end());
  return static_cast<std::uint8_t>(dist(rng));
}

}  // namespace

ContinuousSampler ContinuousSampler::moment_matched(double mean, double sd) {
  if (!std::isfinite(mean) || !std::isfinite(sd) || mean < 0.0 || sd < 0.0) {
    throw ConfigError("infeasible marginal: mean and SD must be finite and non-negative");
  }
  ContinuousSampler s;
  if (sd == 0.0) {
    s.location_ = mean;
    return s;
  }
  if (mean == 0.0) throw ConfigError("infeasible marginal: zero mean with positive SD");
  const double cv = sd / mean;
  if (cv <= kTruncatedNormalMaxCv) {
    // truncated_cv is increasing in a; bisect for the target.
    double lo = -60.0;
    double hi = 1.5;
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (lo + hi);
      (truncated_cv(mid) < cv ? lo : hi) = mid;
    }
    const double a = 0.5 * (lo + hi);
    const double sigma = mean / (mills(a) - a);
    s.family_ = Family::TruncatedNormal;
    s.location_ = -a * sigma;
    s.scale_ = sigma;
  } else {
    const double log_var = std::log1p(cv * cv);
    s.family_ = Family::LogNormal;
    s.location_ = std::log(mean) - 0.5 * log_var;
    s.scale_ = std::sqrt(log_var);
  }
  return s;
}

double ContinuousSampler::draw(std::mt19937_64& rng) const {
  switch (family_) {
    case Family::Constant:
      return location_;
    case Family::TruncatedNormal: {
      std::normal_distribution<double> dist(location_, scale_);
      while (true) {
        const double v = dist(rng);
        if (v >= 0.0) return v;
      }
    }
    case Family::LogNormal: {
      std::lognormal_distribution<double> dist(location_, scale_);
      return dist(rng);
    }
  }
  return location_;
}

MarginalSpec default_marginal_spec() {
  MarginalSpec s;
  s.prevalence = 104.0 / 767.0;
  auto set = [&](ContinuousFeature f, GroupMoments pos, GroupMoments neg) {
    s.continuous[static_cast<std::size_t>(f)] = {pos, neg};
  };
  set(ContinuousFeature::Age, {60.82, 9.02}, {60.79, 9.53});
  set(ContinuousFeature::Height, {164.57, 6.93}, {164.50, 7.92});
  set(ContinuousFeature::Weight, {66.93, 9.47}, {65.59, 9.50});
  set(ContinuousFeature::TumorLongSize, {3.01, 1.38}, {2.56, 1.40});
  set(ContinuousFeature::TumorShortSize, {2.38, 1.11}, {1.99, 1.16});
  set(ContinuousFeature::Cea, {12.76, 21.18}, {4.24, 9.53});
  set(ContinuousFeature::Ca199, {15.89, 20.96}, {13.95, 15.39});
  set(ContinuousFeature::Ca125, {19.96, 25.55}, {13.47, 10.18});
  set(ContinuousFeature::Nse, {16.25, 6.10}, {15.68, 7.02});
  set(ContinuousFeature::Cyfra211, {3.57, 4.21}, {3.18, 3.34});
  set(ContinuousFeature::Sccag, {1.19, 1.81}, {0.93, 0.97});

  auto cat = [&](CategoricalFeature f, std::vector<double> pos, std::vector<double> neg) {
    s.categorical[static_cast<std::size_t>(f)] = {std::move(pos), std::move(neg)};
  };
  cat(CategoricalFeature::Gender, {62, 42}, {322, 341});
  cat(CategoricalFeature::SmokingHistory, {55, 49}, {272, 391});
  cat(CategoricalFeature::DrinkingHistory, {25, 79}, {151, 512});
  cat(CategoricalFeature::FamilyTumorHistory, {14, 90}, {116, 547});
  cat(CategoricalFeature::Hypertension, {37, 67}, {184, 479});
  cat(CategoricalFeature::Diabetes, {14, 90}, {65, 598});
  cat(CategoricalFeature::TuberculosisHistory, {2, 102}, {29, 634});
  cat(CategoricalFeature::CardiovascularDiseases, {9, 95}, {27, 636});
  cat(CategoricalFeature::CerebrovascularDiseases, {6, 98}, {23, 640});
  cat(CategoricalFeature::Spiculation, {39, 65}, {171, 492});
  cat(CategoricalFeature::Lobulation, {52, 52}, {174, 489});
  cat(CategoricalFeature::MlnsaGe10mm, {34, 70}, {80, 583});
  cat(CategoricalFeature::HlnsaGe10mm, {23, 81}, {71, 592});
  cat(CategoricalFeature::TumorLocation, {27, 4, 18, 27, 21, 7}, {209, 54, 129, 140, 100, 31});
  cat(CategoricalFeature::TumorDensity, {101, 3, 0}, {457, 92, 114});
  return s;
}

void check_feasible(const MarginalSpec& spec) {
  if (!(spec.prevalence > 0.0 && spec.prevalence < 1.0)) {
    throw ConfigError("infeasible marginal spec: prevalence must lie in (0, 1)");
  }
  for (ContinuousFeature f : kAllContinuous) {
    for (std::size_t g = 0; g < 2; ++g) {
      const auto& m = spec.continuous[static_cast<std::size_t>(f)][g];
      try {
        (void)ContinuousSampler::moment_matched(m.mean, m.sd);
      } catch (const ConfigError& e) {
        throw ConfigError(std::string(e.what()) + " (" + std::string(info(f).column) + ", " +
                          kGroupKeys[g] + " group)");
      }
    }
  }
  for (CategoricalFeature f : kAllCategorical) {
    for (std::size_t g = 0; g < 2; ++g) {
      const auto& w = spec.categorical[static_cast<std::size_t>(f)][g];
      double total = 0.0;
      for (double x : w) {
        if (!std::isfinite(x) || x < 0.0) {
          throw ConfigError("infeasible marginal spec: negative frequency for " +
                            std::string(info(f).column));
        }
        total += x;
      }
      if (w.size() != info(f).levels.size() || total <= 0.0) {
        throw ConfigError("infeasible marginal spec: level frequencies for " +
                          std::string(info(f).column) + " must cover " +
                          std::to_string(info(f).levels.size()) + " levels with positive total");
      }
    }
  }
}

std::string marginal_spec_to_json_text(const MarginalSpec& spec) {
  json j;
  j["prevalence"] = spec.prevalence;
  json cont = json::object();
  for (ContinuousFeature f : kAllContinuous) {
    json entry;
    for (std::size_t g = 0; g < 2; ++g) {
      const auto& m = spec.continuous[static_cast<std::size_t>(f)][g];
      entry[kGroupKeys[g]] = {{"mean", m.mean}, {"sd", m.sd}};
    }
    cont[std::string(info(f).column)] = entry;
  }
  j["continuous"] = cont;
  json cats = json::object();
  for (CategoricalFeature f : kAllCategorical) {
    json entry;
    for (std::size_t g = 0; g < 2; ++g) {
      json levels = json::object();
      const auto& w = spec.categorical[static_cast<std::size_t>(f)][g];
      for (std::size_t l = 0; l < info(f).levels.size() && l < w.size(); ++l) {
        levels[std::string(info(f).levels[l])] = w[l];
      }
      entry[kGroupKeys[g]] = levels;
    }
    cats[std::string(info(f).column)] = entry;
  }
  j["categorical"] = cats;
  return j.dump(2) + "\n";
}

MarginalSpec marginal_spec_from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("marginal spec is not valid JSON: ") + e.what());
  }
  MarginalSpec s;
  try {
    s.prevalence = j.at("prevalence").get<double>();
    for (ContinuousFeature f : kAllContinuous) {
      const auto& entry = j.at("continuous").at(std::string(info(f).column));
      for (std::size_t g = 0; g < 2; ++g) {
        auto& m = s.continuous[static_cast<std::size_t>(f)][g];
        m.mean = entry.at(kGroupKeys[g]).at("mean").get<double>();
        m.sd = entry.at(kGroupKeys[g]).at("sd").get<double>();
      }
    }
    for (CategoricalFeature f : kAllCategorical) {
      const auto& entry = j.at("categorical").at(std::string(info(f).column));
      for (std::size_t g = 0; g < 2; ++g) {
        const auto& levels = entry.at(kGroupKeys[g]);
        for (auto it = levels.begin(); it != levels.end(); ++it) {
          if (!level_index(f, it.key())) {
            throw ConfigError("marginal spec: unknown level '" + it.key() + "' for " +
                              std::string(info(f).column));
          }
        }
        auto& w = s.categorical[static_cast<std::size_t>(f)][g];
        for (auto level : info(f).levels) w.push_back(levels.at(std::string(level)).get<double>());
      }
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("marginal spec: ") + e.what());
  }
  check_feasible(s);
  return s;
}

MarginalSpec load_marginal_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open marginal spec: " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return marginal_spec_from_json_text(buf.str());
}

std::string render_history_text(const PatientRecord& r) {
  using C = CategoricalFeature;
  auto has = [&](C f) { return r.level(f) == std::uint8_t{0}; };
  auto age = r.value(ContinuousFeature::Age);
  std::ostringstream out;
  out << "A " << (age ? csv::format_fixed(*age, 0) + "-year-old " : std::string())
      << (r.level(C::Gender) == std::uint8_t{0} ? "man" : "woman") << ".";
  struct Item {
    C feature;
    const char* phrase;
  };
  constexpr std::array<Item, 8> kItems{{
      {C::SmokingHistory, "a history of smoking"},
      {C::DrinkingHistory, "a history of alcohol use"},
      {C::FamilyTumorHistory, "a family history of malignant tumors"},
      {C::Hypertension, "hypertension"},
      {C::Diabetes, "diabetes"},
      {C::TuberculosisHistory, "a history of tuberculosis"},
      {C::CardiovascularDiseases, "cardiovascular disease"},
      {C::CerebrovascularDiseases, "cerebrovascular disease"},
  }};
  for (const auto& item : kItems) {
    if (!r.level(item.feature)) continue;
    out << (has(item.feature) ? " Reports " : " Denies ") << item.phrase << ".";
  }
  return out.str();
}

std::string render_ct_text(const PatientRecord& r) {
  using C = CategoricalFeature;
  static constexpr std::array<const char*, 3> kDensityText{"solid", "mixed ground-glass",
                                                           "pure ground-glass"};
  static constexpr std::array<const char*, 6> kLocationText{
      "in the right upper lobe", "in the right middle lobe", "in the right lower lobe",
      "in the left upper lobe",  "in the left lower lobe",   "at another pulmonary site"};
  std::ostringstream out;
  out << "Contrast-enhanced chest CT shows a ";
  if (auto d = r.level(C::TumorDensity)) out << kDensityText[*d] << ' ';
  out << "nodule";
  if (auto l = r.level(C::TumorLocation)) out << ' ' << kLocationText[*l];
  const auto long_size = r.value(ContinuousFeature::TumorLongSize);
  const auto short_size = r.value(ContinuousFeature::TumorShortSize);
  if (long_size && short_size) {
    out << ", measuring " << csv::format_fixed(*long_size, 1) << " x "
        << csv::format_fixed(*short_size, 1) << " cm";
  }
  out << '.';
  if (auto s = r.level(C::Spiculation)) out << (*s == 0 ? " Spiculation is seen." : " No spiculation.");
  if (auto s = r.level(C::Lobulation)) out << (*s == 0 ? " Lobulation is seen." : " No lobulation.");
  if (auto s = r.level(C::MlnsaGe10mm)) {
    out << (*s == 0 ? " Enlarged mediastinal lymph node, short axis >= 10 mm."
                    : " No enlarged mediastinal lymph node (short axis < 10 mm).");
  }
  if (auto s = r.level(C::HlnsaGe10mm)) {
    out << (*s == 0 ? " Enlarged hilar lymph node, short axis >= 10 mm."
                    : " No enlarged hilar lymph node (short axis < 10 mm).");
  }
  return out.str();
}

Cohort synthesize_cohort(const MarginalSpec& spec, std::size_t n, std::uint64_t seed) {
  if (n < 10) throw ConfigError("synthesize_cohort requires n >= 10");
  check_feasible(spec);

  std::array<std::array<ContinuousSampler, 2>, kContinuousCount> samplers;
  for (ContinuousFeature f : kAllContinuous) {
    for (std::size_t g = 0; g < 2; ++g) {
      const auto& m = spec.continuous[static_cast<std::size_t>(f)][g];
      samplers[static_cast<std::size_t>(f)][g] = ContinuousSampler::moment_matched(m.mean, m.sd);
    }
  }

  std::mt19937_64 rng(seed);
  std::bernoulli_distribution label_dist(spec.prevalence);
  const std::size_t width = std::to_string(n).size();

  std::vector<PatientRecord> records;
  records.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    PatientRecord r;
    std::string id = std::to_string(i + 1);
    r.patient_id = "SYN-" + std::string(width - id.size(), '0') + id;
    const bool positive = label_dist(rng);
    const std::size_t g = positive ? 0 : 1;
    r.n2_positive = positive;

    for (ContinuousFeature f : kAllContinuous) {
      const auto idx = static_cast<std::size_t>(f);
      const auto& sampler = samplers[idx][g];
      double v = round_to(sampler.draw(rng), kPrecision[idx]);
      if (f == ContinuousFeature::TumorShortSize) {
        const double long_size = *r.value(ContinuousFeature::TumorLongSize);
        for (int tries = 0; v > long_size; ++tries) {
          v = tries < 10000 ? round_to(sampler.draw(rng), kPrecision[idx]) : long_size;
        }
      }
      r.set(f, v);
    }
    for (CategoricalFeature f : kAllCategorical) {
      r.set(f, draw_level(spec.categorical[static_cast<std::size_t>(f)][g], rng));
    }
    r.disease_history_text = render_history_text(r);
    r.ct_report_text = render_ct_text(r);
    records.push_back(std::move(r));
  }
  return Cohort(std::move(records), SyntheticProvenance{seed});
}

}  // namespace lnm
