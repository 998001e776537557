#include "ddup/datasets.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <random>
#include <string>

namespace ddup::datasets {

namespace {

const std::vector<std::string> kWorkclass{"Private",   "Self-emp-not-inc", "Self-emp-inc", "Federal-gov",
                                          "Local-gov", "State-gov",        "Without-pay",  "Never-worked"};
const std::vector<std::string> kEducation{"Preschool", "1st-4th",    "5th-6th",    "7th-8th",     "9th",
                                          "10th",      "11th",       "12th",       "HS-grad",     "Some-college",
                                          "Assoc-voc", "Assoc-acdm", "Bachelors",  "Masters",     "Prof-school",
                                          "Doctorate"};
const std::vector<std::string> kMarital{"Never-married", "Married-civ-spouse",    "Divorced",         "Separated",
                                        "Widowed",       "Married-spouse-absent", "Married-AF-spouse"};
const std::vector<std::string> kOccupation{
    "Tech-support",      "Craft-repair",    "Other-service",   "Sales",
    "Exec-managerial",   "Prof-specialty",  "Handlers-cleaners", "Machine-op-inspct",
    "Adm-clerical",      "Farming-fishing", "Transport-moving", "Priv-house-serv",
    "Protective-serv",   "Armed-Forces"};
const std::vector<std::string> kRelationship{"Wife", "Own-child", "Husband", "Not-in-family", "Other-relative", "Unmarried"};
const std::vector<std::string> kRace{"White", "Asian-Pac-Islander", "Amer-Indian-Eskimo", "Other", "Black"};
const std::vector<std::string> kSex{"Female", "Male"};
const std::vector<std::string> kCountry{
    "United-States", "Mexico",   "Philippines", "Germany",    "Canada",       "Puerto-Rico", "El-Salvador",
    "India",         "Cuba",     "England",     "Jamaica",    "South",        "China",       "Italy",
    "Dominican-Republic", "Vietnam", "Guatemala", "Japan",    "Poland",       "Columbia",    "Taiwan",
    "Haiti",         "Iran",     "Portugal",    "Nicaragua",  "Peru",         "France",      "Greece",
    "Ecuador",       "Ireland",  "Hong",        "Cambodia",   "Trinadad&Tobago", "Laos",     "Thailand",
    "Yugoslavia",    "Outlying-US", "Honduras", "Hungary",    "Scotland",     "Holand-Netherlands"};
const std::vector<std::string> kIncome{"<=50K", ">50K"};

const std::vector<double> kGainValues{594,  1055, 2174, 2407, 3103,  3325,  3908,  4386,  4650,  5013, 5178,
                                      7298, 7688, 8614, 10520, 13550, 14084, 15024, 20051, 27828, 99999};
const std::vector<double> kLossValues{625, 1408, 1485, 1590, 1602, 1672, 1740, 1876, 1887, 1902, 1977, 2001, 2258, 2415, 4356};

// Occupation mean hours and education affinity (positive favours higher education).
constexpr std::array<double, 14> kOccHours{41, 43, 34, 40, 46, 42, 37, 41, 38, 48, 45, 30, 44, 50};
constexpr std::array<double, 14> kOccEdu{0.25, -0.35, -0.45, 0.05, 0.45, 0.7, -0.55, -0.5, 0.0, -0.4, -0.4, -0.6, 0.0, 0.0};
constexpr std::array<double, 14> kOccBase{0.0, 0.6, 0.6, 0.5, 0.5, 0.4, 0.0, 0.2, 0.6, -0.6, 0.0, -2.0, -1.0, -4.5};
constexpr std::array<double, 14> kOccMale{0.0, 1.6, -0.6, 0.1, 0.3, -0.1, 1.0, 0.4, -1.2, 1.0, 1.6, -2.5, 1.0, 1.0};
constexpr std::array<double, 14> kOccIncome{0.2, 0.0, -1.0, 0.3, 0.9, 0.8, -0.8, -0.4, -0.3, -0.7, -0.2, -1.5, 0.3, 0.0};

std::size_t draw(std::mt19937_64& rng, const std::vector<double>& weights) {
  std::discrete_distribution<std::size_t> d(weights.begin(), weights.end());
  return d(rng);
}

std::size_t draw_logits(std::mt19937_64& rng, const std::vector<double>& logits) {
  const double m = *std::max_element(logits.begin(), logits.end());
  std::vector<double> w(logits.size());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = std::exp(logits[i] - m);
  return draw(rng, w);
}

}  // namespace

Schema census_schema() {
  return Schema({
      ColumnSpec::numeric("age", 17, 90),
      ColumnSpec::categorical("workclass", kWorkclass),
      ColumnSpec::categorical("education", kEducation),
      ColumnSpec::categorical("marital_status", kMarital),
      ColumnSpec::categorical("occupation", kOccupation),
      ColumnSpec::categorical("relationship", kRelationship),
      ColumnSpec::categorical("race", kRace),
      ColumnSpec::categorical("sex", kSex),
      ColumnSpec::numeric("capital_gain", 0, 99999),
      ColumnSpec::numeric("capital_loss", 0, 4356),
      ColumnSpec::numeric("hours_per_week", 1, 99),
      ColumnSpec::categorical("native_country", kCountry),
      ColumnSpec::categorical("income", kIncome),
  });
}

Table make_census_like(std::size_t rows, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::gamma_distribution<double> age_gamma(2.2, 9.5);
  std::normal_distribution<double> gauss(0.0, 1.0);

  const std::vector<double> edu_base{0.002, 0.005, 0.01, 0.02, 0.016, 0.028, 0.037, 0.013,
                                     0.32,  0.22,  0.042, 0.033, 0.165, 0.055, 0.017, 0.012};

  TableBuilder builder(census_schema());
  builder.reserve(rows);
  std::vector<double> row(13);
  for (std::size_t r = 0; r < rows; ++r) {
    const int sex = unif(rng) < 0.67 ? 1 : 0;
    const int race = static_cast<int>(draw(rng, {0.855, 0.031, 0.0096, 0.0083, 0.096}));
    const int age = std::clamp(17 + static_cast<int>(std::floor(age_gamma(rng))), 17, 90);

    std::vector<double> edu_logits(16);
    for (int e = 0; e < 16; ++e) {
      double l = std::log(edu_base[e]);
      if (age < 22 && e >= 12) l -= 2.5;
      if (age < 22 && (e == 8 || e == 9 || (e >= 5 && e <= 7))) l += 0.6;
      if (age > 60 && e < 8) l += 0.7;
      if (race == 1 && e >= 12) l += 0.8;
      if (race == 4 && e >= 12) l -= 0.4;
      edu_logits[e] = l;
    }
    const int edu = static_cast<int>(draw_logits(rng, edu_logits));
    const double edu_score = (edu - 8.5) / 4.0;  // roughly centred on HS-grad/Some-college

    std::vector<double> mw;
    if (age < 25)
      mw = {0.85, 0.10, 0.025, 0.012, 0.001, 0.01, 0.002};
    else if (age < 35)
      mw = {0.40, 0.45, 0.10, 0.03, 0.003, 0.015, 0.002};
    else if (age < 55)
      mw = {0.12, 0.58, 0.18, 0.04, 0.03, 0.03, 0.001};
    else
      mw = {0.05, 0.60, 0.12, 0.02, 0.18, 0.02, 0.001};
    if (sex == 0) {  // women: fewer married-civ-spouse entries in the census
      mw[1] *= 0.55;
      mw[4] *= 2.5;
    }
    const int marital = static_cast<int>(draw(rng, mw));

    std::vector<double> rw(6, 0.0);
    if (marital == 1 || marital == 6) {
      rw[sex == 1 ? 2 : 0] = 0.95;
      rw[4] = 0.05;
    } else if (marital == 0) {
      rw = age < 25 ? std::vector<double>{0, 0.6, 0, 0.3, 0.07, 0.03} : std::vector<double>{0, 0.1, 0, 0.6, 0.1, 0.2};
    } else {
      rw = {0, 0.03, 0, 0.55, 0.02, 0.40};
    }
    const int relationship = static_cast<int>(draw(rng, rw));

    std::vector<double> ww{0.70, 0.08, 0.035, 0.03, 0.065, 0.04, 0.0005, 0.0003};
    ww[1] *= std::exp(0.3 * edu_score + (age > 45 ? 0.5 : 0.0));
    ww[2] *= std::exp(0.6 * edu_score);
    ww[3] *= std::exp(0.4 * edu_score);
    ww[4] *= std::exp(0.5 * edu_score);
    ww[5] *= std::exp(0.6 * edu_score);
    const int workclass = static_cast<int>(draw(rng, ww));

    std::vector<double> ol(14);
    for (int o = 0; o < 14; ++o) ol[o] = kOccBase[o] + 1.6 * kOccEdu[o] * edu_score + (sex ? 0.5 : -0.5) * kOccMale[o];
    if (workclass >= 3 && workclass <= 5) ol[12] += 1.0;  // government: protective service
    const int occupation = static_cast<int>(draw_logits(rng, ol));

    double hours = kOccHours[occupation] + gauss(rng) * 7.0 - (sex ? 0.0 : 4.0);
    if (age < 22) hours -= 10.0;
    if (age > 62) hours -= 8.0;
    const int hours_pw = std::clamp(static_cast<int>(std::lround(hours)), 1, 99);

    std::vector<double> cw(41, 0.0004);
    switch (race) {
      case 0: cw[0] = 0.93; cw[1] = 0.03; cw[3] = 0.006; cw[4] = 0.006; cw[9] = 0.004; cw[13] = 0.003; cw[18] = 0.002; break;
      case 1: cw[0] = 0.45; cw[2] = 0.18; cw[7] = 0.09; cw[12] = 0.07; cw[15] = 0.06; cw[17] = 0.04; cw[20] = 0.04; cw[11] = 0.04; break;
      case 4: cw[0] = 0.92; cw[10] = 0.03; cw[21] = 0.02; cw[32] = 0.01; break;
      default: cw[0] = 0.80; cw[1] = 0.08; cw[5] = 0.05; cw[14] = 0.03; break;
    }
    const int country = static_cast<int>(draw(rng, cw));

    const double married = (marital == 1 || marital == 6) ? 1.0 : 0.0;
    // about 24% positive, as in the public file
    const double logit = -4.6 + 2.0 * (1.05 * edu_score + 0.045 * (age - 38) - 0.0012 * (age - 45) * (age - 45) +
                                       2.0 * married + 0.3 * sex + 0.035 * (hours_pw - 40) + kOccIncome[occupation]);
    const int income = unif(rng) < 1.0 / (1.0 + std::exp(-logit)) ? 1 : 0;

    double gain = 0.0;
    if (unif(rng) < (income ? 0.22 : 0.04)) {
      std::vector<double> gw(kGainValues.size());
      for (std::size_t i = 0; i < gw.size(); ++i)
        gw[i] = income ? (i >= 10 ? 2.0 : 0.5) : (i < 11 ? 2.0 : 0.2);
      gw.back() = income ? 0.6 : 0.01;
      gain = kGainValues[draw(rng, gw)];
    }
    double loss = 0.0;
    if (gain == 0.0 && unif(rng) < (income ? 0.09 : 0.035)) {
      std::vector<double> lw(kLossValues.size(), 1.0);
      if (income) lw[9] = lw[10] = 4.0;
      loss = kLossValues[draw(rng, lw)];
    }

    row = {static_cast<double>(age), static_cast<double>(workclass), static_cast<double>(edu),
           static_cast<double>(marital), static_cast<double>(occupation), static_cast<double>(relationship),
           static_cast<double>(race), static_cast<double>(sex), gain, loss, static_cast<double>(hours_pw),
           static_cast<double>(country), static_cast<double>(income)};
    builder.append(row);
  }
  return std::move(builder).build();
}

MogSpec mog_base() { return MogSpec{}; }

MogSpec mog_shifted() {
  MogSpec s;
  s.means = {-6.0, 6.0};
  return s;
}

Schema mog_schema(const MogSpec& spec) {
  std::vector<std::string> cats;
  for (int c = 1; c <= spec.categories; ++c) cats.push_back(std::to_string(c));
  return Schema({ColumnSpec::categorical("x", cats), ColumnSpec::numeric("y", spec.y_min, spec.y_max)});
}

std::vector<double> mog_peaks(const MogSpec& spec, int category) {
  std::vector<double> out;
  for (double m : spec.means) out.push_back(m + category * spec.category_shift);
  return out;
}

Table make_mog(const MogSpec& spec, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, spec.stddev);
  std::uniform_int_distribution<std::size_t> pick(0, spec.means.size() - 1);
  TableBuilder builder(mog_schema(spec));
  builder.reserve(static_cast<std::size_t>(spec.categories) * spec.rows_per_category);
  std::vector<double> row(2);
  for (int c = 0; c < spec.categories; ++c) {
    const auto peaks = mog_peaks(spec, c);
    for (int i = 0; i < spec.rows_per_category; ++i) {
      row[0] = c;
      row[1] = std::clamp(peaks[pick(rng)] + gauss(rng), spec.y_min, spec.y_max);
      builder.append(row);
    }
  }
  Table t = std::move(builder).build();
  return t.take(seeded_permutation(t.row_count(), seed + 17));
}

}  // namespace ddup::datasets
