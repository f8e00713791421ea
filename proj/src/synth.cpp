#include "hypox/synth.hpp"

#include <cmath>
#include <fstream>
#include <random>

#include "hypox/csv.hpp"

namespace hypox::synth {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Distribution helpers written against raw engine output so that a seed
// yields the same data with any standard library.
struct Rng {
  std::mt19937_64 engine;

  double uniform() { return static_cast<double>(engine() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  int integer(int lo, int hi) { return lo + static_cast<int>(engine() % static_cast<std::uint64_t>(hi - lo + 1)); }
  bool chance(double p) { return uniform() < p; }
  double normal() {
    const double u1 = std::max(uniform(), 1e-300), u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2 * kPi * u2);
  }
};

struct Episode {
  double start, duration, depth;
};

// Raised-cosine dip; 0 outside the episode, 1 at its centre.
double dip(double t, const Episode& e) {
  if (t < e.start || t > e.start + e.duration) return 0.0;
  return 0.5 * (1 - std::cos(2 * kPi * (t - e.start) / e.duration));
}

double round1(double v) { return std::round(v * 10) / 10; }

template <typename T>
void read_key(const nlohmann::json& v, T& out) {
  out = v.get<T>();
}

}  // namespace

void SynthConfig::validate() const {
  auto fail = [](const std::string& m) { throw Error(ErrorKind::Config, "synth." + m); };
  if (patients == 0) fail("patients must be positive");
  if (max_admissions < 1) fail("max_admissions must be >= 1");
  if (min_duration_minutes < 2 || max_duration_minutes < min_duration_minutes) fail("duration range is invalid");
  if (min_step_minutes < 1 || max_step_minutes < min_step_minutes) fail("step range is invalid");
  for (double p : {missing_fraction, copd_fraction, pediatric_fraction, long_gap_probability, duplicate_probability,
                   implausible_probability}) {
    if (!(p >= 0 && p <= 1)) fail("probabilities must lie in [0, 1]");
  }
  if (!(episodes_per_hour >= 0)) fail("episodes_per_hour must be >= 0");
}

nlohmann::json SynthConfig::to_json() const {
  return {{"patients", patients},
          {"max_admissions", max_admissions},
          {"min_duration_minutes", min_duration_minutes},
          {"max_duration_minutes", max_duration_minutes},
          {"min_step_minutes", min_step_minutes},
          {"max_step_minutes", max_step_minutes},
          {"missing_fraction", missing_fraction},
          {"copd_fraction", copd_fraction},
          {"pediatric_fraction", pediatric_fraction},
          {"episodes_per_hour", episodes_per_hour},
          {"long_gap_probability", long_gap_probability},
          {"duplicate_probability", duplicate_probability},
          {"implausible_probability", implausible_probability}};
}

SynthConfig SynthConfig::from_json(const nlohmann::json& j, SynthConfig base) {
  if (!j.is_object()) throw Error(ErrorKind::Config, "synth config must be an object");
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "patients") read_key(value, base.patients);
      else if (key == "max_admissions") read_key(value, base.max_admissions);
      else if (key == "min_duration_minutes") read_key(value, base.min_duration_minutes);
      else if (key == "max_duration_minutes") read_key(value, base.max_duration_minutes);
      else if (key == "min_step_minutes") read_key(value, base.min_step_minutes);
      else if (key == "max_step_minutes") read_key(value, base.max_step_minutes);
      else if (key == "missing_fraction") read_key(value, base.missing_fraction);
      else if (key == "copd_fraction") read_key(value, base.copd_fraction);
      else if (key == "pediatric_fraction") read_key(value, base.pediatric_fraction);
      else if (key == "episodes_per_hour") read_key(value, base.episodes_per_hour);
      else if (key == "long_gap_probability") read_key(value, base.long_gap_probability);
      else if (key == "duplicate_probability") read_key(value, base.duplicate_probability);
      else if (key == "implausible_probability") read_key(value, base.implausible_probability);
      else throw Error(ErrorKind::Config, "unknown synth key '" + key + "'");
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::Config, "synth." + key + ": " + e.what());
    }
  }
  base.validate();
  return base;
}

std::vector<pipeline::RawRecord> generate(const SynthConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng{std::mt19937_64(seed)};
  std::vector<pipeline::RawRecord> out;
  const Minute epoch = parse_charttime("2150-01-01 00:00");
  std::size_t hadm_counter = 0;

  for (std::size_t p = 0; p < config.patients; ++p) {
    const bool pediatric = rng.chance(config.pediatric_fraction);
    const double age = pediatric ? std::floor(rng.uniform(1, 18)) : std::floor(rng.uniform(18, 90));
    const bool copd = !pediatric && rng.chance(config.copd_fraction);
    const double gender = rng.chance(0.5) ? 1.0 : 0.0;
    const double height = pediatric ? round1(80 + age * 5.5 + 6 * rng.normal()) : round1(170 + 9 * rng.normal());
    const double weight = round1(pediatric ? 10 + age * 3 + 3 * rng.normal() : 78 + 14 * rng.normal());
    const int race = rng.integer(0, kRaceUndefined);
    const std::string subject = std::to_string(10000 + p);
    Minute start = epoch + static_cast<Minute>(rng.integer(0, 365 * 1440));

    const int n_adm = rng.integer(1, config.max_admissions);
    for (int a = 0; a < n_adm; ++a) {
      const std::string hadm = std::to_string(20000 + hadm_counter++);
      const int duration = rng.integer(config.min_duration_minutes, config.max_duration_minutes);
      const bool height_missing = rng.chance(0.1);

      const double spo2_base = copd ? rng.uniform(91, 93) : rng.uniform(96.5, 98.5);
      const double hr_base = (pediatric ? 100 : 78) + 8 * rng.normal();
      const double rr_base = (pediatric ? 22 : 16) + 2 * rng.normal();
      const double sbp_base = (pediatric ? 100 : 122) + 10 * rng.normal();
      const double dbp_base = (pediatric ? 60 : 72) + 6 * rng.normal();
      const double temp_base = 36.9 + 0.3 * rng.normal();
      const double period = rng.uniform(60, 240), phase = rng.uniform(0, 2 * kPi);

      std::vector<Episode> episodes;
      const int n_ep = static_cast<int>(std::floor(config.episodes_per_hour * duration / 60.0 + rng.uniform()));
      for (int e = 0; e < n_ep; ++e) {
        episodes.push_back({rng.uniform(0, duration), rng.uniform(15, 90), rng.uniform(3, 13)});
      }

      std::vector<int> times{0};
      while (times.back() < duration) times.push_back(times.back() + rng.integer(config.min_step_minutes, config.max_step_minutes));
      if (rng.chance(config.long_gap_probability) && times.size() > 4) {
        const std::size_t at = times.size() / 2;
        for (std::size_t i = at; i < times.size(); ++i) times[i] += 75;
      }

      for (int t : times) {
        double desat = 0;
        for (const auto& e : episodes) desat = std::max(desat, e.depth * dip(t, e));
        const double wave = std::sin(2 * kPi * t / period + phase);
        pipeline::RawRecord r;
        r.subject_id = subject;
        r.hadm_id = hadm;
        r.charttime = start + t;
        auto& v = r.values;
        v[idx(Column::SpO2)] = std::round(std::min(100.0, spo2_base + 0.8 * wave - desat + 0.6 * rng.normal()));
        v[idx(Column::HeartRate)] = std::round(hr_base + 5 * wave + 1.2 * desat + 3 * rng.normal());
        v[idx(Column::RespRate)] = std::round(rr_base + 1.5 * wave + 0.6 * desat + rng.normal());
        v[idx(Column::Sbp)] = std::round(sbp_base + 6 * wave + 4 * rng.normal());
        v[idx(Column::Dbp)] = std::round(dbp_base + 4 * wave + 3 * rng.normal());
        v[idx(Column::Temperature)] = round1(temp_base + 0.2 * wave + 0.1 * rng.normal());
        v[idx(Column::Age)] = age;
        v[idx(Column::Gender)] = gender;
        v[idx(Column::Height)] = height_missing ? std::nan("") : height;
        v[idx(Column::Weight)] = weight;
        v[idx(Column::Race)] = race;
        v[idx(Column::Copd)] = copd ? 1.0 : 0.0;
        for (auto k : kAllVitals) {
          if (rng.chance(config.missing_fraction)) v[idx(column_of(k))] = std::nan("");
        }
        if (rng.chance(config.implausible_probability)) v[idx(Column::HeartRate)] = 400;
        out.push_back(r);
        if (rng.chance(config.duplicate_probability)) {
          // A second charting at the same minute with one corrected vital.
          pipeline::RawRecord dup = r;
          dup.values = missing_row();
          dup.values[idx(Column::HeartRate)] = std::round(hr_base + 3 * rng.normal());
          out.push_back(dup);
        }
      }
      start += duration + rng.integer(1440, 30 * 1440);
    }
  }
  return out;
}

void write_raw_csv(const std::string& path, const std::vector<pipeline::RawRecord>& records,
                   const std::string& provenance) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::MissingInput, "cannot write '" + path + "'");
  if (!provenance.empty()) out << "# " << provenance << '\n';
  csv::write_row(out, {"subject_id", "hadm_id", "charttime", "heart_rate", "resp_rate", "spo2", "sbp", "dbp",
                       "temperature", "age", "gender", "height", "weight", "race", "copd"});
  auto num = [](double v) { return csv::format_double(v); };
  for (const auto& r : records) {
    const auto& v = r.values;
    const double g = v[idx(Column::Gender)], race = v[idx(Column::Race)], copd = v[idx(Column::Copd)];
    csv::write_row(out, {r.subject_id, r.hadm_id, format_charttime(r.charttime), num(v[idx(Column::HeartRate)]),
                         num(v[idx(Column::RespRate)]), num(v[idx(Column::SpO2)]), num(v[idx(Column::Sbp)]),
                         num(v[idx(Column::Dbp)]), num(v[idx(Column::Temperature)]), num(v[idx(Column::Age)]),
                         std::isnan(g) ? "" : (g == 1.0 ? "M" : "F"), num(v[idx(Column::Height)]),
                         num(v[idx(Column::Weight)]),
                         std::isnan(race) ? "" : std::string(kRaceCategories[static_cast<std::size_t>(race)]),
                         std::isnan(copd) ? "" : (copd == 1.0 ? "1" : "0")});
  }
}

}  // namespace hypox::synth
