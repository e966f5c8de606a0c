#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "etd/dataset.hpp"
#include "etd/rng.hpp"

// Synthetic AMI data in the same wide-CSV layout the loader consumes: smooth
// normal load profiles (base level, weekend uplift, annual sinusoid, Gaussian
// noise) with a configurable fraction of consumers rewritten by an injected
// theft pattern. Everything is a pure function of the config.

namespace etd {

enum class AttackType : std::uint8_t {
  UniformScale = 0,  // every day multiplied by one alpha ~ U(0.1, 0.8)
  IntervalZero = 1,  // a contiguous window of 10-40% of days zeroed
  DailyScale = 2,    // each day multiplied by its own beta ~ U(0.1, 1.0)
};

struct SynthConfig {
  std::size_t n_consumers = 2000;
  std::size_t n_days = 365;
  Date start_date{std::chrono::year{2014}, std::chrono::month{1}, std::chrono::day{1}};
  double theft_fraction = 0.08;
  double missing_rate = 0.0;
  // Weights over {UniformScale, IntervalZero, DailyScale}. UniformScale gets
  // zero weight by default: a uniform rescale is invisible once each consumer
  // is min-max scaled, so it carries no learnable signal through the default
  // preprocessing. Enable it deliberately when studying scale-sensitive
  // features.
  std::array<double, 3> attack_mix{0.0, 1.0, 1.0};
  std::uint64_t seed = 0;

  // Shape knobs for the normal profile, as fractions of the consumer's base
  // level. noise_frac 0.1 puts the Gaussian sigma at 10% of base.
  double weekend_frac = 0.2;
  double seasonal_frac = 0.25;
  double noise_frac = 0.1;

  void validate() const {
    if (n_consumers == 0) throw std::invalid_argument("synth: n_consumers must be >= 1");
    if (n_days == 0) throw std::invalid_argument("synth: n_days must be >= 1");
    if (!start_date.ok()) throw std::invalid_argument("synth: invalid start date");
    if (!(theft_fraction > 0.0 && theft_fraction < 1.0)) {
      throw std::invalid_argument("synth: theft_fraction must be in (0,1)");
    }
    if (!(missing_rate >= 0.0 && missing_rate < 1.0)) {
      throw std::invalid_argument("synth: missing_rate must be in [0,1)");
    }
    double total = 0.0;
    for (double w : attack_mix) {
      if (w < 0.0) throw std::invalid_argument("synth: attack weights must be non-negative");
      total += w;
    }
    if (!(total > 0.0)) throw std::invalid_argument("synth: attack weights must not all be zero");
    if (weekend_frac < 0.0 || seasonal_frac < 0.0 || noise_frac < 0.0) {
      throw std::invalid_argument("synth: shape fractions must be non-negative");
    }
  }
};

namespace detail {
inline constexpr std::uint64_t kNormalStream = 0x9031;
inline constexpr std::uint64_t kAttackStream = 0xa77a;
inline constexpr std::uint64_t kVictimStream = 0x71c7;

inline double round4(double v) { return std::round(v * 1e4) / 1e4; }

inline std::string consumer_name(std::size_t index) {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "C%05zu", index);
  return buf;
}
}  // namespace detail

inline ConsumerSeries generate_normal(const SynthConfig& cfg, std::size_t consumer_index,
                                      const CalendarIndex& cal) {
  cfg.validate();
  if (cal.size() != cfg.n_days) throw std::invalid_argument("synth: calendar/config day mismatch");
  rng::Engine eng(rng::derive_seed(rng::derive_seed(cfg.seed, detail::kNormalStream), consumer_index));
  const double base = eng.uniform(5.0, 25.0);
  const double phase = eng.uniform(0.0, 365.25);

  ConsumerSeries s;
  s.consumer_id = detail::consumer_name(consumer_index);
  s.label = Label::Normal;
  s.start_date = cfg.start_date;
  s.values.reserve(cfg.n_days);
  constexpr double kTwoPi = 2.0 * 3.14159265358979323846;
  for (std::size_t d = 0; d < cfg.n_days; ++d) {
    const bool weekend = cal.weekday[d] >= 5;
    double v = base;
    if (weekend) v += cfg.weekend_frac * base;
    v += cfg.seasonal_frac * base * std::sin(kTwoPi * (static_cast<double>(d) + phase) / 365.25);
    if (cfg.noise_frac > 0.0) v += cfg.noise_frac * base * eng.normal(0.0, 1.0);
    s.values.push_back(detail::round4(std::max(0.0, v)));
  }
  for (std::size_t d = 0; d < cfg.n_days; ++d) {
    if (cfg.missing_rate > 0.0 && eng.uniform() < cfg.missing_rate) s.values[d] = std::nullopt;
  }
  return s;
}

inline ConsumerSeries generate_normal(const SynthConfig& cfg, std::size_t consumer_index) {
  return generate_normal(cfg, consumer_index, build_calendar(cfg.start_date, cfg.n_days));
}

// --- attack primitives; missing readings stay missing ---

inline ConsumerSeries scale_uniform(const ConsumerSeries& series, double alpha) {
  if (!(alpha >= 0.0)) throw std::invalid_argument("synth: scale factor must be >= 0");
  ConsumerSeries out = series;
  for (auto& v : out.values) {
    if (v) v = *v * alpha;
  }
  return out;
}

inline ConsumerSeries zero_interval(const ConsumerSeries& series, std::size_t start, std::size_t len) {
  if (start + len > series.values.size()) {
    throw std::invalid_argument("synth: zero window exceeds the series");
  }
  ConsumerSeries out = series;
  for (std::size_t d = start; d < start + len; ++d) {
    if (out.values[d]) out.values[d] = 0.0;
  }
  return out;
}

inline ConsumerSeries scale_daily(const ConsumerSeries& series, std::span<const double> factors) {
  if (factors.size() != series.values.size()) {
    throw std::invalid_argument("synth: need one factor per day");
  }
  ConsumerSeries out = series;
  for (std::size_t d = 0; d < factors.size(); ++d) {
    if (!(factors[d] >= 0.0)) throw std::invalid_argument("synth: scale factor must be >= 0");
    if (out.values[d]) out.values[d] = *out.values[d] * factors[d];
  }
  return out;
}

inline ConsumerSeries apply_attack(const ConsumerSeries& series, AttackType attack,
                                   std::uint64_t seed) {
  rng::Engine eng(seed);
  const std::size_t t = series.values.size();
  ConsumerSeries out;
  switch (attack) {
    case AttackType::UniformScale:
      out = scale_uniform(series, eng.uniform(0.1, 0.8));
      break;
    case AttackType::IntervalZero: {
      const double frac = eng.uniform(0.1, 0.4);
      const auto len = std::clamp<std::size_t>(
          static_cast<std::size_t>(std::lround(frac * static_cast<double>(t))), 1, t);
      const std::size_t start = static_cast<std::size_t>(eng.below(t - len + 1));
      out = zero_interval(series, start, len);
      break;
    }
    case AttackType::DailyScale: {
      std::vector<double> factors(t);
      for (auto& f : factors) f = eng.uniform(0.1, 1.0);
      out = scale_daily(series, factors);
      break;
    }
    default:
      throw std::invalid_argument("synth: unknown attack type");
  }
  out.label = Label::Theft;
  return out;
}

// round(n_consumers * theft_fraction) consumers are attacked, types drawn by
// attack_mix. Deterministic in cfg; write the result with write_csv to get
// the on-disk layout.
inline Dataset generate_dataset(const SynthConfig& cfg) {
  cfg.validate();
  const CalendarIndex cal = build_calendar(cfg.start_date, cfg.n_days);
  const auto n_theft = static_cast<std::size_t>(
      std::lround(static_cast<double>(cfg.n_consumers) * cfg.theft_fraction));

  rng::Engine victim_eng(rng::derive_seed(cfg.seed, detail::kVictimStream));
  std::vector<std::size_t> order(cfg.n_consumers);
  std::iota(order.begin(), order.end(), std::size_t{0});
  victim_eng.shuffle(order);
  std::vector<char> is_victim(cfg.n_consumers, 0);
  for (std::size_t i = 0; i < n_theft && i < order.size(); ++i) is_victim[order[i]] = 1;

  const double mix_total = cfg.attack_mix[0] + cfg.attack_mix[1] + cfg.attack_mix[2];
  const auto draw_attack = [&]() {
    const double u = victim_eng.uniform() * mix_total;
    double acc = 0.0;
    for (std::size_t a = 0; a < cfg.attack_mix.size(); ++a) {
      acc += cfg.attack_mix[a];
      if (u < acc) return static_cast<AttackType>(a);
    }
    return AttackType::DailyScale;
  };

  std::vector<ConsumerSeries> series;
  series.reserve(cfg.n_consumers);
  const std::uint64_t attack_base = rng::derive_seed(cfg.seed, detail::kAttackStream);
  for (std::size_t i = 0; i < cfg.n_consumers; ++i) {
    ConsumerSeries s = generate_normal(cfg, i, cal);
    if (is_victim[i]) {
      s = apply_attack(s, draw_attack(), rng::derive_seed(attack_base, i));
    }
    series.push_back(std::move(s));
  }
  return make_dataset(std::move(series));
}

inline nlohmann::json synth_manifest_json(const SynthConfig& cfg) {
  return {{"n_consumers", cfg.n_consumers},
          {"n_days", cfg.n_days},
          {"start_date", format_date(cfg.start_date)},
          {"theft_fraction", cfg.theft_fraction},
          {"missing_rate", cfg.missing_rate},
          {"attack_mix",
           {{"uniform_scale", cfg.attack_mix[0]},
            {"interval_zero", cfg.attack_mix[1]},
            {"daily_scale", cfg.attack_mix[2]}}},
          {"seed", cfg.seed},
          {"weekend_frac", cfg.weekend_frac},
          {"seasonal_frac", cfg.seasonal_frac},
          {"noise_frac", cfg.noise_frac}};
}

}  // namespace etd
