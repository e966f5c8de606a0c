#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "etd/dataset.hpp"

// The preprocessing chain: same-weekday-in-month imputation, quantile
// winsorization, per-consumer min-max scaling. Days whose value cannot be
// recovered get the sentinel so the network can tell "unknown" from a true
// zero reading.

namespace etd {

inline constexpr double kSentinel = -1.0;

struct PreprocessConfig {
  double winsor_low_q = 0.0;
  double winsor_high_q = 0.99;
  double sentinel = kSentinel;  // fixed at -1 in practice
  enum class ScalingScope : std::uint8_t { PerConsumer };
  ScalingScope scaling_scope = ScalingScope::PerConsumer;

  void validate() const {
    if (!(winsor_low_q >= 0.0 && winsor_low_q < 0.5)) {
      throw std::invalid_argument("preprocess: winsor_low_q must be in [0, 0.5)");
    }
    if (!(winsor_high_q > 0.5 && winsor_high_q <= 1.0)) {
      throw std::invalid_argument("preprocess: winsor_high_q must be in (0.5, 1]");
    }
    if (!(sentinel < 0.0)) throw std::invalid_argument("preprocess: sentinel must be negative");
  }
};

// Network-ready series: every entry is in [0,1] or equals the sentinel.
struct ProcessedSeries {
  std::string consumer_id;
  Label label = Label::Normal;
  std::vector<double> values;

  bool operator==(const ProcessedSeries&) const = default;
};

// Replaces each missing day with the mean of the non-missing readings taken
// on the same weekday within the same calendar month and year; when no such
// reading exists the day becomes the sentinel. Only original observations
// feed the means, so imputed values never chain into other imputations.
inline ConsumerSeries fill_missing(const ConsumerSeries& series, const CalendarIndex& cal) {
  if (series.values.size() != cal.size()) {
    throw std::invalid_argument("preprocess: series '" + series.consumer_id + "' has " +
                                std::to_string(series.values.size()) + " days but calendar has " +
                                std::to_string(cal.size()));
  }
  struct Group {
    double sum = 0.0;
    std::size_t count = 0;
  };
  std::map<std::tuple<std::int32_t, std::uint8_t, std::uint8_t>, Group> groups;
  for (std::size_t d = 0; d < cal.size(); ++d) {
    if (!series.values[d]) continue;
    auto& g = groups[{cal.year[d], cal.month[d], cal.weekday[d]}];
    g.sum += *series.values[d];
    g.count += 1;
  }
  ConsumerSeries out = series;
  for (std::size_t d = 0; d < cal.size(); ++d) {
    if (out.values[d]) continue;
    const auto it = groups.find({cal.year[d], cal.month[d], cal.weekday[d]});
    if (it != groups.end() && it->second.count > 0) {
      out.values[d] = it->second.sum / static_cast<double>(it->second.count);
    } else {
      out.values[d] = kSentinel;
    }
  }
  return out;
}

// Linear-interpolation (type-7) empirical quantile of an ascending-sorted vector.
inline double quantile_sorted(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw std::invalid_argument("preprocess: quantile of empty data");
  const double h = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(h);
  if (lo + 1 >= sorted.size()) return sorted.back();
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[lo + 1] - sorted[lo]);
}

// Clamps every non-sentinel entry into the [low_q, high_q] quantile band of
// the series' own non-sentinel values. Fewer than two non-sentinel entries:
// returned unchanged.
inline ConsumerSeries winsorize(const ConsumerSeries& series, const PreprocessConfig& cfg) {
  cfg.validate();
  std::vector<double> observed;
  observed.reserve(series.values.size());
  for (const auto& v : series.values) {
    if (!v) {
      throw std::invalid_argument("preprocess: winsorize requires an imputed series (series '" +
                                  series.consumer_id + "' has missing entries)");
    }
    if (*v != cfg.sentinel) observed.push_back(*v);
  }
  if (observed.size() < 2) return series;
  std::sort(observed.begin(), observed.end());
  const double lo = quantile_sorted(observed, cfg.winsor_low_q);
  const double hi = quantile_sorted(observed, cfg.winsor_high_q);
  ConsumerSeries out = series;
  for (auto& v : out.values) {
    if (*v != cfg.sentinel) v = std::clamp(*v, lo, hi);
  }
  return out;
}

// Min/Max are taken over non-sentinel entries only; sentinels pass through.
// A flat series (Max = Min) maps to all zeros.
inline ProcessedSeries minmax_scale(const ConsumerSeries& series, const PreprocessConfig& cfg) {
  cfg.validate();
  ProcessedSeries out;
  out.consumer_id = series.consumer_id;
  out.label = series.label;
  out.values.reserve(series.values.size());
  double lo = 0.0, hi = 0.0;
  bool seen = false;
  for (const auto& v : series.values) {
    if (!v) {
      throw std::invalid_argument("preprocess: minmax_scale requires an imputed series (series '" +
                                  series.consumer_id + "' has missing entries)");
    }
    if (*v == cfg.sentinel) continue;
    if (!seen) {
      lo = hi = *v;
      seen = true;
    } else {
      lo = std::min(lo, *v);
      hi = std::max(hi, *v);
    }
  }
  for (const auto& v : series.values) {
    if (*v == cfg.sentinel) {
      out.values.push_back(cfg.sentinel);
    } else if (hi > lo) {
      out.values.push_back((*v - lo) / (hi - lo));
    } else {
      out.values.push_back(0.0);
    }
  }
  return out;
}

inline std::vector<ProcessedSeries> run_pipeline(const Dataset& ds, const PreprocessConfig& cfg) {
  cfg.validate();
  std::vector<ProcessedSeries> out;
  out.reserve(ds.size());
  for (const auto& s : ds.series) {
    out.push_back(minmax_scale(winsorize(fill_missing(s, ds.calendar), cfg), cfg));
  }
  return out;
}

// Same wide-CSV layout as the raw data; sentinels are written literally.
inline void write_processed_csv(std::span<const ProcessedSeries> series, const Date& start,
                                const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("preprocess: cannot write '" + path.string() + "'");
  out << "CONS_NO,FLAG";
  if (!series.empty()) {
    std::chrono::sys_days cursor = to_sys_days(start);
    for (std::size_t d = 0; d < series.front().values.size(); ++d, cursor += std::chrono::days{1}) {
      out << ',' << format_date(Date{cursor});
    }
  }
  out << '\n';
  for (const auto& s : series) {
    out << s.consumer_id << ',' << (s.label == Label::Theft ? '1' : '0');
    for (double v : s.values) out << ',' << detail::format_double(v);
    out << '\n';
  }
  if (!out) throw std::runtime_error("preprocess: write to '" + path.string() + "' failed");
}

}  // namespace etd
