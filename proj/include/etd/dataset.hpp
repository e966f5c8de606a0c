#pragma once

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_set>
#include <utility>
#include <vector>

#include "etd/rng.hpp"

// Calendar-aligned daily consumption data in the wide-CSV layout
//   CONS_NO,FLAG,<date_1>,...,<date_T>
// with one consumer per row, FLAG 1 marking theft, and consecutive daily
// dates in YYYY/M/D form. Missing readings are empty cells or NaN tokens.

namespace etd {

enum class Label : std::uint8_t { Normal = 0, Theft = 1 };

using Date = std::chrono::year_month_day;

inline std::chrono::sys_days to_sys_days(const Date& d) { return std::chrono::sys_days{d}; }

inline Date parse_date(std::string_view text) {
  int parts[3] = {0, 0, 0};
  std::size_t begin = 0;
  for (int i = 0; i < 3; ++i) {
    const std::size_t end = (i < 2) ? text.find('/', begin) : text.size();
    if (end == std::string_view::npos) {
      throw std::invalid_argument("dataset: bad date '" + std::string(text) + "' (want YYYY/M/D)");
    }
    const char* first = text.data() + begin;
    const char* last = text.data() + end;
    auto [p, ec] = std::from_chars(first, last, parts[i]);
    if (ec != std::errc{} || p != last || first == last) {
      throw std::invalid_argument("dataset: bad date '" + std::string(text) + "' (want YYYY/M/D)");
    }
    begin = end + 1;
  }
  const Date d{std::chrono::year{parts[0]}, std::chrono::month{static_cast<unsigned>(parts[1])},
               std::chrono::day{static_cast<unsigned>(parts[2])}};
  if (!d.ok()) {
    throw std::invalid_argument("dataset: invalid calendar date '" + std::string(text) + "'");
  }
  return d;
}

inline std::string format_date(const Date& d) {
  return std::to_string(static_cast<int>(d.year())) + "/" +
         std::to_string(static_cast<unsigned>(d.month())) + "/" +
         std::to_string(static_cast<unsigned>(d.day()));
}

// Per-day-offset (weekday, month, year), proleptic Gregorian.
// Weekday encoding: 0 = Monday .. 6 = Sunday.
struct CalendarIndex {
  Date start_date{};
  std::vector<std::uint8_t> weekday;
  std::vector<std::uint8_t> month;
  std::vector<std::int32_t> year;

  std::size_t size() const { return weekday.size(); }
  bool operator==(const CalendarIndex&) const = default;
};

inline CalendarIndex build_calendar(const Date& start, std::size_t n_days) {
  if (!start.ok()) throw std::invalid_argument("dataset: invalid start date");
  if (n_days == 0) throw std::invalid_argument("dataset: calendar needs at least one day");
  CalendarIndex cal;
  cal.start_date = start;
  cal.weekday.reserve(n_days);
  cal.month.reserve(n_days);
  cal.year.reserve(n_days);
  std::chrono::sys_days cursor = to_sys_days(start);
  for (std::size_t d = 0; d < n_days; ++d, cursor += std::chrono::days{1}) {
    const Date ymd{cursor};
    cal.weekday.push_back(static_cast<std::uint8_t>(std::chrono::weekday{cursor}.iso_encoding() - 1));
    cal.month.push_back(static_cast<std::uint8_t>(static_cast<unsigned>(ymd.month())));
    cal.year.push_back(static_cast<std::int32_t>(static_cast<int>(ymd.year())));
  }
  return cal;
}

// One consumer's daily readings; nullopt marks a missing reading.
struct ConsumerSeries {
  std::string consumer_id;
  Label label = Label::Normal;
  std::vector<std::optional<double>> values;
  Date start_date{};

  bool operator==(const ConsumerSeries&) const = default;
};

struct Dataset {
  std::vector<ConsumerSeries> series;
  CalendarIndex calendar;

  std::size_t size() const { return series.size(); }
  std::size_t n_days() const { return calendar.size(); }
  bool operator==(const Dataset&) const = default;
};

// Builds the calendar from the first series and enforces the shared-length,
// shared-start, unique-id invariants.
inline Dataset make_dataset(std::vector<ConsumerSeries> series) {
  if (series.empty()) throw std::invalid_argument("dataset: no series");
  const std::size_t n_days = series.front().values.size();
  const Date start = series.front().start_date;
  if (n_days == 0) throw std::invalid_argument("dataset: series must have at least one day");
  std::unordered_set<std::string_view> ids;
  ids.reserve(series.size());
  for (const auto& s : series) {
    if (s.values.size() != n_days) {
      throw std::invalid_argument("dataset: series '" + s.consumer_id + "' has " +
                                  std::to_string(s.values.size()) + " days, expected " +
                                  std::to_string(n_days));
    }
    if (s.start_date != start) {
      throw std::invalid_argument("dataset: series '" + s.consumer_id + "' start date differs");
    }
    if (!ids.insert(s.consumer_id).second) {
      throw std::invalid_argument("dataset: duplicate consumer id '" + s.consumer_id + "'");
    }
  }
  Dataset ds;
  ds.calendar = build_calendar(start, n_days);
  ds.series = std::move(series);
  return ds;
}

namespace detail {

inline std::vector<std::string_view> split_line(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t begin = 0;
  while (true) {
    const std::size_t comma = line.find(',', begin);
    if (comma == std::string_view::npos) {
      out.push_back(line.substr(begin));
      return out;
    }
    out.push_back(line.substr(begin, comma - begin));
    begin = comma + 1;
  }
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::string format_double(double v) {
  char buf[32];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, p);
}

}  // namespace detail

inline Dataset load_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("dataset: cannot open '" + path.string() + "'");

  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("dataset: '" + path.string() + "' is empty");
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);

  const auto header = detail::split_line(line);
  if (header.size() < 3) {
    throw std::runtime_error("dataset: malformed header: need CONS_NO,FLAG and at least one date column");
  }
  if (detail::trim(header[0]) != "CONS_NO") {
    throw std::runtime_error("dataset: malformed header: column 1 is '" + std::string(detail::trim(header[0])) +
                             "', expected 'CONS_NO'");
  }
  if (detail::trim(header[1]) != "FLAG") {
    throw std::runtime_error("dataset: malformed header: column 2 is '" + std::string(detail::trim(header[1])) +
                             "', expected 'FLAG'");
  }
  const std::size_t n_days = header.size() - 2;
  Date start{};
  std::chrono::sys_days prev{};
  for (std::size_t i = 0; i < n_days; ++i) {
    Date d{};
    try {
      d = parse_date(detail::trim(header[2 + i]));
    } catch (const std::exception& e) {
      throw std::runtime_error("dataset: malformed header: column " + std::to_string(3 + i) + ": " + e.what());
    }
    if (i == 0) {
      start = d;
    } else if (to_sys_days(d) - prev != std::chrono::days{1}) {
      throw std::runtime_error("dataset: malformed header: column " + std::to_string(3 + i) + " ('" +
                               std::string(detail::trim(header[2 + i])) +
                               "') is not one day after the previous column");
    }
    prev = to_sys_days(d);
  }

  std::vector<ConsumerSeries> series;
  std::unordered_set<std::string> seen_ids;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto cells = detail::split_line(line);
    if (cells.size() != header.size()) {
      throw std::runtime_error("dataset: line " + std::to_string(line_no) + " has " +
                               std::to_string(cells.size()) + " fields, expected " +
                               std::to_string(header.size()));
    }
    ConsumerSeries s;
    s.consumer_id = std::string(detail::trim(cells[0]));
    if (s.consumer_id.empty()) {
      throw std::runtime_error("dataset: line " + std::to_string(line_no) + ": empty consumer id");
    }
    if (!seen_ids.insert(s.consumer_id).second) {
      throw std::runtime_error("dataset: duplicate consumer id '" + s.consumer_id + "' at line " +
                               std::to_string(line_no));
    }
    const std::string_view flag = detail::trim(cells[1]);
    if (flag == "0") {
      s.label = Label::Normal;
    } else if (flag == "1") {
      s.label = Label::Theft;
    } else {
      throw std::runtime_error("dataset: line " + std::to_string(line_no) + ": FLAG must be 0 or 1, got '" +
                               std::string(flag) + "'");
    }
    s.start_date = start;
    s.values.reserve(n_days);
    for (std::size_t i = 0; i < n_days; ++i) {
      const std::string_view cell = detail::trim(cells[2 + i]);
      if (cell.empty() || cell == "NaN" || cell == "nan") {
        s.values.push_back(std::nullopt);
        continue;
      }
      double v = 0.0;
      auto [p, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (ec != std::errc{} || p != cell.data() + cell.size()) {
        throw std::runtime_error("dataset: line " + std::to_string(line_no) + ", column " +
                                 std::to_string(3 + i) + ": cannot parse '" + std::string(cell) + "'");
      }
      if (!std::isfinite(v) || v < 0.0) {
        throw std::runtime_error("dataset: line " + std::to_string(line_no) + ", column " +
                                 std::to_string(3 + i) + ": reading must be finite and >= 0, got '" +
                                 std::string(cell) + "'");
      }
      s.values.push_back(v);
    }
    series.push_back(std::move(s));
  }
  if (series.empty()) throw std::runtime_error("dataset: '" + path.string() + "' has no data rows");
  return make_dataset(std::move(series));
}

inline void write_csv(const Dataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("dataset: cannot write '" + path.string() + "'");
  out << "CONS_NO,FLAG";
  std::chrono::sys_days cursor = to_sys_days(ds.calendar.start_date);
  for (std::size_t d = 0; d < ds.n_days(); ++d, cursor += std::chrono::days{1}) {
    out << ',' << format_date(Date{cursor});
  }
  out << '\n';
  for (const auto& s : ds.series) {
    out << s.consumer_id << ',' << (s.label == Label::Theft ? '1' : '0');
    for (const auto& v : s.values) {
      out << ',';
      if (v) out << detail::format_double(*v);
    }
    out << '\n';
  }
  if (!out) throw std::runtime_error("dataset: write to '" + path.string() + "' failed");
}

// Per-label train counts are round(train_fraction * count); the remainder
// goes to test. Assignment depends only on (labels, seed); row order of the
// input is preserved in both halves.
inline std::pair<Dataset, Dataset> stratified_split(const Dataset& ds, double train_fraction,
                                                    std::uint64_t seed) {
  if (ds.series.empty()) throw std::invalid_argument("dataset: cannot split an empty dataset");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw std::invalid_argument("dataset: train fraction must be in (0,1)");
  }
  std::vector<char> in_train(ds.size(), 0);
  for (const Label label : {Label::Normal, Label::Theft}) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < ds.size(); ++i) {
      if (ds.series[i].label == label) idx.push_back(i);
    }
    if (idx.empty()) continue;
    rng::Engine eng(rng::derive_seed(seed, static_cast<std::uint64_t>(label)));
    eng.shuffle(idx);
    const auto n_train =
        static_cast<std::size_t>(std::lround(train_fraction * static_cast<double>(idx.size())));
    for (std::size_t k = 0; k < n_train && k < idx.size(); ++k) in_train[idx[k]] = 1;
  }
  Dataset train, test;
  train.calendar = ds.calendar;
  test.calendar = ds.calendar;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    (in_train[i] ? train.series : test.series).push_back(ds.series[i]);
  }
  return {std::move(train), std::move(test)};
}

}  // namespace etd
