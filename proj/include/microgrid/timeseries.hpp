#pragma once

// CSV ingestion and emission for load and irradiance series.
//
// Format: a header line `timestamp,<column>` followed by one row per step.
// Timestamps are ISO-8601 `YYYY-MM-DDTHH:MM:SS` (UTC, no offset), strictly
// increasing and uniformly spaced. Load is kW; irradiance is kWh/m^2 per hour
// (mean kW/m^2 over the step).

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "microgrid/errors.hpp"

namespace microgrid {

using Timestamp = std::chrono::sys_seconds;

inline constexpr std::string_view kLoadColumn = "load_kw";
inline constexpr std::string_view kIrradianceColumn = "irradiance_kwh_m2";

struct TimeSeries {
  std::vector<Timestamp> timestamps;
  std::vector<double> values;
  double dt_hours = 1.0;

  std::size_t size() const { return values.size(); }
  bool operator==(const TimeSeries&) const = default;
};

// Returns false on any deviation from YYYY-MM-DDTHH:MM:SS.
inline bool parse_iso8601(std::string_view text, Timestamp& out) {
  if (text.size() != 19 || text[4] != '-' || text[7] != '-' || text[10] != 'T' ||
      text[13] != ':' || text[16] != ':') {
    return false;
  }
  auto num = [&](std::size_t pos, std::size_t len, int& v) {
    v = 0;
    for (std::size_t i = pos; i < pos + len; ++i) {
      if (text[i] < '0' || text[i] > '9') return false;
      v = v * 10 + (text[i] - '0');
    }
    return true;
  };
  int y, mo, d, h, mi, s;
  if (!num(0, 4, y) || !num(5, 2, mo) || !num(8, 2, d) || !num(11, 2, h) || !num(14, 2, mi) ||
      !num(17, 2, s)) {
    return false;
  }
  using namespace std::chrono;
  const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)},
                           day{static_cast<unsigned>(d)}};
  if (!ymd.ok() || h > 23 || mi > 59 || s > 59) return false;
  out = sys_days{ymd} + hours{h} + minutes{mi} + seconds{s};
  return true;
}

inline std::string format_iso8601(Timestamp ts) {
  using namespace std::chrono;
  const sys_days day_start = floor<days>(ts);
  const year_month_day ymd{day_start};
  const hh_mm_ss<seconds> tod{ts - day_start};
  char buf[64];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02lld:%02lld:%02lld",
                static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                static_cast<unsigned>(ymd.day()), static_cast<long long>(tod.hours().count()),
                static_cast<long long>(tod.minutes().count()),
                static_cast<long long>(tod.seconds().count()));
  return buf;
}

// Shortest decimal text that reads back to the same double.
inline std::string format_double(double v) {
  char buf[40];
  for (int prec = 1; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  const auto e = s.find_last_not_of(" \t\r");
  return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
}

}  // namespace detail

// Validates spacing and sign and fills dt_hours.
inline void validate_series(TimeSeries& ts, const std::string& origin) {
  if (ts.values.empty()) throw ParseError(ParseError::Kind::kEmpty, origin + ": no data rows");
  for (std::size_t i = 0; i < ts.values.size(); ++i) {
    if (!(ts.values[i] >= 0.0)) {
      throw ParseError(ParseError::Kind::kNegative,
                       origin + ": negative value at row " + std::to_string(i + 1));
    }
  }
  if (ts.timestamps.size() < 2) {
    ts.dt_hours = 1.0;
    return;
  }
  const auto first = (ts.timestamps[1] - ts.timestamps[0]).count();
  for (std::size_t i = 1; i < ts.timestamps.size(); ++i) {
    const auto step = (ts.timestamps[i] - ts.timestamps[i - 1]).count();
    if (step <= 0) {
      throw ParseError(ParseError::Kind::kNonMonotonic,
                       origin + ": timestamps not strictly increasing at row " +
                           std::to_string(i + 1));
    }
    if (std::abs(static_cast<double>(step - first)) > 1e-6 * static_cast<double>(first)) {
      throw ParseError(ParseError::Kind::kNonUniform,
                       origin + ": non-uniform spacing at row " + std::to_string(i + 1));
    }
  }
  ts.dt_hours = static_cast<double>(first) / 3600.0;
}

inline TimeSeries read_series_csv(std::istream& in, std::string_view column,
                                  const std::string& origin) {
  std::string line;
  if (!std::getline(in, line) || detail::trim(line).empty()) {
    throw ParseError(ParseError::Kind::kEmpty, origin + ": empty file");
  }
  const auto header = detail::split_csv_line(detail::trim(line));
  if (header.empty() || detail::trim(header[0]) != "timestamp" ||
      (header.size() >= 2 && detail::trim(header[1]) != column) || header.size() < 2) {
    throw ParseError(ParseError::Kind::kMissingColumn,
                     origin + ": header must be `timestamp," + std::string(column) + "`");
  }
  if (header.size() > 2) {
    throw ParseError(ParseError::Kind::kExtraColumn,
                     origin + ": unexpected column `" + detail::trim(header[2]) + "`");
  }
  TimeSeries ts;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() < 2) {
      throw ParseError(ParseError::Kind::kMissingColumn,
                       origin + ": row " + std::to_string(row) + " has too few fields");
    }
    if (cells.size() > 2) {
      throw ParseError(ParseError::Kind::kExtraColumn,
                       origin + ": row " + std::to_string(row) + " has too many fields");
    }
    Timestamp tp;
    if (!parse_iso8601(detail::trim(cells[0]), tp)) {
      throw ParseError(ParseError::Kind::kMalformed,
                       origin + ": bad timestamp at row " + std::to_string(row));
    }
    const std::string v = detail::trim(cells[1]);
    char* end = nullptr;
    const double x = std::strtod(v.c_str(), &end);
    if (v.empty() || end != v.c_str() + v.size() || !std::isfinite(x)) {
      throw ParseError(ParseError::Kind::kMalformed,
                       origin + ": bad number at row " + std::to_string(row));
    }
    ts.timestamps.push_back(tp);
    ts.values.push_back(x);
  }
  validate_series(ts, origin);
  return ts;
}

inline TimeSeries read_series_csv(const std::string& path, std::string_view column) {
  std::ifstream in(path);
  if (!in) throw ParseError(ParseError::Kind::kIo, path + ": cannot open");
  return read_series_csv(in, column, path);
}

// Calendar-day means, stamped at noon of each day.
inline TimeSeries daily_means(const TimeSeries& ts) {
  using namespace std::chrono;
  std::map<sys_days, std::pair<double, std::size_t>> acc;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    auto& [sum, count] = acc[floor<days>(ts.timestamps[i])];
    sum += ts.values[i];
    ++count;
  }
  TimeSeries out;
  for (const auto& [day, sc] : acc) {
    out.timestamps.push_back(day + hours{12});
    out.values.push_back(sc.first / static_cast<double>(sc.second));
  }
  validate_series(out, "daily means");
  out.dt_hours = 24.0;
  return out;
}

inline TimeSeries parse_load_csv(const std::string& path, bool daily_mean = false) {
  TimeSeries ts = read_series_csv(path, kLoadColumn);
  return daily_mean ? daily_means(ts) : ts;
}

inline TimeSeries parse_irradiance_csv(const std::string& path, bool daily_mean = false) {
  TimeSeries ts = read_series_csv(path, kIrradianceColumn);
  return daily_mean ? daily_means(ts) : ts;
}

inline void write_series_csv(std::ostream& out, const TimeSeries& ts, std::string_view column) {
  out << "timestamp," << column << '\n';
  for (std::size_t i = 0; i < ts.size(); ++i) {
    out << format_iso8601(ts.timestamps[i]) << ',' << format_double(ts.values[i]) << '\n';
  }
}

inline void write_series_csv(const std::string& path, const TimeSeries& ts,
                             std::string_view column) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError(ParseError::Kind::kIo, path + ": cannot write");
  write_series_csv(out, ts, column);
  if (!out) throw ParseError(ParseError::Kind::kIo, path + ": write failed");
}

}  // namespace microgrid
