#pragma once

// Seeded synthetic load and irradiance profiles.
//
// All series are stamped at the midpoint of each interval. With
// A = peak - base, h the hour of day at the interval midpoint and
// bump(h; c, w) = exp(-((h - c) / w)^2):
//
//   summer-day (hourly, 2023-07-15):
//     load(h) = base + A * [bump(h; 19, 3) + 0.53 bump(h; 8, 2)] + noise
//     irr(h)  = 1.0 * max(0, sin(pi (h - 6) / 13))
//   winter-day (hourly, 2023-01-15):
//     load(h) = base + A * [bump(h; 19, 3) + 0.6 bump(h; 11, 2.5)] + noise
//     irr(h)  = 0.6 * max(0, sin(pi (h - 8) / 9))
//   annual (15-minute, calendar year 2023), with d the day of year and
//   s(d) = cos(2 pi (d - 15) / 365) (+1 mid-January, -1 mid-July):
//     load = [base + A * (0.7 bump(h; 19, 3) + 0.4 bump(h; 9, 2.5))]
//            * (1 + 0.25 s(d)) * (0.8 on Saturdays and Sundays) + noise
//     irr  = (0.8 - 0.2 s(d)) * max(0, sin(pi (h - sunrise) / daylength)),
//            daylength = 12 - 4 s(d), sunrise = 12.5 - daylength / 2
//
// noise is A * 0.02 * U(-1, 1) from a 64-bit Mersenne Twister seeded with
// `seed`; load is clamped at zero. Irradiance carries a cloud factor
// 1 - 0.05 U(0, 1) from the same stream.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <string_view>

#include "microgrid/errors.hpp"
#include "microgrid/timeseries.hpp"

namespace microgrid {

enum class ProfileKind { kSummerDay, kWinterDay, kAnnual };

inline ProfileKind parse_profile_kind(std::string_view s) {
  if (s == "summer-day") return ProfileKind::kSummerDay;
  if (s == "winter-day") return ProfileKind::kWinterDay;
  if (s == "annual") return ProfileKind::kAnnual;
  throw DomainError("unknown profile kind `" + std::string(s) +
                    "` (expected summer-day, winter-day or annual)");
}

inline const char* profile_kind_name(ProfileKind k) {
  switch (k) {
    case ProfileKind::kSummerDay: return "summer-day";
    case ProfileKind::kWinterDay: return "winter-day";
    case ProfileKind::kAnnual: return "annual";
  }
  return "?";
}

struct ProfileParams {
  double base = 2.0;  // kW
  double peak = 3.5;  // kW
  std::uint64_t seed = 1;

  static ProfileParams defaults_for(ProfileKind k, std::uint64_t seed = 1) {
    switch (k) {
      case ProfileKind::kSummerDay: return {2.0, 3.5, seed};
      case ProfileKind::kWinterDay: return {2.4, 4.4, seed};
      case ProfileKind::kAnnual: return {1.6, 3.2, seed};
    }
    return {};
  }
};

struct ProfilePair {
  TimeSeries load;
  TimeSeries irradiance;
};

namespace detail {

inline double bump(double h, double centre, double width) {
  const double z = (h - centre) / width;
  return std::exp(-z * z);
}

inline double half_sine(double h, double start, double length) {
  const double x = (h - start) / length;
  if (x <= 0.0 || x >= 1.0) return 0.0;
  return std::sin(std::numbers::pi * x);
}

// Uniform [0, 1) from the top 53 bits; the mapping is fixed so the series are
// identical across standard library implementations.
inline double unit_uniform(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace detail

inline ProfilePair synth_profile(ProfileKind kind, const ProfileParams& prm) {
  if (!(prm.base >= 0.0) || !(prm.peak >= prm.base)) {
    throw DomainError("synth_profile: need peak >= base >= 0");
  }
  using namespace std::chrono;
  const double amp = prm.peak - prm.base;
  std::mt19937_64 rng(prm.seed);
  auto noise = [&] { return amp * 0.02 * (2.0 * detail::unit_uniform(rng) - 1.0); };
  auto cloud = [&] { return 1.0 - 0.05 * detail::unit_uniform(rng); };

  ProfilePair out;
  auto push = [&](Timestamp ts, double load, double irr) {
    out.load.timestamps.push_back(ts);
    out.load.values.push_back(std::max(0.0, load));
    out.irradiance.timestamps.push_back(ts);
    out.irradiance.values.push_back(std::max(0.0, irr));
  };

  if (kind == ProfileKind::kSummerDay || kind == ProfileKind::kWinterDay) {
    const bool summer = kind == ProfileKind::kSummerDay;
    const sys_days day = summer ? sys_days{2023y / July / 15} : sys_days{2023y / January / 15};
    for (int i = 0; i < 24; ++i) {
      const double h = i + 0.5;
      const double shape = summer ? detail::bump(h, 19, 3) + 0.53 * detail::bump(h, 8, 2)
                                  : detail::bump(h, 19, 3) + 0.6 * detail::bump(h, 11, 2.5);
      const double load = prm.base + amp * shape + noise();
      const double sun = summer ? 1.0 * detail::half_sine(h, 6, 13) : 0.6 * detail::half_sine(h, 8, 9);
      push(day + hours{i} + minutes{30}, load, sun * cloud());
    }
    out.load.dt_hours = out.irradiance.dt_hours = 1.0;
    return out;
  }

  const sys_days first{2023y / January / 1};
  const sys_days last{2024y / January / 1};
  for (sys_days d = first; d < last; d += days{1}) {
    const double doy = static_cast<double>((d - first).count()) + 1.0;
    const double season = std::cos(2.0 * std::numbers::pi * (doy - 15.0) / 365.0);
    const weekday wd{d};
    const double week = (wd == Saturday || wd == Sunday) ? 0.8 : 1.0;
    const double daylength = 12.0 - 4.0 * season;
    const double sunrise = 12.5 - daylength / 2.0;
    const double peak_irr = 0.8 - 0.2 * season;
    for (int q = 0; q < 96; ++q) {
      const double h = (q + 0.5) / 4.0;
      const double shape = 0.7 * detail::bump(h, 19, 3) + 0.4 * detail::bump(h, 9, 2.5);
      const double load =
          (prm.base + amp * shape) * (1.0 + 0.25 * season) * week + noise();
      const double irr = peak_irr * detail::half_sine(h, sunrise, daylength) * cloud();
      push(d + minutes{15 * q} + seconds{450}, load, irr);
    }
  }
  out.load.dt_hours = out.irradiance.dt_hours = 0.25;
  return out;
}

inline ProfilePair synth_profile(ProfileKind kind, std::uint64_t seed) {
  return synth_profile(kind, ProfileParams::defaults_for(kind, seed));
}

}  // namespace microgrid
