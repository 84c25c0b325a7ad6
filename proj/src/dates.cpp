#include "sepsis/dates.hpp"

#include <array>
#include <cstdio>

#include "sepsis/errors.hpp"

namespace sepsis {

namespace {

constexpr std::array<int, 12> kDaysInMonth = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};

bool is_leap(int y) { return (y % 4 == 0 && y % 100 != 0) || y % 400 == 0; }

int days_in_month(int y, int m) {
  if (m == 2 && is_leap(y)) return 29;
  return kDaysInMonth[m - 1];
}

// Howard Hinnant's civil-days algorithm.
std::int64_t days_from_civil(int y, int m, int d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153u * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

void civil_from_days(std::int64_t z, int& y, int& m, int& d) {
  z += 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const std::int64_t yy = static_cast<std::int64_t>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  d = static_cast<int>(doy - (153 * mp + 2) / 5 + 1);
  m = static_cast<int>(mp + (mp < 10 ? 3 : -9));
  y = static_cast<int>(yy + (m <= 2));
}

int parse_int_field(std::string_view s, std::size_t pos, std::size_t len) {
  int v = 0;
  for (std::size_t i = pos; i < pos + len; ++i) {
    if (i >= s.size() || s[i] < '0' || s[i] > '9') {
      throw ValidationError("invalid date/time literal: '" + std::string(s) + "'");
    }
    v = v * 10 + (s[i] - '0');
  }
  return v;
}

}  // namespace

bool Date::valid() const {
  return month >= 1 && month <= 12 && day >= 1 && day <= days_in_month(year, month);
}

Date Date::parse(std::string_view iso) {
  if (iso.size() != 10 || iso[4] != '-' || iso[7] != '-') {
    throw ValidationError("invalid date literal: '" + std::string(iso) + "' (want YYYY-MM-DD)");
  }
  Date d;
  d.year = parse_int_field(iso, 0, 4);
  d.month = parse_int_field(iso, 5, 2);
  d.day = parse_int_field(iso, 8, 2);
  if (!d.valid()) {
    throw ValidationError("invalid calendar date: '" + std::string(iso) + "'");
  }
  return d;
}

std::int64_t Date::serial() const { return days_from_civil(year, month, day); }

Date Date::from_serial(std::int64_t days) {
  Date d;
  civil_from_days(days, d.year, d.month, d.day);
  return d;
}

std::string Date::to_string() const {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02d-%02d", year, month, day);
  return buf;
}

Date operator+(const Date& d, std::int64_t days) { return Date::from_serial(d.serial() + days); }

DateTime DateTime::parse(std::string_view iso) {
  DateTime dt;
  if (iso.size() == 10) {
    dt.date = Date::parse(iso);
    return dt;
  }
  if (iso.size() < 16 || (iso[10] != 'T' && iso[10] != ' ')) {
    throw ValidationError("invalid date-time literal: '" + std::string(iso) + "'");
  }
  dt.date = Date::parse(iso.substr(0, 10));
  const int hh = parse_int_field(iso, 11, 2);
  const int mm = parse_int_field(iso, 14, 2);
  int ss = 0;
  if (iso.size() >= 19) {
    if (iso[16] != ':') throw ValidationError("invalid date-time literal: '" + std::string(iso) + "'");
    ss = parse_int_field(iso, 17, 2);
  } else if (iso.size() != 16 || iso[13] != ':') {
    throw ValidationError("invalid date-time literal: '" + std::string(iso) + "'");
  }
  if (iso[13] != ':' || hh > 23 || mm > 59 || ss > 60) {
    throw ValidationError("invalid time of day in: '" + std::string(iso) + "'");
  }
  dt.seconds_of_day = hh * 3600 + mm * 60 + ss;
  return dt;
}

std::string DateTime::to_string() const {
  char buf[32];
  const int hh = seconds_of_day / 3600;
  const int mm = (seconds_of_day / 60) % 60;
  const int ss = seconds_of_day % 60;
  std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d", date.year, date.month, date.day,
                hh, mm, ss);
  return buf;
}

}  // namespace sepsis
