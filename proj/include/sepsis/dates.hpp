#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace sepsis {

// Calendar date with day-level arithmetic via a proleptic-Gregorian serial
// day number (days since 1970-01-01, negative before).
struct Date {
  int year = 1970;
  int month = 1;
  int day = 1;

  static Date parse(std::string_view iso);  // "YYYY-MM-DD"
  static Date from_serial(std::int64_t days);

  std::int64_t serial() const;
  std::string to_string() const;
  bool valid() const;

  friend bool operator==(const Date&, const Date&) = default;
};

inline bool operator<(const Date& a, const Date& b) { return a.serial() < b.serial(); }
inline bool operator<=(const Date& a, const Date& b) { return a.serial() <= b.serial(); }
inline std::int64_t operator-(const Date& a, const Date& b) { return a.serial() - b.serial(); }
Date operator+(const Date& d, std::int64_t days);

// Date plus seconds-of-day. Accepts "YYYY-MM-DD", "YYYY-MM-DDTHH:MM:SS" and
// the space-separated variant.
struct DateTime {
  Date date;
  int seconds_of_day = 0;

  static DateTime parse(std::string_view iso);
  std::string to_string() const;

  friend bool operator==(const DateTime&, const DateTime&) = default;
};

}  // namespace sepsis
