#include "coeval/clock.hpp"

#include <atomic>
#include <cstdio>
#include <ctime>
#include <memory>

#include "coeval/error.hpp"

namespace coeval {

Clock system_clock() {
  return [] { return std::chrono::floor<std::chrono::milliseconds>(std::chrono::system_clock::now()); };
}

Clock stepping_clock(Timestamp start, std::chrono::milliseconds step) {
  auto ticks = std::make_shared<std::atomic<std::int64_t>>(0);
  return [start, step, ticks] { return start + step * ticks->fetch_add(1); };
}

std::string format_rfc3339(Timestamp ts) {
  const auto secs = std::chrono::floor<std::chrono::seconds>(ts);
  const auto millis = (ts - secs).count();
  const std::time_t t = std::chrono::system_clock::to_time_t(secs);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[40];
  std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d.%03lldZ", tm.tm_year + 1900, tm.tm_mon + 1,
                tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec, static_cast<long long>(millis));
  return buf;
}

Timestamp parse_rfc3339(std::string_view text) {
  int year = 0, month = 0, day = 0, hour = 0, minute = 0, second = 0;
  int consumed = 0;
  const std::string s(text);
  if (std::sscanf(s.c_str(), "%4d-%2d-%2dT%2d:%2d:%2d%n", &year, &month, &day, &hour, &minute, &second,
                  &consumed) != 6) {
    throw Error(Errc::invalid_argument, "malformed RFC 3339 timestamp: " + s);
  }
  int millis = 0;
  std::size_t pos = static_cast<std::size_t>(consumed);
  if (pos < s.size() && s[pos] == '.') {
    ++pos;
    int digits = 0;
    while (pos < s.size() && s[pos] >= '0' && s[pos] <= '9') {
      if (digits < 3) millis = millis * 10 + (s[pos] - '0');
      ++digits;
      ++pos;
    }
    for (; digits < 3; ++digits) millis *= 10;
  }
  if (pos >= s.size() || s[pos] != 'Z' || pos + 1 != s.size()) {
    throw Error(Errc::invalid_argument, "timestamp must be UTC with 'Z' designator: " + s);
  }
  using namespace std::chrono;
  const auto date = year_month_day{std::chrono::year{year}, std::chrono::month{static_cast<unsigned>(month)},
                                   std::chrono::day{static_cast<unsigned>(day)}};
  if (!date.ok()) throw Error(Errc::invalid_argument, "invalid calendar date: " + s);
  return sys_days{date} + hours{hour} + minutes{minute} + seconds{second} + milliseconds{millis};
}

}  // namespace coeval
