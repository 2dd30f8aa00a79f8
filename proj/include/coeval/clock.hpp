#pragma once

#include <chrono>
#include <functional>
#include <string>
#include <string_view>

namespace coeval {

using Timestamp = std::chrono::sys_time<std::chrono::milliseconds>;
using Clock = std::function<Timestamp()>;

/// Wall clock, truncated to milliseconds.
Clock system_clock();

/// Deterministic clock: returns `start`, `start + step`, `start + 2*step`, ...
/// Thread-safe. Used for reproducible session logs.
Clock stepping_clock(Timestamp start, std::chrono::milliseconds step = std::chrono::milliseconds{1});

/// "2024-05-01T12:00:00.000Z"
std::string format_rfc3339(Timestamp ts);

/// Accepts the format produced by format_rfc3339, with or without fractional
/// seconds. Only the UTC designator "Z" is supported.
Timestamp parse_rfc3339(std::string_view text);

}  // namespace coeval
