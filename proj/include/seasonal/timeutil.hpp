#pragma once

#include <chrono>
#include <string>
#include <string_view>

namespace seasonal {

using Timestamp = std::chrono::sys_seconds;
using Date = std::chrono::sys_days;

/// Parses "YYYY-MM-DDTHH:MM:SS" followed by "Z" or "+00:00". Fractional
/// seconds are accepted and truncated. Throws Error(Format) otherwise.
Timestamp parse_utc(std::string_view text);
std::string format_utc(Timestamp t);

/// Parses a calendar date "YYYY-MM-DD", rejecting days that do not exist.
Date parse_date(std::string_view text);
std::string format_date(Date d);

}  // namespace seasonal
