#include "seasonal/timeutil.hpp"

#include <cctype>
#include <cstdio>

#include "seasonal/error.hpp"

namespace seasonal {
namespace {

bool read_digits(std::string_view text, std::size_t pos, std::size_t count, int& out) {
    if (pos + count > text.size()) {
        return false;
    }
    int value = 0;
    for (std::size_t i = pos; i < pos + count; ++i) {
        if (!std::isdigit(static_cast<unsigned char>(text[i]))) {
            return false;
        }
        value = value * 10 + (text[i] - '0');
    }
    out = value;
    return true;
}

std::chrono::year_month_day checked_ymd(int y, int m, int d, std::string_view text) {
    const std::chrono::year_month_day ymd{std::chrono::year{y},
                                          std::chrono::month{static_cast<unsigned>(m)},
                                          std::chrono::day{static_cast<unsigned>(d)}};
    if (!ymd.ok()) {
        throw Error(ErrorCode::Format, "invalid calendar date '" + std::string(text) + "'");
    }
    return ymd;
}

}  // namespace

Date parse_date(std::string_view text) {
    int y = 0, m = 0, d = 0;
    if (text.size() != 10 || !read_digits(text, 0, 4, y) || text[4] != '-' ||
        !read_digits(text, 5, 2, m) || text[7] != '-' || !read_digits(text, 8, 2, d)) {
        throw Error(ErrorCode::Format, "expected YYYY-MM-DD, got '" + std::string(text) + "'");
    }
    return Date{checked_ymd(y, m, d, text)};
}

Timestamp parse_utc(std::string_view text) {
    int y = 0, mo = 0, d = 0, h = 0, mi = 0, s = 0;
    const bool head_ok = text.size() >= 19 && read_digits(text, 0, 4, y) && text[4] == '-' &&
                         read_digits(text, 5, 2, mo) && text[7] == '-' &&
                         read_digits(text, 8, 2, d) && (text[10] == 'T' || text[10] == ' ') &&
                         read_digits(text, 11, 2, h) && text[13] == ':' &&
                         read_digits(text, 14, 2, mi) && text[16] == ':' &&
                         read_digits(text, 17, 2, s);
    if (!head_ok) {
        throw Error(ErrorCode::Format, "expected ISO-8601 UTC timestamp, got '" + std::string(text) + "'");
    }
    std::size_t pos = 19;
    if (pos < text.size() && text[pos] == '.') {
        ++pos;
        const std::size_t digits_begin = pos;
        while (pos < text.size() && std::isdigit(static_cast<unsigned char>(text[pos]))) {
            ++pos;
        }
        if (pos == digits_begin) {
            throw Error(ErrorCode::Format, "empty fractional seconds in '" + std::string(text) + "'");
        }
    }
    const std::string_view zone = text.substr(pos);
    if (zone != "Z" && zone != "+00:00") {
        throw Error(ErrorCode::Format, "timestamp must be UTC: '" + std::string(text) + "'");
    }
    if (h > 23 || mi > 59 || s > 59) {
        throw Error(ErrorCode::Format, "invalid time of day in '" + std::string(text) + "'");
    }
    const Date day{checked_ymd(y, mo, d, text)};
    return Timestamp{day} + std::chrono::hours{h} + std::chrono::minutes{mi} + std::chrono::seconds{s};
}

std::string format_date(Date d) {
    const std::chrono::year_month_day ymd{d};
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
    return buf;
}

std::string format_utc(Timestamp t) {
    const Date day = std::chrono::floor<std::chrono::days>(t);
    const std::chrono::hh_mm_ss tod{t - day};
    char buf[32];
    std::snprintf(buf, sizeof buf, "%sT%02d:%02d:%02dZ", format_date(day).c_str(),
                  static_cast<int>(tod.hours().count()), static_cast<int>(tod.minutes().count()),
                  static_cast<int>(tod.seconds().count()));
    return buf;
}

}  // namespace seasonal
