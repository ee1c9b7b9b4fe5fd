#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <istream>
#include <string>

#include <json.hpp>

namespace seasonal {

using Json = nlohmann::json;

/// Calls `fn(record, line_number)` for every non-blank line of a
/// line-delimited JSON stream. Malformed lines raise Error(Format) with the
/// 1-based line number; errors thrown by `fn` without a line get one attached.
void for_each_jsonl(std::istream& in, const std::function<void(const Json&, std::size_t)>& fn);

std::ifstream open_input(const std::filesystem::path& path);
std::ofstream open_output(const std::filesystem::path& path);

/// Typed field access for records; missing or mistyped fields raise Error(Format).
std::string require_string(const Json& record, const char* key);
double require_number(const Json& record, const char* key);
std::int64_t require_integer(const Json& record, const char* key);
const Json& require_field(const Json& record, const char* key);

/// Writes a double with enough digits to round-trip exactly.
std::string format_double(double value);

}  // namespace seasonal
