#include "seasonal/jsonl.hpp"

#include <cstdio>

#include "seasonal/error.hpp"

namespace seasonal {

void for_each_jsonl(std::istream& in, const std::function<void(const Json&, std::size_t)>& fn) {
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.find_first_not_of(" \t") == std::string::npos) {
            continue;
        }
        Json record;
        try {
            record = Json::parse(line);
        } catch (const Json::parse_error& e) {
            throw Error(ErrorCode::Format, e.what(), line_no);
        }
        if (!record.is_object()) {
            throw Error(ErrorCode::Format, "record is not an object", line_no);
        }
        try {
            fn(record, line_no);
        } catch (const Error& e) {
            if (e.line()) {
                throw;
            }
            throw Error(e.code(), e.what(), line_no);
        } catch (const Json::exception& e) {
            throw Error(ErrorCode::Format, e.what(), line_no);
        }
    }
    if (in.bad()) {
        throw Error(ErrorCode::Io, "read failure");
    }
}

std::ifstream open_input(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorCode::Io, "cannot open '" + path.string() + "' for reading");
    }
    return in;
}

std::ofstream open_output(const std::filesystem::path& path) {
    if (path.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(path.parent_path(), ec);
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error(ErrorCode::Io, "cannot open '" + path.string() + "' for writing");
    }
    return out;
}

const Json& require_field(const Json& record, const char* key) {
    const auto it = record.find(key);
    if (it == record.end()) {
        throw Error(ErrorCode::Format, std::string("missing field '") + key + "'");
    }
    return *it;
}

std::string require_string(const Json& record, const char* key) {
    const Json& v = require_field(record, key);
    if (!v.is_string()) {
        throw Error(ErrorCode::Format, std::string("field '") + key + "' must be a string");
    }
    return v.get<std::string>();
}

double require_number(const Json& record, const char* key) {
    const Json& v = require_field(record, key);
    if (!v.is_number()) {
        throw Error(ErrorCode::Format, std::string("field '") + key + "' must be a number");
    }
    return v.get<double>();
}

std::int64_t require_integer(const Json& record, const char* key) {
    const Json& v = require_field(record, key);
    if (!v.is_number_integer()) {
        throw Error(ErrorCode::Format, std::string("field '") + key + "' must be an integer");
    }
    return v.get<std::int64_t>();
}

std::string format_double(double value) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", value);
    return buf;
}

}  // namespace seasonal
