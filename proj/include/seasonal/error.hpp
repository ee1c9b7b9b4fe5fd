#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>

namespace seasonal {

enum class ErrorCode {
    InvalidArgument,
    Io,
    Format,
    DuplicateId,
    UncoveredYear,
    UnknownEvent,
    EmptyMatchedSet,
    NoGoldOverlap,
    Template,
    UnknownTask,
    NoGoldPositives,
    UnparseableResponse,
    Endpoint,
    DimMismatch,
    MissingContent,
    EmptyPositives,
    ClassTooSmall,
    NTooLarge,
    BothAbsent,
    BadClassIndex,
    NonFiniteLoss,
    VersionMismatch,
    LengthMismatch,
    UnknownLabel,
    EmptyStream,
    KTooLarge,
    Config,
};

const char* to_string(ErrorCode code) noexcept;

/// Every failure raised by the library. The code identifies the failure kind,
/// the line is set for errors tied to a position in a line-delimited file.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message);
    Error(ErrorCode code, const std::string& message, std::size_t line);

    ErrorCode code() const noexcept { return code_; }
    std::optional<std::size_t> line() const noexcept { return line_; }

private:
    ErrorCode code_;
    std::optional<std::size_t> line_;
};

}  // namespace seasonal
