#include "seasonal/error.hpp"

namespace seasonal {

const char* to_string(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::InvalidArgument: return "InvalidArgument";
        case ErrorCode::Io: return "IoError";
        case ErrorCode::Format: return "FormatError";
        case ErrorCode::DuplicateId: return "DuplicateId";
        case ErrorCode::UncoveredYear: return "UncoveredYear";
        case ErrorCode::UnknownEvent: return "UnknownEvent";
        case ErrorCode::EmptyMatchedSet: return "EmptyMatchedSet";
        case ErrorCode::NoGoldOverlap: return "NoGoldOverlap";
        case ErrorCode::Template: return "TemplateError";
        case ErrorCode::UnknownTask: return "UnknownTask";
        case ErrorCode::NoGoldPositives: return "NoGoldPositives";
        case ErrorCode::UnparseableResponse: return "UnparseableResponse";
        case ErrorCode::Endpoint: return "EndpointError";
        case ErrorCode::DimMismatch: return "DimMismatch";
        case ErrorCode::MissingContent: return "MissingContent";
        case ErrorCode::EmptyPositives: return "EmptyPositives";
        case ErrorCode::ClassTooSmall: return "ClassTooSmall";
        case ErrorCode::NTooLarge: return "NTooLarge";
        case ErrorCode::BothAbsent: return "BothAbsent";
        case ErrorCode::BadClassIndex: return "BadClassIndex";
        case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
        case ErrorCode::VersionMismatch: return "VersionMismatch";
        case ErrorCode::LengthMismatch: return "LengthMismatch";
        case ErrorCode::UnknownLabel: return "UnknownLabel";
        case ErrorCode::EmptyStream: return "EmptyStream";
        case ErrorCode::KTooLarge: return "KTooLarge";
        case ErrorCode::Config: return "ConfigError";
    }
    return "Error";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

Error::Error(ErrorCode code, const std::string& message, std::size_t line)
    : std::runtime_error(std::string(to_string(code)) + " at line " + std::to_string(line) + ": " +
                         message),
      code_(code),
      line_(line) {}

}  // namespace seasonal
