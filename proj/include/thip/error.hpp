#ifndef THIP_ERROR_HPP
#define THIP_ERROR_HPP

#include <stdexcept>
#include <string>
#include <string_view>

namespace thip {

/// Failure categories raised across the library. The name of each value is
/// what the CLI prints as its diagnostic prefix.
enum class Errc {
    MalformedRecord,
    DuplicateCaseId,
    IoFailure,
    InvalidLabel,
    LabelerUnavailable,
    LabelerBadResponse,
    EmptyLog,
    EmptyAlphabet,
    InvalidModel,
    TransitionNotEnabled,
    StateBoundExceeded,
    FinalMarkingUnreachable,
    EmptyTeacherLog,
    GroupTooSmall,
    NonFiniteLikelihood,
    StaleRollout,
    InvalidConfig,
};

inline std::string_view errc_name(Errc code) {
    switch (code) {
    case Errc::MalformedRecord: return "MalformedRecord";
    case Errc::DuplicateCaseId: return "DuplicateCaseId";
    case Errc::IoFailure: return "IoFailure";
    case Errc::InvalidLabel: return "InvalidLabel";
    case Errc::LabelerUnavailable: return "LabelerUnavailable";
    case Errc::LabelerBadResponse: return "LabelerBadResponse";
    case Errc::EmptyLog: return "EmptyLog";
    case Errc::EmptyAlphabet: return "EmptyAlphabet";
    case Errc::InvalidModel: return "InvalidModel";
    case Errc::TransitionNotEnabled: return "TransitionNotEnabled";
    case Errc::StateBoundExceeded: return "StateBoundExceeded";
    case Errc::FinalMarkingUnreachable: return "FinalMarkingUnreachable";
    case Errc::EmptyTeacherLog: return "EmptyTeacherLog";
    case Errc::GroupTooSmall: return "GroupTooSmall";
    case Errc::NonFiniteLikelihood: return "NonFiniteLikelihood";
    case Errc::StaleRollout: return "StaleRollout";
    case Errc::InvalidConfig: return "InvalidConfig";
    }
    return "Unknown";
}

class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& detail)
        : std::runtime_error(std::string(errc_name(code)) + ": " + detail), code_(code) {}

    Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

} // namespace thip

#endif // THIP_ERROR_HPP
