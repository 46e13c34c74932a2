#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace gmmvs {

enum class ErrorKind {
    InvalidArgument,
    MissingCell,
    DuplicateCell,
    NonNumericValue,
    IoFailure,
    TooFewSubjects,
    EmptySubset,
    DegenerateComponent,
    NumericalUnderflow,
    AllFitsFailed,
    RankDeficientDesign,
    LengthMismatch,
    ShapeMismatch,
};

constexpr std::string_view to_string(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::MissingCell: return "MissingCell";
    case ErrorKind::DuplicateCell: return "DuplicateCell";
    case ErrorKind::NonNumericValue: return "NonNumericValue";
    case ErrorKind::IoFailure: return "IoFailure";
    case ErrorKind::TooFewSubjects: return "TooFewSubjects";
    case ErrorKind::EmptySubset: return "EmptySubset";
    case ErrorKind::DegenerateComponent: return "DegenerateComponent";
    case ErrorKind::NumericalUnderflow: return "NumericalUnderflow";
    case ErrorKind::AllFitsFailed: return "AllFitsFailed";
    case ErrorKind::RankDeficientDesign: return "RankDeficientDesign";
    case ErrorKind::LengthMismatch: return "LengthMismatch";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    }
    return "Unknown";
}

/// Library error. The kind identifies the failure class; what() carries
/// "<Kind>: <detail>".
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& detail)
        : std::runtime_error(std::string(to_string(kind)) + ": " + detail), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

    /// Parse/usage failures versus numerical ones; the CLI maps these to exit codes.
    bool is_numerical() const noexcept {
        switch (kind_) {
        case ErrorKind::DegenerateComponent:
        case ErrorKind::NumericalUnderflow:
        case ErrorKind::AllFitsFailed:
        case ErrorKind::RankDeficientDesign:
            return true;
        default:
            return false;
        }
    }

private:
    ErrorKind kind_;
};

}  // namespace gmmvs
