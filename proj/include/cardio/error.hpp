#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cardio {

enum class Errc {
    InvalidArgument,
    Format,
    UnsupportedDatatype,
    UnsupportedRank,
    InvalidLabel,
    LengthMismatch,
    MissingField,
    Parse,
    UnknownClass,
    InconsistentCase,
    NotFound,
    InvalidSpec,
    EmptySurface,
    NoContour,
    NoMyocardium,
    Schema,
    DegenerateTraining,
    Convergence,
    TrainingDiverged,
    UnsupportedVersion,
    Integrity,
    Io,
    Config,
};

constexpr std::string_view to_string(Errc c) {
    switch (c) {
        case Errc::InvalidArgument: return "invalid-argument";
        case Errc::Format: return "format-error";
        case Errc::UnsupportedDatatype: return "unsupported-datatype";
        case Errc::UnsupportedRank: return "unsupported-rank";
        case Errc::InvalidLabel: return "invalid-label";
        case Errc::LengthMismatch: return "length-mismatch";
        case Errc::MissingField: return "missing-field";
        case Errc::Parse: return "parse-error";
        case Errc::UnknownClass: return "unknown-class";
        case Errc::InconsistentCase: return "inconsistent-case";
        case Errc::NotFound: return "not-found";
        case Errc::InvalidSpec: return "invalid-spec";
        case Errc::EmptySurface: return "empty-surface";
        case Errc::NoContour: return "no-contour";
        case Errc::NoMyocardium: return "no-myocardium";
        case Errc::Schema: return "schema-error";
        case Errc::DegenerateTraining: return "degenerate-training";
        case Errc::Convergence: return "convergence-error";
        case Errc::TrainingDiverged: return "training-diverged";
        case Errc::UnsupportedVersion: return "unsupported-version";
        case Errc::Integrity: return "integrity-error";
        case Errc::Io: return "io-error";
        case Errc::Config: return "config-error";
    }
    return "unknown";
}

/// Exception carrying a machine-readable error category.
class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    [[nodiscard]] Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what) { throw Error(code, what); }

inline void require(bool cond, Errc code, const std::string& what) {
    if (!cond) fail(code, what);
}

}  // namespace cardio
