#pragma once

#include <complex>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace mdfg {

using cplx = std::complex<double>;
using CVec = std::vector<cplx>;
using RVec = std::vector<double>;

enum class Label : std::uint8_t { clutter = 0, target = 1 };

inline const char* to_string(Label l) { return l == Label::target ? "target" : "clutter"; }

// Every failure the library reports. The category decides the CLI exit code.
enum class ErrorCode {
    MalformedHeader,
    TruncatedPayload,
    UnknownVersion,
    SeriesTooShort,
    Unreachable,
    InsufficientClutter,
    DopplerAliased,
    AllZeroSpectrum,
    EmptyPool,
    EmptySet,
    LengthMismatch,
    ZeroPowerInput,
    ShapeMismatch,
    NonScalarLoss,
    NonFiniteLoss,
    ZeroVectorEmbedding,
    DegenerateBatch,
    EmptyCalibrationSet,
    EmptyMatrix,
    InvalidArgument,
    ConfigError,
    IoError,
};

enum class ErrorCategory { config, data, numeric };

const char* to_string(ErrorCode code);
ErrorCategory category_of(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code), message_(what) {}

    ErrorCode code() const noexcept { return code_; }
    // The text without the code prefix.
    const std::string& message() const noexcept { return message_; }
    ErrorCategory category() const noexcept { return category_of(code_); }

private:
    ErrorCode code_;
    std::string message_;
};

// splitmix64 finalizer; derives independent sub-seeds from (seed, stream ids).
constexpr std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream = 0) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

constexpr std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
    return mix_seed(mix_seed(seed, a), b);
}

}  // namespace mdfg
