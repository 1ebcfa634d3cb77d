#include "mdfg/common.hpp"
#include "mdfg/parallel.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif
#ifdef __GLIBC__
#include <malloc.h>
#endif

namespace mdfg {

const char* to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::MalformedHeader: return "MalformedHeader";
        case ErrorCode::TruncatedPayload: return "TruncatedPayload";
        case ErrorCode::UnknownVersion: return "UnknownVersion";
        case ErrorCode::SeriesTooShort: return "SeriesTooShort";
        case ErrorCode::Unreachable: return "Unreachable";
        case ErrorCode::InsufficientClutter: return "InsufficientClutter";
        case ErrorCode::DopplerAliased: return "DopplerAliased";
        case ErrorCode::AllZeroSpectrum: return "AllZeroSpectrum";
        case ErrorCode::EmptyPool: return "EmptyPool";
        case ErrorCode::EmptySet: return "EmptySet";
        case ErrorCode::LengthMismatch: return "LengthMismatch";
        case ErrorCode::ZeroPowerInput: return "ZeroPowerInput";
        case ErrorCode::ShapeMismatch: return "ShapeMismatch";
        case ErrorCode::NonScalarLoss: return "NonScalarLoss";
        case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
        case ErrorCode::ZeroVectorEmbedding: return "ZeroVectorEmbedding";
        case ErrorCode::DegenerateBatch: return "DegenerateBatch";
        case ErrorCode::EmptyCalibrationSet: return "EmptyCalibrationSet";
        case ErrorCode::EmptyMatrix: return "EmptyMatrix";
        case ErrorCode::InvalidArgument: return "InvalidArgument";
        case ErrorCode::ConfigError: return "ConfigError";
        case ErrorCode::IoError: return "IoError";
    }
    return "Unknown";
}

ErrorCategory category_of(ErrorCode code) {
    switch (code) {
        case ErrorCode::ConfigError:
        case ErrorCode::InvalidArgument:
            return ErrorCategory::config;
        case ErrorCode::MalformedHeader:
        case ErrorCode::TruncatedPayload:
        case ErrorCode::UnknownVersion:
        case ErrorCode::SeriesTooShort:
        case ErrorCode::Unreachable:
        case ErrorCode::InsufficientClutter:
        case ErrorCode::DopplerAliased:
        case ErrorCode::EmptyPool:
        case ErrorCode::EmptySet:
        case ErrorCode::LengthMismatch:
        case ErrorCode::EmptyCalibrationSet:
        case ErrorCode::IoError:
            return ErrorCategory::data;
        default:
            return ErrorCategory::numeric;
    }
}

void set_thread_count(int n) {
#ifdef _OPENMP
    if (n > 0) omp_set_num_threads(n);
#else
    (void)n;
#endif
}

void tune_allocator() {
#ifdef __GLIBC__
    mallopt(M_MMAP_THRESHOLD, 512 << 20);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
}

}  // namespace mdfg
