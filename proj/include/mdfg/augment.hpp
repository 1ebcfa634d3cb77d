#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "mdfg/common.hpp"

namespace mdfg::augment {

enum class Method : std::uint8_t { identity = 0, rcrs = 1, ad = 2, flip = 3 };
enum class Resample : std::uint8_t { linear, lanczos };

const char* to_string(Method m);
Method parse_method(const std::string& s);
Resample parse_resample(const std::string& s);
const char* to_string(Resample r);

inline constexpr double kNoDisturbance = std::numeric_limits<double>::infinity();

struct AugmentConfig {
    double crop_lo = 0.7;
    double crop_hi = 0.95;
    double disturbance_snr_db = 15.0;
    std::vector<Method> methods_enabled{Method::rcrs, Method::ad, Method::flip};
    std::size_t views_per_sample = 2;
    Resample resample = Resample::linear;

    void validate() const;
};

/// Crops round(crop_frac * N) contiguous samples at a seeded offset and resamples back to N.
CVec rcrs(std::span<const cplx> seg, double crop_frac, std::uint64_t seed, Resample mode = Resample::linear);

/// Adds circular white Gaussian noise at signal_power / 10^(snr_db/10); +inf is the identity.
CVec ad(std::span<const cplx> seg, double snr_db, std::uint64_t seed);

CVec flip(std::span<const cplx> seg);

struct View {
    Method method = Method::identity;
    CVec samples;
};

/// Draws views_per_sample distinct transforms from a seeded shuffle of {identity} + methods_enabled.
std::vector<View> make_views(std::span<const cplx> seg, const AugmentConfig& cfg, std::uint64_t seed);

RVec modulus(std::span<const cplx> seg);

}  // namespace mdfg::augment
