#pragma once

#include <cstdint>
#include <limits>

#include "mdfg/dataio.hpp"

namespace mdfg::synthgen {

// Compound-Gaussian clutter: Gamma texture held over blocks, AR(1) complex speckle.
struct ClutterConfig {
    double shape_nu = 0.5;
    double mean_power = 1.0;
    double speckle_corr_rho = 0.9;
    std::uint64_t seed = 1;

    void validate() const;
};

inline constexpr std::size_t kTextureBlock = 64;

struct TargetConfig {
    double doppler_hz = 120.0;
    double scr_db = 15.0;  // -inf disables the target
    double amp_jitter = 0.1;
    std::uint64_t seed = 2;
};

inline constexpr double kNoTarget = -std::numeric_limits<double>::infinity();

dataio::ComplexSeries gen_clutter(std::size_t n, double prf_hz, const ClutterConfig& cfg);

/// Adds A(1 + jitter_k) exp(j 2 pi f_d k / prf) with A set so that the realized
/// target-to-clutter power ratio equals scr_db.
dataio::ComplexSeries gen_target_in_clutter(const dataio::ComplexSeries& clutter, const TargetConfig& cfg);

double mean_power(const CVec& x);

}  // namespace mdfg::synthgen
