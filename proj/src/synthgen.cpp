#include "mdfg/synthgen.hpp"

#include <cmath>
#include <numbers>
#include <random>

namespace mdfg::synthgen {

void ClutterConfig::validate() const {
    if (!(shape_nu > 0.0)) throw Error(ErrorCode::InvalidArgument, "shape_nu must be > 0");
    if (!(mean_power > 0.0)) throw Error(ErrorCode::InvalidArgument, "mean_power must be > 0");
    if (!(speckle_corr_rho >= 0.0 && speckle_corr_rho < 1.0)) {
        throw Error(ErrorCode::InvalidArgument, "speckle_corr_rho must lie in [0, 1)");
    }
}

double mean_power(const CVec& x) {
    if (x.empty()) return 0.0;
    double acc = 0.0;
    for (const auto& z : x) acc += std::norm(z);
    return acc / static_cast<double>(x.size());
}

dataio::ComplexSeries gen_clutter(std::size_t n, double prf_hz, const ClutterConfig& cfg) {
    cfg.validate();
    if (n == 0) throw Error(ErrorCode::InvalidArgument, "gen_clutter needs n >= 1");
    if (!(prf_hz > 0.0)) throw Error(ErrorCode::InvalidArgument, "prf_hz must be > 0");

    std::mt19937_64 rng(mix_seed(cfg.seed, 0xc1u));
    std::gamma_distribution<double> texture(cfg.shape_nu, cfg.mean_power / cfg.shape_nu);
    std::normal_distribution<double> normal(0.0, std::sqrt(0.5));

    const double rho = cfg.speckle_corr_rho;
    const double innov = std::sqrt(1.0 - rho * rho);

    dataio::ComplexSeries out;
    out.prf_hz = prf_hz;
    out.samples.resize(n);
    cplx g{normal(rng), normal(rng)};
    double tau = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        if (k % kTextureBlock == 0) tau = texture(rng);
        if (k > 0) g = rho * g + innov * cplx{normal(rng), normal(rng)};
        out.samples[k] = std::sqrt(tau) * g;
    }
    return out;
}

dataio::ComplexSeries gen_target_in_clutter(const dataio::ComplexSeries& clutter, const TargetConfig& cfg) {
    if (clutter.samples.empty()) throw Error(ErrorCode::InvalidArgument, "clutter series is empty");
    if (std::abs(cfg.doppler_hz) >= clutter.prf_hz / 2.0) {
        throw Error(ErrorCode::DopplerAliased, "|doppler| " + std::to_string(cfg.doppler_hz) +
                                                   " Hz >= prf/2 = " + std::to_string(clutter.prf_hz / 2.0));
    }
    if (cfg.amp_jitter < 0.0) throw Error(ErrorCode::InvalidArgument, "amp_jitter must be >= 0");
    dataio::ComplexSeries out = clutter;
    if (cfg.scr_db == kNoTarget) return out;

    std::mt19937_64 rng(mix_seed(cfg.seed, 0x7a4u));
    std::normal_distribution<double> jitter(0.0, cfg.amp_jitter > 0.0 ? cfg.amp_jitter : 1.0);

    const std::size_t n = clutter.samples.size();
    CVec s(n);
    const double w = 2.0 * std::numbers::pi * cfg.doppler_hz / clutter.prf_hz;
    for (std::size_t k = 0; k < n; ++k) {
        const double a = 1.0 + (cfg.amp_jitter > 0.0 ? jitter(rng) : 0.0);
        s[k] = a * std::polar(1.0, w * static_cast<double>(k));
    }
    const double pc = mean_power(clutter.samples);
    const double ps = mean_power(s);
    const double amp = ps > 0.0 ? std::sqrt(pc * std::pow(10.0, cfg.scr_db / 10.0) / ps) : 0.0;
    for (std::size_t k = 0; k < n; ++k) out.samples[k] += amp * s[k];
    return out;
}

}  // namespace mdfg::synthgen
