#include "mdfg/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace mdfg::augment {

const char* to_string(Method m) {
    switch (m) {
        case Method::identity: return "identity";
        case Method::rcrs: return "rcrs";
        case Method::ad: return "ad";
        case Method::flip: return "flip";
    }
    return "?";
}

Method parse_method(const std::string& s) {
    if (s == "rcrs" || s == "RCRS") return Method::rcrs;
    if (s == "ad" || s == "AD") return Method::ad;
    if (s == "flip" || s == "F" || s == "f") return Method::flip;
    throw Error(ErrorCode::ConfigError, "unknown augmentation method '" + s + "'");
}

Resample parse_resample(const std::string& s) {
    if (s == "linear") return Resample::linear;
    if (s == "lanczos") return Resample::lanczos;
    throw Error(ErrorCode::ConfigError, "resample must be 'linear' or 'lanczos', got '" + s + "'");
}

const char* to_string(Resample r) { return r == Resample::lanczos ? "lanczos" : "linear"; }

void AugmentConfig::validate() const {
    if (!(crop_lo > 0.0 && crop_lo <= crop_hi && crop_hi <= 1.0)) {
        throw Error(ErrorCode::ConfigError, "crop range must satisfy 0 < lo <= hi <= 1");
    }
    if (methods_enabled.empty()) throw Error(ErrorCode::ConfigError, "at least one augmentation method is required");
    if (views_per_sample < 1) throw Error(ErrorCode::ConfigError, "views_per_sample must be >= 1");
    if (views_per_sample > methods_enabled.size() + 1) {
        throw Error(ErrorCode::ConfigError, "views_per_sample exceeds the number of distinct transforms");
    }
}

namespace {

cplx lanczos_at(std::span<const cplx> x, double pos) {
    constexpr int a = 3;
    const auto base = static_cast<std::ptrdiff_t>(std::floor(pos));
    cplx acc{};
    double wsum = 0.0;
    for (std::ptrdiff_t i = base - a + 1; i <= base + a; ++i) {
        if (i < 0 || i >= static_cast<std::ptrdiff_t>(x.size())) continue;
        const double d = pos - static_cast<double>(i);
        double w = 1.0;
        if (d != 0.0) {
            const double pd = std::numbers::pi * d;
            w = a * std::sin(pd) * std::sin(pd / a) / (pd * pd);
        }
        acc += w * x[static_cast<std::size_t>(i)];
        wsum += w;
    }
    return wsum != 0.0 ? acc / wsum : acc;
}

}  // namespace

CVec rcrs(std::span<const cplx> seg, double crop_frac, std::uint64_t seed, Resample mode) {
    if (!(crop_frac > 0.0 && crop_frac <= 1.0)) throw Error(ErrorCode::InvalidArgument, "crop_frac must lie in (0, 1]");
    const std::size_t n = seg.size();
    const auto len = std::clamp<std::size_t>(static_cast<std::size_t>(std::llround(crop_frac * static_cast<double>(n))),
                                             std::min<std::size_t>(2, n), n);
    if (len == n) return CVec(seg.begin(), seg.end());

    std::mt19937_64 rng(mix_seed(seed, 0xc20u));
    std::uniform_int_distribution<std::size_t> pick(0, n - len);
    const std::span<const cplx> crop = seg.subspan(pick(rng), len);

    CVec out(n);
    const double scale = static_cast<double>(len - 1) / static_cast<double>(n - 1);
    for (std::size_t i = 0; i < n; ++i) {
        const double pos = static_cast<double>(i) * scale;
        if (mode == Resample::lanczos) {
            out[i] = lanczos_at(crop, pos);
            continue;
        }
        const auto j = std::min(static_cast<std::size_t>(pos), len - 2);
        const double frac = pos - static_cast<double>(j);
        out[i] = {crop[j].real() + frac * (crop[j + 1].real() - crop[j].real()),
                  crop[j].imag() + frac * (crop[j + 1].imag() - crop[j].imag())};
    }
    return out;
}

CVec ad(std::span<const cplx> seg, double snr_db, std::uint64_t seed) {
    if (snr_db == kNoDisturbance) return CVec(seg.begin(), seg.end());
    double power = 0.0;
    for (const auto& z : seg) power += std::norm(z);
    if (seg.empty() || !(power > 0.0)) throw Error(ErrorCode::ZeroPowerInput, "cannot scale a disturbance to zero signal power");
    power /= static_cast<double>(seg.size());
    const double noise_power = power / std::pow(10.0, snr_db / 10.0);

    std::mt19937_64 rng(mix_seed(seed, 0xad0u));
    std::normal_distribution<double> normal(0.0, std::sqrt(noise_power / 2.0));
    CVec out(seg.begin(), seg.end());
    for (auto& z : out) z += cplx{normal(rng), normal(rng)};
    return out;
}

CVec flip(std::span<const cplx> seg) { return CVec(seg.rbegin(), seg.rend()); }

std::vector<View> make_views(std::span<const cplx> seg, const AugmentConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    std::vector<Method> pool{Method::identity};
    for (auto m : cfg.methods_enabled) {
        if (std::find(pool.begin(), pool.end(), m) == pool.end()) pool.push_back(m);
    }
    if (cfg.views_per_sample > pool.size()) {
        throw Error(ErrorCode::ConfigError, "views_per_sample exceeds the number of distinct transforms");
    }
    std::mt19937_64 rng(mix_seed(seed, 0x71e3u));
    std::shuffle(pool.begin(), pool.end(), rng);

    std::uniform_real_distribution<double> crop(cfg.crop_lo, cfg.crop_hi);
    std::vector<View> views;
    for (std::size_t v = 0; v < cfg.views_per_sample; ++v) {
        const std::uint64_t vseed = mix_seed(seed, 0x7e1u, v);
        View view;
        view.method = pool[v];
        switch (pool[v]) {
            case Method::identity: view.samples.assign(seg.begin(), seg.end()); break;
            case Method::rcrs: {
                const double frac = cfg.crop_lo == cfg.crop_hi ? cfg.crop_lo : crop(rng);
                view.samples = rcrs(seg, frac, vseed, cfg.resample);
                break;
            }
            case Method::ad: view.samples = ad(seg, cfg.disturbance_snr_db, vseed); break;
            case Method::flip: view.samples = flip(seg); break;
        }
        views.push_back(std::move(view));
    }
    return views;
}

RVec modulus(std::span<const cplx> seg) {
    RVec out(seg.size());
    std::transform(seg.begin(), seg.end(), out.begin(), [](const cplx& z) { return std::abs(z); });
    return out;
}

}  // namespace mdfg::augment
