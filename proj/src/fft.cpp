#include "mdfg/fft.hpp"

#include <algorithm>
#include <mutex>

#include <fftw3.h>

namespace mdfg {

namespace {
std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}
}  // namespace

struct Fft::Impl {
    fftw_complex* in = nullptr;
    fftw_complex* out = nullptr;
    fftw_plan plan = nullptr;

    explicit Impl(std::size_t n) {
        std::lock_guard lock(planner_mutex());
        in = fftw_alloc_complex(n);
        out = fftw_alloc_complex(n);
        plan = fftw_plan_dft_1d(static_cast<int>(n), in, out, FFTW_FORWARD, FFTW_ESTIMATE);
    }
    ~Impl() {
        std::lock_guard lock(planner_mutex());
        fftw_destroy_plan(plan);
        fftw_free(in);
        fftw_free(out);
    }
};

Fft::Fft(std::size_t n) : n_(n), impl_(std::make_unique<Impl>(n)) {
    if (n == 0) throw Error(ErrorCode::InvalidArgument, "FFT length must be positive");
}
Fft::~Fft() = default;
Fft::Fft(Fft&&) noexcept = default;
Fft& Fft::operator=(Fft&&) noexcept = default;

void Fft::forward(std::span<const cplx> in, std::span<cplx> out) {
    if (in.size() != n_ || out.size() != n_) {
        throw Error(ErrorCode::ShapeMismatch, "FFT of length " + std::to_string(n_) + " got input " +
                                                  std::to_string(in.size()) + ", output " + std::to_string(out.size()));
    }
    // std::complex<double> is layout-compatible with fftw_complex
    std::copy(in.begin(), in.end(), reinterpret_cast<cplx*>(impl_->in));
    fftw_execute(impl_->plan);
    const auto* res = reinterpret_cast<const cplx*>(impl_->out);
    std::copy(res, res + n_, out.begin());
}

}  // namespace mdfg
