#pragma once

#include <cstddef>
#include <memory>
#include <span>

#include "mdfg/common.hpp"

namespace mdfg {

// Forward complex DFT of a fixed length, backed by FFTW. One instance per thread;
// plan creation is serialized internally.
class Fft {
public:
    explicit Fft(std::size_t n);
    ~Fft();
    Fft(const Fft&) = delete;
    Fft& operator=(const Fft&) = delete;
    Fft(Fft&&) noexcept;
    Fft& operator=(Fft&&) noexcept;

    std::size_t size() const { return n_; }

    // X[k] = sum_n x[n] exp(-j 2 pi k n / N)
    void forward(std::span<const cplx> in, std::span<cplx> out);

private:
    struct Impl;
    std::size_t n_;
    std::unique_ptr<Impl> impl_;
};

}  // namespace mdfg
