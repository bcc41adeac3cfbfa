#pragma once

// Thin RAII layer over FFTW (double precision). Plan creation is serialized
// because the FFTW planner is not thread-safe; execution is.

#include <fftw3.h>

#include <algorithm>
#include <complex>
#include <cstddef>
#include <memory>
#include <mutex>
#include <vector>

#include "solarsr/error.hpp"

namespace solarsr::fft {

namespace detail {

inline std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}

struct FftwFree {
    void operator()(void* p) const noexcept { fftw_free(p); }
};

template <typename T>
using FftwBuffer = std::unique_ptr<T[], FftwFree>;

template <typename T>
FftwBuffer<T> allocate(std::size_t n) {
    auto* p = static_cast<T*>(fftw_malloc(sizeof(T) * (n == 0 ? 1 : n)));
    require(p != nullptr, ErrorCode::IoError, "fftw_malloc failed");
    return FftwBuffer<T>(p);
}

}  // namespace detail

/// Real-to-complex 2D transform of fixed size rows x cols. The half
/// spectrum has rows x (cols/2 + 1) entries.
class RealFft2D {
public:
    RealFft2D(int rows, int cols)
        : rows_(rows), cols_(cols), half_cols_(cols / 2 + 1),
          real_(detail::allocate<double>(static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols))),
          spec_(detail::allocate<fftw_complex>(static_cast<std::size_t>(rows) * static_cast<std::size_t>(half_cols_))) {
        require(rows > 0 && cols > 0, ErrorCode::InvalidArgument, "FFT size must be positive");
        std::lock_guard lock(detail::planner_mutex());
        forward_ = fftw_plan_dft_r2c_2d(rows, cols, real_.get(), spec_.get(), FFTW_ESTIMATE);
        inverse_ = fftw_plan_dft_c2r_2d(rows, cols, spec_.get(), real_.get(), FFTW_ESTIMATE);
    }

    RealFft2D(const RealFft2D&) = delete;
    RealFft2D& operator=(const RealFft2D&) = delete;

    ~RealFft2D() {
        std::lock_guard lock(detail::planner_mutex());
        fftw_destroy_plan(forward_);
        fftw_destroy_plan(inverse_);
    }

    [[nodiscard]] int rows() const noexcept { return rows_; }
    [[nodiscard]] int cols() const noexcept { return cols_; }
    [[nodiscard]] std::size_t real_size() const noexcept {
        return static_cast<std::size_t>(rows_) * static_cast<std::size_t>(cols_);
    }
    [[nodiscard]] std::size_t half_size() const noexcept {
        return static_cast<std::size_t>(rows_) * static_cast<std::size_t>(half_cols_);
    }

    /// Unnormalized forward transform of a row-major real array.
    [[nodiscard]] std::vector<std::complex<double>> forward(const std::vector<double>& in) const {
        require(in.size() == real_size(), ErrorCode::ShapeMismatch, "FFT input size");
        auto r = detail::allocate<double>(real_size());
        auto c = detail::allocate<fftw_complex>(half_size());
        std::copy(in.begin(), in.end(), r.get());
        fftw_execute_dft_r2c(forward_, r.get(), c.get());
        std::vector<std::complex<double>> out(half_size());
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = {c[i][0], c[i][1]};
        return out;
    }

    /// Unnormalized inverse transform (result scaled by rows*cols).
    [[nodiscard]] std::vector<double> inverse(const std::vector<std::complex<double>>& in) const {
        require(in.size() == half_size(), ErrorCode::ShapeMismatch, "inverse FFT input size");
        auto r = detail::allocate<double>(real_size());
        auto c = detail::allocate<fftw_complex>(half_size());
        for (std::size_t i = 0; i < in.size(); ++i) {
            c[i][0] = in[i].real();
            c[i][1] = in[i].imag();
        }
        fftw_execute_dft_c2r(inverse_, c.get(), r.get());
        return std::vector<double>(r.get(), r.get() + real_size());
    }

    /// Full rows x cols complex spectrum, reconstructed from the half
    /// spectrum by Hermitian symmetry.
    [[nodiscard]] std::vector<std::complex<double>> forward_full(const std::vector<double>& in) const {
        const auto half = forward(in);
        std::vector<std::complex<double>> full(real_size());
        for (int u = 0; u < rows_; ++u) {
            for (int v = 0; v < cols_; ++v) {
                std::complex<double> value;
                if (v < half_cols_) {
                    value = half[static_cast<std::size_t>(u) * static_cast<std::size_t>(half_cols_) + static_cast<std::size_t>(v)];
                } else {
                    const int uu = (rows_ - u) % rows_;
                    const int vv = cols_ - v;
                    value = std::conj(half[static_cast<std::size_t>(uu) * static_cast<std::size_t>(half_cols_) + static_cast<std::size_t>(vv)]);
                }
                full[static_cast<std::size_t>(u) * static_cast<std::size_t>(cols_) + static_cast<std::size_t>(v)] = value;
            }
        }
        return full;
    }

private:
    int rows_;
    int cols_;
    int half_cols_;
    detail::FftwBuffer<double> real_;
    detail::FftwBuffer<fftw_complex> spec_;
    fftw_plan forward_ = nullptr;
    fftw_plan inverse_ = nullptr;
};

/// Smallest n >= minimum whose prime factors are all in {2, 3, 5, 7}.
inline int good_size(int minimum) {
    for (int n = std::max(minimum, 1);; ++n) {
        int m = n;
        for (int p : {2, 3, 5, 7}) {
            while (m % p == 0) m /= p;
        }
        if (m == 1) return n;
    }
}

}  // namespace solarsr::fft
