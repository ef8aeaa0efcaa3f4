#pragma once

#include <vector>

#include <unsupported/Eigen/FFT>

#include "grid.hpp"

namespace magweyl::detail {

// In-place d-dimensional FFT on grid-ordered data (axis 0 fastest).
inline void fft_nd(const GridSpec& g, std::vector<cplx>& data, bool inverse) {
    Eigen::FFT<double> fft;
    const int n = g.n;
    std::vector<cplx> in(n), out(n);
    std::size_t stride = 1;
    for (int ax = 0; ax < g.d; ++ax) {
        const std::size_t total = g.size();
        const std::size_t block = stride * n;
        for (std::size_t outer = 0; outer < total; outer += block) {
            for (std::size_t inner = 0; inner < stride; ++inner) {
                const std::size_t base = outer + inner;
                for (int i = 0; i < n; ++i) in[i] = data[base + i * stride];
                if (inverse)
                    fft.inv(out, in);
                else
                    fft.fwd(out, in);
                for (int i = 0; i < n; ++i) data[base + i * stride] = out[i];
            }
        }
        stride *= n;
    }
}

// periodic convolution of f with kernel k (both grid-ordered, kernel centred at index 0)
inline Eigen::VectorXd periodic_convolve(const GridSpec& g, const Eigen::VectorXd& f, const Eigen::VectorXd& k) {
    std::vector<cplx> a(f.size()), b(k.size());
    for (Eigen::Index i = 0; i < f.size(); ++i) a[i] = f[i];
    for (Eigen::Index i = 0; i < k.size(); ++i) b[i] = k[i];
    fft_nd(g, a, false);
    fft_nd(g, b, false);
    for (std::size_t i = 0; i < a.size(); ++i) a[i] *= b[i];
    fft_nd(g, a, true);
    Eigen::VectorXd r(f.size());
    for (Eigen::Index i = 0; i < f.size(); ++i) r[i] = a[i].real();
    return r;
}

} // namespace magweyl::detail
