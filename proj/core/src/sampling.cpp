#include "pinnlab/sampling.hpp"

#include <algorithm>
#include <numeric>

#include "pinnlab/rng.hpp"

namespace pinnlab {

std::vector<double> linspace(double lo, double hi, std::size_t n) {
    std::vector<double> v(n);
    if (n == 1) {
        v[0] = lo;
        return v;
    }
    double h = (hi - lo) / static_cast<double>(n - 1);
    for (std::size_t i = 0; i < n; ++i) v[i] = lo + static_cast<double>(i) * h;
    v[n - 1] = hi;
    return v;
}

Points sample_uniform(const Domain& dom, std::span<const std::size_t> dims,
                      std::span<const bool> include_endpoints) {
    if (dims.size() != dom.dim()) throw TensorError("sample_uniform: dims/domain mismatch");
    std::size_t total = 1;
    std::vector<std::vector<double>> axes(dom.dim());
    for (std::size_t a = 0; a < dom.dim(); ++a) {
        if (dims[a] == 0) throw TensorError("sample_uniform: zero points on an axis");
        bool endpoints = include_endpoints.empty() ? true : include_endpoints[a];
        auto [lo, hi] = dom.bounds[a];
        if (endpoints) {
            axes[a] = linspace(lo, hi, dims[a]);
        } else {
            axes[a].resize(dims[a]);
            double h = (hi - lo) / static_cast<double>(dims[a]);
            for (std::size_t i = 0; i < dims[a]; ++i)
                axes[a][i] = lo + (static_cast<double>(i) + 0.5) * h;
        }
        total *= dims[a];
    }

    Points pts;
    pts.coords.assign(dom.dim(), Tensor({total, 1}));
    // row-major enumeration: last axis varies fastest
    for (std::size_t idx = 0; idx < total; ++idx) {
        std::size_t rem = idx;
        for (std::size_t a = dom.dim(); a-- > 0;) {
            std::size_t k = rem % dims[a];
            rem /= dims[a];
            pts.coords[a][idx] = axes[a][k];
        }
    }
    return pts;
}

Points sample_lhs(const Domain& dom, std::size_t n, std::uint64_t seed) {
    if (n == 0) throw TensorError("sample_lhs: n must be positive");
    Rng rng(seed);
    Points pts;
    pts.coords.assign(dom.dim(), Tensor({n, 1}));
    std::vector<std::size_t> perm(n);
    for (std::size_t a = 0; a < dom.dim(); ++a) {
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng.engine());
        auto [lo, hi] = dom.bounds[a];
        double h = (hi - lo) / static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) {
            double jitter = rng.uniform();
            pts.coords[a][i] = lo + (static_cast<double>(perm[i]) + jitter) * h;
        }
    }
    return pts;
}

Points sample_lhs_per_axis(const Domain& dom, std::span<const std::size_t> dims,
                           std::uint64_t seed) {
    if (dims.size() != dom.dim()) throw TensorError("sample_lhs_per_axis: dims/domain mismatch");
    Rng rng(seed);
    std::vector<std::vector<double>> axes(dom.dim());
    std::size_t total = 1;
    for (std::size_t a = 0; a < dom.dim(); ++a) {
        auto [lo, hi] = dom.bounds[a];
        std::size_t n = dims[a];
        if (n == 0) throw TensorError("sample_lhs_per_axis: zero points on an axis");
        double h = (hi - lo) / static_cast<double>(n);
        axes[a].resize(n);
        for (std::size_t i = 0; i < n; ++i)
            axes[a][i] = lo + (static_cast<double>(i) + rng.uniform()) * h;
        total *= n;
    }

    Points pts;
    pts.coords.assign(dom.dim(), Tensor({total, 1}));
    for (std::size_t idx = 0; idx < total; ++idx) {
        std::size_t rem = idx;
        for (std::size_t a = dom.dim(); a-- > 0;) {
            std::size_t k = rem % dims[a];
            rem /= dims[a];
            pts.coords[a][idx] = axes[a][k];
        }
    }
    return pts;
}

}  // namespace pinnlab
