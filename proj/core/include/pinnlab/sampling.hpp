#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "pinnlab/losses.hpp"

namespace pinnlab {

/// Axis-aligned box, one [lo, hi] pair per coordinate (space first, time last).
struct Domain {
    std::vector<std::array<double, 2>> bounds;

    std::size_t dim() const { return bounds.size(); }
};

/// Tensor-product grid with `dims[a]` points per axis. Endpoints are
/// included by default; pass per-axis flags to exclude them (the grid then
/// uses cell midpoints of an open partition).
Points sample_uniform(const Domain& dom, std::span<const std::size_t> dims,
                      std::span<const bool> include_endpoints = {});

/// Joint Latin hypercube sample: n points; projecting onto any axis and
/// binning into n equal bins yields exactly one point per bin. Deterministic
/// for a fixed seed.
Points sample_lhs(const Domain& dom, std::size_t n, std::uint64_t seed);

/// Per-axis stratified variant: each axis gets an independent jittered 1-D
/// stratification with dims[a] strata, combined as a tensor product.
Points sample_lhs_per_axis(const Domain& dom, std::span<const std::size_t> dims,
                           std::uint64_t seed);

/// Evenly spaced values including endpoints.
std::vector<double> linspace(double lo, double hi, std::size_t n);

}  // namespace pinnlab
