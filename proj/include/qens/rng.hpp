#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace qens {

using Rng = std::mt19937_64;

/// Derives an independent seed for the named sub-stream of `master`.
/// The mapping is a pure function of its arguments (FNV-1a over the name,
/// mixed with splitmix64), so results never depend on call order.
std::uint64_t derive_seed(std::uint64_t master, std::string_view stream);

/// Same as above with an integer index appended to the stream name.
std::uint64_t derive_seed(std::uint64_t master, std::string_view stream,
                          std::uint64_t index);

inline Rng make_rng(std::uint64_t master, std::string_view stream) {
    return Rng{derive_seed(master, stream)};
}

/// Uniform draw in [0, 1) that does not depend on the standard library's
/// distribution implementation.
inline double uniform01(Rng &rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform(Rng &rng, double lo, double hi) {
    return lo + (hi - lo) * uniform01(rng);
}

/// Standard normal via Box-Muller on `uniform01`.
double standard_normal(Rng &rng);

} // namespace qens
