#pragma once

#include <algorithm>
#include <cmath>

namespace bgsr::detail {

// Bisection on log x for a sign change of d in [lo, hi], given d(lo).
template <class F>
double bisect_log(F&& d, double lo, double hi, double d_lo) {
    for (int it = 0; it < 400 && hi / lo - 1.0 > 1e-15; ++it) {
        const double mid = std::sqrt(lo * hi);
        const double dm = d(mid);
        if (dm == 0.0) return mid;
        if ((dm > 0.0) == (d_lo > 0.0)) {
            lo = mid;
            d_lo = dm;
        } else {
            hi = mid;
        }
    }
    return std::sqrt(lo * hi);
}

// Plain bisection for a sign change of d between lo and hi, given d(lo).
// lo may exceed hi.
template <class F>
double bisect(F&& d, double lo, double hi, double d_lo) {
    for (int it = 0; it < 200 && std::abs(hi - lo) > 1e-15 * std::max(1.0, std::abs(lo) + std::abs(hi)); ++it) {
        const double mid = 0.5 * (lo + hi);
        const double dm = d(mid);
        if (dm == 0.0) return mid;
        if ((dm > 0.0) == (d_lo > 0.0)) {
            lo = mid;
            d_lo = dm;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

}  // namespace bgsr::detail
