#pragma once

#include <cmath>

namespace bgsr::detail {

// Pieces of the Marchenko-Pastur capacity with F(x, y) / 4 written as
// quarter_f = x y - ... All three stay accurate when x is huge, where the
// textbook forms x - F/4 and x y - F/4 subtract nearly equal numbers.
struct MpTerms {
    double x_minus;   // x - F/4
    double xy_minus;  // x y - F/4
    double quarter_f; // F/4
};

inline MpTerms mp_terms(double x, double y) {
    const double sy = std::sqrt(y);
    const double a = std::sqrt(x * (1.0 + sy) * (1.0 + sy) + 1.0);
    const double b = std::sqrt(x * (1.0 - sy) * (1.0 - sy) + 1.0);
    const double ab = a * b;
    const double s = x * (1.0 - y);
    // a^2 b^2 - s^2 = 2x(1 + y) + 1, so ab - |s| needs no subtraction.
    const double small = (2.0 * x * (1.0 + y) + 1.0) / (ab + std::abs(s));
    const double big = ab + std::abs(s);
    const double plus = 1.0 + (s >= 0.0 ? big : small);   // 1 + ab + s
    const double minus = 1.0 + (s >= 0.0 ? small : big);  // 1 + ab - s
    const double sum_sq = (a + b) * (a + b);
    return {2.0 * x * plus / sum_sq, 2.0 * x * y * minus / sum_sq, 4.0 * x * x * y / sum_sq};
}

}  // namespace bgsr::detail
