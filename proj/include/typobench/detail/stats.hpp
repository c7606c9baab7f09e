// Small statistics helpers for the fairness properties: chi-square
// goodness-of-fit p-value via the regularized incomplete gamma function
// (series + continued fraction, Numerical Recipes construction).

#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <vector>

namespace typobench::detail {

/// Regularized lower incomplete gamma P(a, x).
inline double gamma_p(double a, double x) {
    if (a <= 0.0 || x < 0.0) throw std::invalid_argument("gamma_p: bad arguments");
    if (x == 0.0) return 0.0;

    if (x < a + 1.0) {
        // series expansion
        double ap = a;
        double sum = 1.0 / a;
        double del = sum;
        for (int i = 0; i < 500; ++i) {
            ap += 1.0;
            del *= x / ap;
            sum += del;
            if (std::fabs(del) < std::fabs(sum) * 1e-15) break;
        }
        return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
    }

    // continued fraction for Q(a, x), Lentz's method
    const double tiny = std::numeric_limits<double>::min() / 1e-30;
    double b = x + 1.0 - a;
    double c = 1.0 / tiny;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i <= 500; ++i) {
        double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
        b += 2.0;
        d = an * d + b;
        if (std::fabs(d) < tiny) d = tiny;
        c = b + an / c;
        if (std::fabs(c) < tiny) c = tiny;
        d = 1.0 / d;
        double delta = d * c;
        h *= delta;
        if (std::fabs(delta - 1.0) < 1e-15) break;
    }
    double q = std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
    return 1.0 - q;
}

/// Survival function of the chi-square distribution with dof degrees.
inline double chi_square_sf(double statistic, int dof) {
    if (dof <= 0) throw std::invalid_argument("chi_square_sf: dof must be positive");
    if (statistic <= 0.0) return 1.0;
    return 1.0 - gamma_p(dof / 2.0, statistic / 2.0);
}

/// Goodness-of-fit p-value for observed counts against uniform expectation.
inline double uniformity_p_value(const std::vector<std::size_t>& counts) {
    if (counts.size() < 2) throw std::invalid_argument("uniformity_p_value: need >= 2 cells");
    std::size_t total = 0;
    for (auto c : counts) total += c;
    if (total == 0) throw std::invalid_argument("uniformity_p_value: empty sample");
    double expected = static_cast<double>(total) / static_cast<double>(counts.size());
    double stat = 0.0;
    for (auto c : counts) {
        double d = static_cast<double>(c) - expected;
        stat += d * d / expected;
    }
    return chi_square_sf(stat, static_cast<int>(counts.size()) - 1);
}

} // namespace typobench::detail
