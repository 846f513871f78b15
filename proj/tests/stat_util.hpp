#pragma once

// Test-only numeric oracles: quadrature and a chi-square tail probability.
// Deliberately independent of the library implementation they check.

#include <cmath>
#include <stdexcept>

namespace testutil {

template <typename F>
double simpson(F f, double a, double b, int n) {
    if (n % 2 != 0) ++n;
    const double h = (b - a) / n;
    double sum = f(a) + f(b);
    for (int i = 1; i < n; ++i) {
        sum += f(a + i * h) * (i % 2 == 1 ? 4.0 : 2.0);
    }
    return sum * h / 3.0;
}

// Gaussian CDF by direct numeric integration of the density.
inline double normal_cdf_quadrature(double x) {
    auto pdf = [](double t) {
        return std::exp(-0.5 * t * t) / std::sqrt(2.0 * 3.14159265358979323846);
    };
    return simpson(pdf, -12.0, x, 200000);
}

// Regularized upper incomplete gamma Q(a, x): series for small x, continued
// fraction otherwise.
inline double gamma_q(double a, double x) {
    if (x < 0.0 || a <= 0.0) throw std::invalid_argument("gamma_q domain");
    if (x == 0.0) return 1.0;
    const double gln = std::lgamma(a);
    if (x < a + 1.0) {
        double ap = a, sum = 1.0 / a, del = sum;
        for (int i = 0; i < 500; ++i) {
            ap += 1.0;
            del *= x / ap;
            sum += del;
            if (std::fabs(del) < std::fabs(sum) * 1e-15) break;
        }
        const double p = sum * std::exp(-x + a * std::log(x) - gln);
        return 1.0 - p;
    }
    double b = x + 1.0 - a, c = 1e308, d = 1.0 / b, h = d;
    for (int i = 1; i < 500; ++i) {
        const double an = -i * (i - a);
        b += 2.0;
        d = an * d + b;
        if (std::fabs(d) < 1e-300) d = 1e-300;
        c = b + an / c;
        if (std::fabs(c) < 1e-300) c = 1e-300;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < 1e-15) break;
    }
    return std::exp(-x + a * std::log(x) - gln) * h;
}

// Survival function of the chi-square distribution with `dof` degrees of
// freedom evaluated at `stat` (the p-value of a goodness-of-fit test).
inline double chi_square_survival(double stat, double dof) {
    return gamma_q(dof / 2.0, stat / 2.0);
}

}  // namespace testutil
