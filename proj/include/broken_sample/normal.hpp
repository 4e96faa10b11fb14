#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>

#include <boost/math/special_functions/erf.hpp>

namespace broken_sample::normal {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

inline double pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }

inline double cdf(double x) {
    if (x == kInf) return 1.0;
    if (x == -kInf) return 0.0;
    return 0.5 * std::erfc(-x / std::numbers::sqrt2);
}

/// Upper tail P(Z > x).
inline double sf(double x) { return cdf(-x); }

inline double quantile(double p) {
    if (p <= 0.0) return -kInf;
    if (p >= 1.0) return kInf;
    return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * p);
}

/// P(X > h, Y > k) for a standard bivariate normal with correlation r.
///
/// Port of A. Genz's BVNU (Gauss-Legendre quadrature of the Drezner-Wesolowsky
/// representation, with the asymptotic expansion for |r| >= 0.925). Absolute
/// accuracy is about 1e-15.
inline double bivariate_upper(double h, double k, double r) {
    if (h == kInf || k == kInf) return 0.0;
    if (h == -kInf) return k == -kInf ? 1.0 : sf(k);
    if (k == -kInf) return sf(h);
    if (r == 0.0) return sf(h) * sf(k);
    if (r >= 1.0) return sf(std::max(h, k));
    if (r <= -1.0) return std::max(0.0, sf(h) - cdf(-k));

    static constexpr std::array<double, 3> w6{0.1713244923791705, 0.3607615730481384, 0.4679139345726904};
    static constexpr std::array<double, 3> x6{0.9324695142031522, 0.6612093864662647, 0.2386191860831970};
    static constexpr std::array<double, 6> w12{0.04717533638651177, 0.1069393259953183, 0.1600783285433464,
                                               0.2031674267230659,  0.2334925365383547, 0.2491470458134029};
    static constexpr std::array<double, 6> x12{0.9815606342467191, 0.9041172563704750, 0.7699026741943050,
                                               0.5873179542866171, 0.3678314989981802, 0.1252334085114692};
    static constexpr std::array<double, 10> w20{
        0.01761400713915212, 0.04060142980038694, 0.06267204833410906, 0.08327674157670475, 0.1019301198172404,
        0.1181945319615184,  0.1316886384491766,  0.1420961093183821,  0.1491729864726037,  0.1527533871307259};
    static constexpr std::array<double, 10> x20{
        0.9931285991850949, 0.9639719272779138, 0.9122344282513259, 0.8391169718222188, 0.7463319064601508,
        0.6360536807265150, 0.5108670019508271, 0.3737060887154196, 0.2277858511416451, 0.07652652113349733};

    const double* w = nullptr;
    const double* x = nullptr;
    std::size_t ng = 0;
    if (std::abs(r) < 0.3) {
        w = w6.data(), x = x6.data(), ng = 3;
    } else if (std::abs(r) < 0.75) {
        w = w12.data(), x = x12.data(), ng = 6;
    } else {
        w = w20.data(), x = x20.data(), ng = 10;
    }

    constexpr double tp = 2.0 * std::numbers::pi;
    double hk = h * k;
    double bvn = 0.0;
    if (std::abs(r) < 0.925) {
        const double hs = (h * h + k * k) / 2.0;
        const double asr = std::asin(r) / 2.0;
        for (std::size_t i = 0; i < ng; ++i) {
            for (double sign : {-1.0, 1.0}) {
                const double sn = std::sin(asr * (1.0 + sign * x[i]));
                bvn += w[i] * std::exp((sn * hk - hs) / (1.0 - sn * sn));
            }
        }
        return std::clamp(bvn * asr / tp + sf(h) * sf(k), 0.0, 1.0);
    }

    if (r < 0.0) {
        k = -k;
        hk = -hk;
    }
    if (std::abs(r) < 1.0) {
        const double as = 1.0 - r * r;
        double a = std::sqrt(as);
        const double bs = (h - k) * (h - k);
        double asr = -(bs / as + hk) / 2.0;
        const double c = (4.0 - hk) / 8.0;
        const double d = (12.0 - hk) / 80.0;
        if (asr > -100.0) bvn = a * std::exp(asr) * (1.0 - c * (bs - as) * (1.0 - d * bs) / 3.0 + c * d * as * as);
        if (hk > -100.0) {
            const double b = std::sqrt(bs);
            const double sp = std::sqrt(tp) * sf(b / a);
            bvn -= std::exp(-hk / 2.0) * sp * b * (1.0 - c * bs * (1.0 - d * bs) / 3.0);
        }
        a /= 2.0;
        double sum = 0.0;
        for (std::size_t i = 0; i < ng; ++i) {
            for (double sign : {-1.0, 1.0}) {
                const double xs = (a * (1.0 + sign * x[i])) * (a * (1.0 + sign * x[i]));
                asr = -(bs / xs + hk) / 2.0;
                if (asr <= -100.0) continue;
                const double sp = 1.0 + c * xs * (1.0 + 5.0 * d * xs);
                const double rs = std::sqrt(1.0 - xs);
                const double ep = std::exp(-(hk / 2.0) * xs / ((1.0 + rs) * (1.0 + rs))) / rs;
                sum += w[i] * std::exp(asr) * (sp - ep);
            }
        }
        bvn = (a * sum - bvn) / tp;
    }
    if (r > 0.0) {
        bvn += sf(std::max(h, k));
    } else if (h >= k) {
        bvn = -bvn;
    } else {
        const double l = h < 0.0 ? cdf(k) - cdf(h) : sf(h) - sf(k);
        bvn = l - bvn;
    }
    return std::clamp(bvn, 0.0, 1.0);
}

/// P(a1 < X <= b1, a2 < Y <= b2) for a standard bivariate normal with
/// correlation r. Infinite bounds are allowed.
inline double bivariate_rectangle(double a1, double b1, double a2, double b2, double r) {
    const double p = bivariate_upper(a1, a2, r) - bivariate_upper(b1, a2, r) - bivariate_upper(a1, b2, r) +
                     bivariate_upper(b1, b2, r);
    return std::max(0.0, p);
}

}  // namespace broken_sample::normal
