#pragma once

#include <cstdint>
#include <numeric>
#include <string>

#include "timaudit/errors.hpp"

namespace timaudit {

// Exact fraction arithmetic for metric aggregation.  Table cells are means
// of small fractions (wins/pairs, missing/gold); doing the rounding on exact
// integers avoids any float-boundary wobble in emitted tables.
struct Rat {
    std::int64_t num = 0;
    std::int64_t den = 1;

    static Rat of(std::int64_t n, std::int64_t d) {
        if (d == 0) raise(errc::domain_error, "rational with zero denominator");
        if (d < 0) {
            n = -n;
            d = -d;
        }
        std::int64_t g = std::gcd(n < 0 ? -n : n, d);
        if (g > 1) {
            n /= g;
            d /= g;
        }
        return Rat{n, d};
    }

    Rat operator+(const Rat& o) const {
        __int128 n = static_cast<__int128>(num) * o.den +
                     static_cast<__int128>(o.num) * den;
        __int128 d = static_cast<__int128>(den) * o.den;
        __int128 g = gcd128(n < 0 ? -n : n, d);
        if (g > 1) {
            n /= g;
            d /= g;
        }
        if (n > INT64_MAX || n < INT64_MIN || d > INT64_MAX) {
            raise(errc::domain_error, "rational overflow");
        }
        return Rat{static_cast<std::int64_t>(n), static_cast<std::int64_t>(d)};
    }

    Rat operator/(std::int64_t k) const {
        if (k == 0) raise(errc::domain_error, "rational division by zero");
        __int128 n = num;
        __int128 d = static_cast<__int128>(den) * k;
        if (d < 0) {
            n = -n;
            d = -d;
        }
        __int128 g = gcd128(n < 0 ? -n : n, d);
        if (g > 1) {
            n /= g;
            d /= g;
        }
        if (n > INT64_MAX || n < INT64_MIN || d > INT64_MAX) {
            raise(errc::domain_error, "rational overflow");
        }
        return Rat{static_cast<std::int64_t>(n), static_cast<std::int64_t>(d)};
    }

    double value() const { return static_cast<double>(num) / static_cast<double>(den); }

    bool operator==(const Rat& o) const {
        return static_cast<__int128>(num) * o.den == static_cast<__int128>(o.num) * den;
    }
    bool operator<(const Rat& o) const {
        return static_cast<__int128>(num) * o.den < static_cast<__int128>(o.num) * den;
    }
    bool operator>(const Rat& o) const { return o < *this; }

  private:
    static __int128 gcd128(__int128 a, __int128 b) {
        while (b != 0) {
            __int128 t = a % b;
            a = b;
            b = t;
        }
        return a == 0 ? 1 : a;
    }
};

// Round the fraction num/den, interpreted as a proportion in [0,1], to a
// percentage with one decimal, half-up.  Returns tenths of a percent
// (e.g. 45.6% -> 456).  Exact: floor((2000*num + den) / (2*den)).
inline std::int64_t pct_tenths(std::int64_t num, std::int64_t den) {
    if (den <= 0) raise(errc::domain_error, "pct_tenths with non-positive denominator");
    __int128 n = static_cast<__int128>(2000) * num + den;
    __int128 d = static_cast<__int128>(2) * den;
    __int128 q = n / d;
    if (n < 0 && n % d != 0) --q;  // floor for negative values
    return static_cast<std::int64_t>(q);
}

inline std::int64_t pct_tenths(const Rat& r) { return pct_tenths(r.num, r.den); }

// Half-up rounding of an arbitrary percentage value to tenths; used where
// the input is already a mean of one-decimal cells (Average rows).
inline std::int64_t pct_tenths_of_sum(std::int64_t sum_tenths, std::int64_t count) {
    // mean of values given in tenths, rounded half-up back to tenths:
    // floor((2*sum + count) / (2*count))
    if (count <= 0) raise(errc::domain_error, "mean of empty set");
    __int128 n = static_cast<__int128>(2) * sum_tenths + count;
    __int128 d = static_cast<__int128>(2) * count;
    __int128 q = n / d;
    if (n < 0 && n % d != 0) --q;
    return static_cast<std::int64_t>(q);
}

// "45.6"-style rendering of a tenths-of-percent value.
inline std::string format_tenths(std::int64_t tenths) {
    std::int64_t whole = tenths / 10;
    std::int64_t frac = tenths % 10;
    if (frac < 0) {
        frac = -frac;
        if (whole == 0) return "-" + std::to_string(whole) + "." + std::to_string(frac);
    }
    return std::to_string(whole) + "." + std::to_string(frac);
}

}  // namespace timaudit
