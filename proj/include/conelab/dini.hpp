#pragma once

// Moduli of continuity omega(t) = sup_{B_t(0)} |A - Abar| and their Dini integrals.

#include "conelab/coefficient.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <ostream>
#include <vector>

namespace conelab {

/// Logarithmically spaced radii from t_min to t_max inclusive.
inline std::vector<double> log_grid(double t_min, double t_max, int per_decade = 40) {
    if (!(t_min > 0.0) || !(t_max > t_min)) throw InvalidArgument("log_grid: need 0 < t_min < t_max");
    if (per_decade < 1) throw InvalidArgument("log_grid: per_decade must be positive");
    const double decades = std::log10(t_max / t_min);
    const int steps = std::max(1, static_cast<int>(std::lround(decades * per_decade)));
    std::vector<double> t(steps + 1);
    for (int k = 0; k <= steps; ++k)
        t[k] = t_min * std::pow(t_max / t_min, static_cast<double>(k) / steps);
    t.back() = t_max;
    return t;
}

inline std::vector<double> default_modulus_grid() { return log_grid(1e-2, 1.0, 40); }

/// Nondecreasing samples of a modulus on an increasing grid.
class DiniModulus {
public:
    DiniModulus(std::vector<double> t, std::vector<double> omega) : t_(std::move(t)), w_(std::move(omega)) {
        if (t_.size() != w_.size() || t_.size() < 2)
            throw InvalidArgument("DiniModulus: need at least two (t, omega) samples");
        for (std::size_t k = 0; k < t_.size(); ++k) {
            if (!(t_[k] > 0.0)) throw InvalidArgument("DiniModulus: radii must be positive");
            if (k && !(t_[k] > t_[k - 1])) throw InvalidArgument("DiniModulus: radii must increase");
            if (!(w_[k] >= 0.0)) throw InvalidArgument("DiniModulus: values must be nonnegative");
        }
        for (std::size_t k = 1; k < w_.size(); ++k) nondecreasing_ = nondecreasing_ && w_[k] >= w_[k - 1];
    }

    static DiniModulus from_function(const std::function<double(double)>& omega, std::vector<double> t) {
        std::vector<double> w(t.size());
        for (std::size_t k = 0; k < t.size(); ++k) w[k] = omega(t[k]);
        return DiniModulus(std::move(t), std::move(w));
    }

    const std::vector<double>& radii() const noexcept { return t_; }
    const std::vector<double>& values() const noexcept { return w_; }
    bool nondecreasing() const noexcept { return nondecreasing_; }

    /// Upper step interpolation: the value at the first grid radius >= t.
    double operator()(double t) const {
        auto it = std::lower_bound(t_.begin(), t_.end(), t * (1.0 - 1e-12));
        if (it == t_.end()) return w_.back();
        return w_[static_cast<std::size_t>(it - t_.begin())];
    }

    void write_csv(std::ostream& os) const {
        os << "t [length],omega [1]\n";
        os.precision(17);
        for (std::size_t k = 0; k < t_.size(); ++k) os << t_[k] << ',' << w_[k] << '\n';
    }

private:
    std::vector<double> t_;
    std::vector<double> w_;
    bool nondecreasing_ = true;
};

/// omega(t_k) = max of |A - Abar| (spectral norm) over quasi-random samples of
/// B_{t_k}(0), followed by a cumulative max.
inline DiniModulus estimate_modulus(const CoefficientField& A, const CoefficientField& Abar,
                                    const std::vector<double>& grid, std::size_t samples = 4096) {
    if (A.dimension() != Abar.dimension())
        throw InvalidArgument("estimate_modulus: fields have different dimensions");
    if (samples == 0) throw InvalidArgument("estimate_modulus: empty sample set");
    const auto ball = sobol_unit_ball(A.dimension(), samples);
    std::vector<double> w(grid.size(), 0.0);
    for (std::size_t k = 0; k < grid.size(); ++k) {
        double m = 0.0;
        for (const Point& u : ball) {
            const Point x = grid[k] * u;
            m = std::max(m, spectral_norm(A(x) - Abar(x)));
        }
        w[k] = k ? std::max(w[k - 1], m) : m;
    }
    return DiniModulus(grid, std::move(w));
}

struct DiniIntegral {
    bool divergent = false;
    double value = 0.0;       ///< log-trapezoid over the grid plus power-law tail
    double upper_sum = 0.0;   ///< upper Riemann sum over the grid plus the same tail
    double tail = 0.0;        ///< estimated contribution of (0, t_min)
    double small_slope = 0.0; ///< log-log slope of omega in the smallest decade
    double large_slope = 0.0; ///< log-log slope of omega in the largest decade
};

namespace detail {

inline double loglog_slope(const std::vector<double>& t, const std::vector<double>& w, std::size_t a,
                           std::size_t b) {
    if (!(w[a] > 0.0) || !(w[b] > 0.0)) return 0.0;
    return std::log(w[b] / w[a]) / std::log(t[b] / t[a]);
}

}  // namespace detail

/// Integral of omega(t)/t over (0, upper]. The part below the grid is closed by the
/// power law omega(t) ~ omega(t_min) (t/t_min)^beta fitted on the smallest decade;
/// moduli that flatten toward 0 (beta small, or decaying markedly slower at the
/// small end than at the large end) are reported divergent.
inline DiniIntegral dini_integral(const DiniModulus& w, double upper = std::numeric_limits<double>::infinity()) {
    if (!w.nondecreasing()) throw InvalidArgument("dini_integral: modulus is not nondecreasing");
    std::vector<double> t = w.radii();
    std::vector<double> v = w.values();
    if (upper < t.back()) {
        if (!(upper > t.front())) throw InvalidArgument("dini_integral: upper limit below the grid");
        std::size_t k = static_cast<std::size_t>(std::upper_bound(t.begin(), t.end(), upper) - t.begin());
        const double s = std::log(upper / t[k - 1]) / std::log(t[k] / t[k - 1]);
        const double vu = v[k - 1] + s * (v[k] - v[k - 1]);
        t.resize(k);
        v.resize(k);
        if (upper > t.back()) {
            t.push_back(upper);
            v.push_back(vu);
        }
    }
    DiniIntegral out;
    const std::size_t n = t.size();
    if (v.front() == 0.0) {
        out.small_slope = out.large_slope = std::numeric_limits<double>::infinity();
    } else {
        const double decade = 10.0;
        std::size_t a = 0;
        while (a + 1 < n && t[a + 1] <= t[0] * decade * (1 + 1e-9)) ++a;
        out.small_slope = detail::loglog_slope(t, v, 0, std::max<std::size_t>(a, 1));
        std::size_t b = n - 1;
        while (b > 0 && t[b - 1] >= t[n - 1] / decade * (1 - 1e-9)) --b;
        out.large_slope = detail::loglog_slope(t, v, std::min(b, n - 2), n - 1);
        const bool two_decades = t.back() / t.front() >= decade * decade * (1 - 1e-9);
        if (out.small_slope < 0.05) out.divergent = true;
        if (two_decades && out.small_slope < 0.75 * out.large_slope) out.divergent = true;
    }
    if (out.divergent) {
        out.value = out.upper_sum = out.tail = std::numeric_limits<double>::infinity();
        return out;
    }
    out.tail = v.front() == 0.0 ? 0.0 : v.front() / out.small_slope;
    double trap = 0.0;
    double upper_sum = 0.0;
    for (std::size_t k = 1; k < n; ++k) {
        const double dl = std::log(t[k] / t[k - 1]);
        trap += 0.5 * (v[k] + v[k - 1]) * dl;
        upper_sum += v[k] * dl;
    }
    out.value = trap + out.tail;
    out.upper_sum = upper_sum + out.tail;
    return out;
}

}  // namespace conelab
