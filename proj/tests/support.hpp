#pragma once

#include "ital/linmodel.hpp"
#include "ital/random.hpp"

#include <algorithm>
#include <functional>

namespace ital::testing {

/// Central differences of f at p, step h, one coordinate at a time.
inline Params numeric_gradient(const std::function<double(const Params&)>& f, const Params& p, double h = 1e-5) {
    Params g(p.rows(), p.cols());
    Params probe = p;
    for (Eigen::Index r = 0; r < p.rows(); ++r) {
        for (Eigen::Index c = 0; c < p.cols(); ++c) {
            const double orig = probe(r, c);
            probe(r, c) = orig + h;
            const double up = f(probe);
            probe(r, c) = orig - h;
            const double down = f(probe);
            probe(r, c) = orig;
            g(r, c) = (up - down) / (2 * h);
        }
    }
    return g;
}

/// max|a - b| / max(|a|_inf, |b|_inf); the absolute gap when both vanish.
inline double relative_error(const Params& a, const Params& b) {
    const double scale = std::max(a.cwiseAbs().maxCoeff(), b.cwiseAbs().maxCoeff());
    const double diff = (a - b).cwiseAbs().maxCoeff();
    return scale > 1e-12 ? diff / scale : diff;
}

inline Params random_params(Eigen::Index rows, Eigen::Index cols, Rng& rng, double scale = 1.0) {
    Params p(rows, cols);
    for (Eigen::Index i = 0; i < p.size(); ++i) p.data()[i] = uniform(rng, -scale, scale);
    return p;
}

inline Vector random_vector(Eigen::Index n, Rng& rng, double scale = 1.0) {
    Vector v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = uniform(rng, -scale, scale);
    return v;
}

} // namespace ital::testing
