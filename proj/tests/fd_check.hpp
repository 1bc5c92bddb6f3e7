#pragma once

// Central finite-difference oracle shared by the gradient tests. The oracle
// perturbs selected coordinates of a flat input and compares (f(x+h)-f(x-h))
// / 2h against the analytic gradient, plus one random-direction directional
// derivative that touches every coordinate at once.

#include "ipga/rng.hpp"

#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

namespace ipga::testutil {

struct FdReport {
    double max_rel_err = 0.0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
    std::size_t checks = 0;
};

// f: evaluates the scalar loss at x. grad: analytic gradient at x.
inline FdReport fd_compare(const std::function<double(const std::vector<double>&)>& f,
                           const std::vector<double>& x, const std::vector<double>& grad,
                           Rng& rng, int n_coords = 6, double h = 1e-5,
                           double denom_floor = 1e-8) {
    FdReport rep;
    auto record = [&](double analytic, double numeric) {
        double denom = std::max({std::abs(analytic), std::abs(numeric), denom_floor});
        double rel = std::abs(analytic - numeric) / denom;
        if (rel > rep.max_rel_err) {
            rep.max_rel_err = rel;
            rep.worst_analytic = analytic;
            rep.worst_numeric = numeric;
        }
        ++rep.checks;
    };

    // Coordinate probes.
    for (int c = 0; c < n_coords; ++c) {
        std::size_t i = static_cast<std::size_t>(rng.uniform_int(static_cast<int>(x.size())));
        std::vector<double> xp = x, xm = x;
        xp[i] += h;
        xm[i] -= h;
        record(grad[i], (f(xp) - f(xm)) / (2.0 * h));
    }

    // Directional probe along a random unit vector.
    std::vector<double> dir(x.size());
    double nrm = 0.0;
    for (auto& d : dir) {
        d = rng.normal();
        nrm += d * d;
    }
    nrm = std::sqrt(nrm);
    std::vector<double> xp = x, xm = x;
    double analytic_dir = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        double u = dir[i] / nrm;
        xp[i] += h * u;
        xm[i] -= h * u;
        analytic_dir += grad[i] * u;
    }
    record(analytic_dir, (f(xp) - f(xm)) / (2.0 * h));
    return rep;
}

} // namespace ipga::testutil
