// Central finite-difference gradient oracle.
#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>

#include "sml/matrix.hpp"

namespace sml {

struct GradCheckReport {
    bool pass = true;
    double max_relative_error = 0.0;
    std::size_t worst_row = 0;
    std::size_t worst_col = 0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
};

// Compares `analytic` against the central difference of `f` at `params`,
// coordinate by coordinate. Relative error uses a 1e-8 floor in the
// denominator so near-zero coordinates do not blow up the ratio.
inline GradCheckReport finite_diff_check(const std::function<double(const DenseMatrix&)>& f,
                                         const DenseMatrix& params, const DenseMatrix& analytic,
                                         double h, double tol) {
    require_same_shape(params, analytic, "finite_diff_check");
    if (!(h >= 1e-6 && h <= 1e-3))
        throw std::invalid_argument("finite_diff_check: h must be in [1e-6, 1e-3]");

    GradCheckReport rep;
    DenseMatrix work = params;
    for (std::size_t i = 0; i < work.size(); ++i) {
        double orig = work.data[i];
        work.data[i] = orig + h;
        double fp = f(work);
        work.data[i] = orig - h;
        double fm = f(work);
        work.data[i] = orig;
        if (!std::isfinite(fp) || !std::isfinite(fm))
            throw std::runtime_error("finite_diff_check: non-finite evaluation at coordinate (" +
                                     std::to_string(i / params.cols) + "," +
                                     std::to_string(i % params.cols) + ")");
        double numeric = (fp - fm) / (2.0 * h);
        double a = analytic.data[i];
        double rel = std::abs(a - numeric) /
                     std::max({std::abs(a), std::abs(numeric), 1e-8});
        if (rel > rep.max_relative_error) {
            rep.max_relative_error = rel;
            rep.worst_row = i / params.cols;
            rep.worst_col = i % params.cols;
            rep.worst_analytic = a;
            rep.worst_numeric = numeric;
        }
    }
    rep.pass = rep.max_relative_error <= tol;
    return rep;
}

}  // namespace sml
