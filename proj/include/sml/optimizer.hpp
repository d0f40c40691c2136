// SGD and Adam on DenseMatrix tensors, with sparse per-row application for
// embedding tables.
//
// Contract: a step with an all-zero gradient leaves the parameters bitwise
// untouched (the step counter still advances). Row updates are lazy Adam:
// moments of a row move only when that row receives gradient, and bias
// correction uses the shared step counter.
#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>

#include "sml/matrix.hpp"

namespace sml {

enum class OptimizerKind { sgd, adam };

struct OptimizerState {
    OptimizerKind kind = OptimizerKind::sgd;
    double learning_rate = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::int64_t step = 0;
    DenseMatrix m;  // first moment, adam only
    DenseMatrix v;  // second moment, adam only

    static OptimizerState make(OptimizerKind kind, double lr, std::size_t rows, std::size_t cols) {
        OptimizerState s;
        s.kind = kind;
        s.learning_rate = lr;
        if (kind == OptimizerKind::adam) {
            s.m = DenseMatrix(rows, cols);
            s.v = DenseMatrix(rows, cols);
        }
        return s;
    }

    // Grow moment buffers when an embedding table grows; new rows start at zero.
    void ensure_shape(std::size_t rows, std::size_t cols) {
        if (kind != OptimizerKind::adam) return;
        if (m.rows == rows && m.cols == cols) return;
        if (rows < m.rows || (m.rows > 0 && cols != m.cols))
            throw std::invalid_argument("OptimizerState::ensure_shape: cannot shrink or reshape");
        DenseMatrix nm(rows, cols), nv(rows, cols);
        std::copy(m.data.begin(), m.data.end(), nm.data.begin());
        std::copy(v.data.begin(), v.data.end(), nv.data.begin());
        m = std::move(nm);
        v = std::move(nv);
    }

    void begin_step() { ++step; }

    // Update one row in place. Caller has already advanced the step counter
    // and only presents rows with nonzero gradient.
    void update_row(DenseMatrix& params, std::size_t row, std::span<const double> grad) {
        if (kind == OptimizerKind::sgd) {
            auto p = params.row(row);
            for (std::size_t j = 0; j < grad.size(); ++j) p[j] -= learning_rate * grad[j];
            return;
        }
        double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step));
        double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step));
        auto p = params.row(row);
        auto mr = m.row(row);
        auto vr = v.row(row);
        for (std::size_t j = 0; j < grad.size(); ++j) {
            double g = grad[j];
            mr[j] = beta1 * mr[j] + (1.0 - beta1) * g;
            vr[j] = beta2 * vr[j] + (1.0 - beta2) * g * g;
            double mhat = mr[j] / bc1;
            double vhat = vr[j] / bc2;
            p[j] -= learning_rate * mhat / (std::sqrt(vhat) + epsilon);
        }
    }
};

// Whole-tensor step. Returns updated parameters; `state` is mutated.
inline DenseMatrix optimizer_step(const DenseMatrix& params, const DenseMatrix& grads,
                                  OptimizerState& state) {
    require_same_shape(params, grads, "optimizer_step");
    if (state.kind == OptimizerKind::adam && state.m.rows > 0)
        require_same_shape(params, state.m, "optimizer_step (moments)");

    state.begin_step();
    bool all_zero = true;
    for (double g : grads.data)
        if (g != 0.0) {
            all_zero = false;
            break;
        }
    DenseMatrix out = params;
    if (all_zero) return out;

    if (state.kind == OptimizerKind::adam && state.m.rows == 0) {
        state.m = DenseMatrix(params.rows, params.cols);
        state.v = DenseMatrix(params.rows, params.cols);
    }
    for (std::size_t r = 0; r < params.rows; ++r) {
        // Skip untouched rows so sparse semantics match update_row.
        auto gr = grads.row(r);
        bool zero_row = true;
        for (double g : gr)
            if (g != 0.0) {
                zero_row = false;
                break;
            }
        if (!zero_row) state.update_row(out, r, gr);
    }
    return out;
}

}  // namespace sml
