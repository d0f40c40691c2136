// Parameter-transfer networks: the per-row CNN that fuses the previous model
// with a freshly fitted one, plus weighted-sum and MLP variants used as
// ablation baselines.
//
// All variants share one calling convention. A transfer maps a pair of
// length-d rows (w_prev treated as constant, w_hat trainable) to a length-d
// output row, caches intermediates, and provides two exact backward passes:
// backward_input (gradient w.r.t. w_hat) and backward_params (gradient
// w.r.t. the transfer's own tensors, accumulated across rows in call order).
#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "sml/activations.hpp"
#include "sml/matrix.hpp"
#include "sml/rng.hpp"

namespace sml {

inline constexpr double kStackEpsilon = 1e-15;

using Span = std::span<double>;
using ConstSpan = std::span<const double>;

// Gradient tensors aligned with a transfer's parameters() order.
struct TransferGrads {
    std::vector<DenseMatrix> tensors;

    void add_scaled(const std::vector<DenseMatrix*>& params, double scale) {
        for (std::size_t i = 0; i < tensors.size(); ++i)
            for (std::size_t j = 0; j < tensors[i].size(); ++j)
                tensors[i].data[j] += scale * params[i]->data[j];
    }
};

struct TensorRef {
    std::string name;
    DenseMatrix* tensor;
};

// Stack layer: rows are [w_prev; w_hat; (w_prev .* w_hat) / (||w_prev|| + eps)].
inline DenseMatrix stack(ConstSpan w_prev, ConstSpan w_hat, double epsilon = kStackEpsilon) {
    if (w_prev.size() != w_hat.size())
        throw std::invalid_argument("stack: input length mismatch");
    std::size_t d = w_prev.size();
    DenseMatrix h0(3, d);
    double inv_norm = 1.0 / (l2_norm(w_prev) + epsilon);
    for (std::size_t m = 0; m < d; ++m) {
        h0(0, m) = w_prev[m];
        h0(1, m) = w_hat[m];
        h0(2, m) = w_prev[m] * w_hat[m] * inv_norm;
    }
    return h0;
}

// ---------------------------------------------------------------------------
// CNN transfer: stack -> two stacks of vertical filters -> FC -> linear out.
// use_conv=false drops both convolution layers (FC reads the stacked matrix
// directly); use_fc=false drops the FC layer (linear output reads the
// flattened feature map). These two switches are the SML-CNN / SML-FC
// ablations.
// ---------------------------------------------------------------------------

struct CnnTransferConfig {
    std::size_t d = 16;
    std::size_t n1 = 10;
    std::size_t n2 = 5;
    std::size_t df = 512;
    bool use_conv = true;
    bool use_fc = true;
    double epsilon = kStackEpsilon;
};

class CnnTransfer {
public:
    struct Cache {
        DenseMatrix h0;          // 3 x d
        DenseMatrix a1, h1;      // n1 x d pre-activation / output
        DenseMatrix a2, h2;      // n2 x d
        std::vector<double> az;  // df FC pre-activation
        std::vector<double> z;   // df FC output
        double inv_norm = 0.0;   // 1 / (||w_prev|| + eps)
    };

    CnnTransfer() = default;
    explicit CnnTransfer(const CnnTransferConfig& cfg) : cfg_(cfg) {
        std::size_t feat_rows = cfg_.use_conv ? cfg_.n2 : 3;
        std::size_t flat = feat_rows * cfg_.d;
        if (cfg_.use_conv) {
            F1 = DenseMatrix(cfg_.n1, 3);
            F2 = DenseMatrix(cfg_.n2, cfg_.n1);
        }
        if (cfg_.use_fc) {
            Wf = DenseMatrix(flat, cfg_.df);
            b1 = DenseMatrix(1, cfg_.df);
            Wo = DenseMatrix(cfg_.df, cfg_.d);
        } else {
            Wo = DenseMatrix(flat, cfg_.d);
        }
        b2 = DenseMatrix(1, cfg_.d);
    }

    const CnnTransferConfig& config() const { return cfg_; }
    std::size_t dim() const { return cfg_.d; }

    // Gaussian(0, 2/fan_in) for weights, zero biases. Draw order is fixed:
    // F1, F2, Wf, Wo, each row-major.
    void init(RngStream& rng) {
        auto he = [&rng](DenseMatrix& t, std::size_t fan_in) {
            double sd = std::sqrt(2.0 / static_cast<double>(fan_in));
            for (double& v : t.data) v = rng.normal(0.0, sd);
        };
        if (cfg_.use_conv) {
            he(F1, 3);
            he(F2, cfg_.n1);
        }
        std::size_t flat = (cfg_.use_conv ? cfg_.n2 : 3) * cfg_.d;
        if (cfg_.use_fc) {
            he(Wf, flat);
            he(Wo, cfg_.df);
        } else {
            he(Wo, flat);
        }
        b2.fill(0.0);
        if (cfg_.use_fc) b1.fill(0.0);
    }

    void forward(ConstSpan w_prev, ConstSpan w_hat, Cache& cache, Span out) const {
        if (w_prev.size() != cfg_.d || w_hat.size() != cfg_.d || out.size() != cfg_.d)
            throw std::invalid_argument("CnnTransfer::forward: dimension mismatch");
        std::size_t d = cfg_.d;
        cache.h0 = stack(w_prev, w_hat, cfg_.epsilon);
        cache.inv_norm = 1.0 / (l2_norm(w_prev) + cfg_.epsilon);

        const DenseMatrix* feat = &cache.h0;
        if (cfg_.use_conv) {
            // H1[j,m] = GELU(<F1 row j, H0 column m>)
            cache.a1 = DenseMatrix(cfg_.n1, d);
            cache.h1 = DenseMatrix(cfg_.n1, d);
            for (std::size_t j = 0; j < cfg_.n1; ++j)
                for (std::size_t m = 0; m < d; ++m) {
                    double acc = 0.0;
                    for (std::size_t r = 0; r < 3; ++r) acc += F1(j, r) * cache.h0(r, m);
                    cache.a1(j, m) = acc;
                    cache.h1(j, m) = gelu(acc);
                }
            cache.a2 = DenseMatrix(cfg_.n2, d);
            cache.h2 = DenseMatrix(cfg_.n2, d);
            for (std::size_t j = 0; j < cfg_.n2; ++j)
                for (std::size_t m = 0; m < d; ++m) {
                    double acc = 0.0;
                    for (std::size_t k = 0; k < cfg_.n1; ++k) acc += F2(j, k) * cache.h1(k, m);
                    cache.a2(j, m) = acc;
                    cache.h2(j, m) = gelu(acc);
                }
            feat = &cache.h2;
        }

        // Row-major flatten of the feature map; this order is part of the
        // checkpoint contract.
        std::size_t flat = feat->size();
        if (cfg_.use_fc) {
            cache.az.assign(cfg_.df, 0.0);
            cache.z.assign(cfg_.df, 0.0);
            for (std::size_t k = 0; k < cfg_.df; ++k) {
                double acc = b1(0, k);
                for (std::size_t i = 0; i < flat; ++i) acc += Wf(i, k) * feat->data[i];
                cache.az[k] = acc;
                cache.z[k] = gelu(acc);
            }
            for (std::size_t m = 0; m < d; ++m) {
                double acc = b2(0, m);
                for (std::size_t k = 0; k < cfg_.df; ++k) acc += Wo(k, m) * cache.z[k];
                out[m] = acc;
            }
        } else {
            for (std::size_t m = 0; m < d; ++m) {
                double acc = b2(0, m);
                for (std::size_t i = 0; i < flat; ++i) acc += Wo(i, m) * feat->data[i];
                out[m] = acc;
            }
        }
    }

    // Gradient w.r.t. w_hat. w_prev is a constant input: row 0 of the stack
    // carries no gradient and the ||w_prev|| denominator is fixed.
    void backward_input(const Cache& cache, ConstSpan upstream, Span grad_w_hat) const {
        std::size_t d = cfg_.d;
        DenseMatrix dfeat = feature_grad(cache, upstream);
        DenseMatrix dh0 = cfg_.use_conv ? conv_backward_to_h0(cache, dfeat) : std::move(dfeat);
        for (std::size_t m = 0; m < d; ++m)
            grad_w_hat[m] = dh0(1, m) + dh0(2, m) * cache.h0(0, m) * cache.inv_norm;
    }

    // Gradients w.r.t. all transfer tensors, accumulated into `acc`.
    void backward_params(const Cache& cache, ConstSpan upstream, TransferGrads& acc) const {
        std::size_t d = cfg_.d;
        const DenseMatrix& feat = cfg_.use_conv ? cache.h2 : cache.h0;
        std::size_t flat = feat.size();
        std::size_t gi = 0;
        DenseMatrix* gF1 = cfg_.use_conv ? &acc.tensors[gi++] : nullptr;
        DenseMatrix* gF2 = cfg_.use_conv ? &acc.tensors[gi++] : nullptr;
        DenseMatrix* gWf = cfg_.use_fc ? &acc.tensors[gi++] : nullptr;
        DenseMatrix* gb1 = cfg_.use_fc ? &acc.tensors[gi++] : nullptr;
        DenseMatrix* gWo = &acc.tensors[gi++];
        DenseMatrix* gb2 = &acc.tensors[gi++];

        for (std::size_t m = 0; m < d; ++m) gb2->data[m] += upstream[m];
        if (cfg_.use_fc) {
            std::vector<double> daz(cfg_.df);
            for (std::size_t k = 0; k < cfg_.df; ++k) {
                double dz = 0.0;
                for (std::size_t m = 0; m < d; ++m) {
                    dz += Wo(k, m) * upstream[m];
                    (*gWo)(k, m) += cache.z[k] * upstream[m];
                }
                daz[k] = dz * gelu_grad(cache.az[k]);
                gb1->data[k] += daz[k];
            }
            for (std::size_t i = 0; i < flat; ++i)
                for (std::size_t k = 0; k < cfg_.df; ++k) (*gWf)(i, k) += feat.data[i] * daz[k];
        } else {
            for (std::size_t i = 0; i < flat; ++i)
                for (std::size_t m = 0; m < d; ++m) (*gWo)(i, m) += feat.data[i] * upstream[m];
        }

        if (cfg_.use_conv) {
            DenseMatrix dfeat = feature_grad(cache, upstream);
            // dA2 = dH2 .* GELU'(A2); gF2[j,k] += sum_m dA2[j,m] H1[k,m]
            DenseMatrix da2(cfg_.n2, d);
            for (std::size_t j = 0; j < cfg_.n2; ++j)
                for (std::size_t m = 0; m < d; ++m)
                    da2(j, m) = dfeat(j, m) * gelu_grad(cache.a2(j, m));
            for (std::size_t j = 0; j < cfg_.n2; ++j)
                for (std::size_t k = 0; k < cfg_.n1; ++k) {
                    double acc2 = 0.0;
                    for (std::size_t m = 0; m < d; ++m) acc2 += da2(j, m) * cache.h1(k, m);
                    (*gF2)(j, k) += acc2;
                }
            DenseMatrix da1(cfg_.n1, d);
            for (std::size_t k = 0; k < cfg_.n1; ++k)
                for (std::size_t m = 0; m < d; ++m) {
                    double dh1 = 0.0;
                    for (std::size_t j = 0; j < cfg_.n2; ++j) dh1 += F2(j, k) * da2(j, m);
                    da1(k, m) = dh1 * gelu_grad(cache.a1(k, m));
                }
            for (std::size_t j = 0; j < cfg_.n1; ++j)
                for (std::size_t r = 0; r < 3; ++r) {
                    double acc1 = 0.0;
                    for (std::size_t m = 0; m < d; ++m) acc1 += da1(j, m) * cache.h0(r, m);
                    (*gF1)(j, r) += acc1;
                }
        }
    }

    std::vector<TensorRef> parameters() {
        std::vector<TensorRef> out;
        if (cfg_.use_conv) {
            out.push_back({"F1", &F1});
            out.push_back({"F2", &F2});
        }
        if (cfg_.use_fc) {
            out.push_back({"Wf", &Wf});
            out.push_back({"b1", &b1});
        }
        out.push_back({"Wo", &Wo});
        out.push_back({"b2", &b2});
        return out;
    }

    TransferGrads zero_grads() const {
        TransferGrads g;
        if (cfg_.use_conv) {
            g.tensors.push_back(DenseMatrix(F1.rows, F1.cols));
            g.tensors.push_back(DenseMatrix(F2.rows, F2.cols));
        }
        if (cfg_.use_fc) {
            g.tensors.push_back(DenseMatrix(Wf.rows, Wf.cols));
            g.tensors.push_back(DenseMatrix(b1.rows, b1.cols));
        }
        g.tensors.push_back(DenseMatrix(Wo.rows, Wo.cols));
        g.tensors.push_back(DenseMatrix(b2.rows, b2.cols));
        return g;
    }

    DenseMatrix F1;  // n1 x 3 vertical filters
    DenseMatrix F2;  // n2 x n1
    DenseMatrix Wf;  // (feat_rows*d) x df
    DenseMatrix b1;  // 1 x df
    DenseMatrix Wo;  // df x d (or (feat_rows*d) x d without FC)
    DenseMatrix b2;  // 1 x d

private:
    // Gradient at the flattened feature map (H2 with conv, H0 without),
    // reshaped back to (rows, d).
    DenseMatrix feature_grad(const Cache& cache, ConstSpan upstream) const {
        std::size_t d = cfg_.d;
        std::size_t rows = cfg_.use_conv ? cfg_.n2 : 3;
        DenseMatrix dfeat(rows, d);
        if (cfg_.use_fc) {
            for (std::size_t k = 0; k < cfg_.df; ++k) {
                double dz = 0.0;
                for (std::size_t m = 0; m < d; ++m) dz += Wo(k, m) * upstream[m];
                double daz = dz * gelu_grad(cache.az[k]);
                for (std::size_t i = 0; i < dfeat.size(); ++i) dfeat.data[i] += Wf(i, k) * daz;
            }
        } else {
            for (std::size_t i = 0; i < dfeat.size(); ++i) {
                double acc = 0.0;
                for (std::size_t m = 0; m < d; ++m) acc += Wo(i, m) * upstream[m];
                dfeat.data[i] = acc;
            }
        }
        return dfeat;
    }

    DenseMatrix conv_backward_to_h0(const Cache& cache, const DenseMatrix& dh2) const {
        std::size_t d = cfg_.d;
        DenseMatrix dh0(3, d);
        for (std::size_t m = 0; m < d; ++m) {
            for (std::size_t k = 0; k < cfg_.n1; ++k) {
                double dh1 = 0.0;
                for (std::size_t j = 0; j < cfg_.n2; ++j)
                    dh1 += F2(j, k) * dh2(j, m) * gelu_grad(cache.a2(j, m));
                double da1 = dh1 * gelu_grad(cache.a1(k, m));
                for (std::size_t r = 0; r < 3; ++r) dh0(r, m) += F1(k, r) * da1;
            }
        }
        return dh0;
    }

    CnnTransferConfig cfg_;
};

// ---------------------------------------------------------------------------
// Weighted sum: out = alpha * w_prev + (1 - alpha) * w_hat. Alpha is either
// fixed, or learnable through a logistic reparameterization that keeps it in
// [0, 1].
// ---------------------------------------------------------------------------

class WeightedSumTransfer {
public:
    struct Cache {
        std::vector<double> w_prev;
        std::vector<double> w_hat;
    };

    WeightedSumTransfer() = default;

    static WeightedSumTransfer fixed(std::size_t d, double alpha) {
        WeightedSumTransfer t;
        t.d_ = d;
        t.trainable_ = false;
        t.alpha_ = alpha;
        return t;
    }

    static WeightedSumTransfer learnable(std::size_t d, double initial_alpha = 0.5) {
        WeightedSumTransfer t;
        t.d_ = d;
        t.trainable_ = true;
        t.logit_ = DenseMatrix(1, 1);
        // logit = log(a / (1-a))
        double a = std::min(std::max(initial_alpha, 1e-6), 1.0 - 1e-6);
        t.logit_(0, 0) = std::log(a / (1.0 - a));
        return t;
    }

    std::size_t dim() const { return d_; }
    bool trainable() const { return trainable_; }
    double alpha() const { return trainable_ ? sigmoid(logit_(0, 0)) : alpha_; }

    void init(RngStream&) {}

    void forward(ConstSpan w_prev, ConstSpan w_hat, Cache& cache, Span out) const {
        if (w_prev.size() != d_ || w_hat.size() != d_)
            throw std::invalid_argument("WeightedSumTransfer::forward: dimension mismatch");
        double a = alpha();
        cache.w_prev.assign(w_prev.begin(), w_prev.end());
        cache.w_hat.assign(w_hat.begin(), w_hat.end());
        // The endpoints return the inputs exactly (bitwise), not through the
        // arithmetic identity 0*x + 1*y.
        if (a == 0.0) {
            std::copy(w_hat.begin(), w_hat.end(), out.begin());
        } else if (a == 1.0) {
            std::copy(w_prev.begin(), w_prev.end(), out.begin());
        } else {
            for (std::size_t m = 0; m < d_; ++m) out[m] = a * w_prev[m] + (1.0 - a) * w_hat[m];
        }
    }

    void backward_input(const Cache&, ConstSpan upstream, Span grad_w_hat) const {
        double a = alpha();
        for (std::size_t m = 0; m < d_; ++m) grad_w_hat[m] = (1.0 - a) * upstream[m];
    }

    void backward_params(const Cache& cache, ConstSpan upstream, TransferGrads& acc) const {
        if (!trainable_) return;
        double a = alpha();
        double da_dlogit = a * (1.0 - a);
        double g = 0.0;
        for (std::size_t m = 0; m < d_; ++m)
            g += upstream[m] * (cache.w_prev[m] - cache.w_hat[m]);
        acc.tensors[0](0, 0) += g * da_dlogit;
    }

    std::vector<TensorRef> parameters() {
        if (!trainable_) return {};
        return {{"alpha_logit", &logit_}};
    }

    TransferGrads zero_grads() const {
        TransferGrads g;
        if (trainable_) g.tensors.push_back(DenseMatrix(1, 1));
        return g;
    }

private:
    std::size_t d_ = 0;
    bool trainable_ = false;
    double alpha_ = 0.5;       // used when fixed
    DenseMatrix logit_;        // 1x1, used when trainable
};

// ---------------------------------------------------------------------------
// MLP transfer: out = linear(GELU(...GELU(W1^T [w_prev || w_hat] + b1)...)).
// Applied per row like the CNN so the ablation stays comparable.
// ---------------------------------------------------------------------------

class MlpTransfer {
public:
    struct Cache {
        std::vector<double> input;                 // 2d
        std::vector<std::vector<double>> pre;      // per hidden layer
        std::vector<std::vector<double>> act;      // per hidden layer
    };

    MlpTransfer() = default;
    MlpTransfer(std::size_t d, std::vector<std::size_t> hidden) : d_(d), hidden_(std::move(hidden)) {
        std::size_t in = 2 * d_;
        for (std::size_t h : hidden_) {
            weights_.push_back(DenseMatrix(in, h));
            biases_.push_back(DenseMatrix(1, h));
            in = h;
        }
        out_w_ = DenseMatrix(in, d_);
        out_b_ = DenseMatrix(1, d_);
    }

    std::size_t dim() const { return d_; }

    void init(RngStream& rng) {
        std::size_t in = 2 * d_;
        for (std::size_t l = 0; l < weights_.size(); ++l) {
            double sd = std::sqrt(2.0 / static_cast<double>(in));
            for (double& v : weights_[l].data) v = rng.normal(0.0, sd);
            biases_[l].fill(0.0);
            in = hidden_[l];
        }
        double sd = std::sqrt(2.0 / static_cast<double>(in));
        for (double& v : out_w_.data) v = rng.normal(0.0, sd);
        out_b_.fill(0.0);
    }

    void forward(ConstSpan w_prev, ConstSpan w_hat, Cache& cache, Span out) const {
        if (w_prev.size() != d_ || w_hat.size() != d_)
            throw std::invalid_argument("MlpTransfer::forward: dimension mismatch");
        cache.input.resize(2 * d_);
        std::copy(w_prev.begin(), w_prev.end(), cache.input.begin());
        std::copy(w_hat.begin(), w_hat.end(), cache.input.begin() + static_cast<std::ptrdiff_t>(d_));
        cache.pre.assign(weights_.size(), {});
        cache.act.assign(weights_.size(), {});
        const std::vector<double>* cur = &cache.input;
        for (std::size_t l = 0; l < weights_.size(); ++l) {
            std::size_t h = hidden_[l];
            cache.pre[l].assign(h, 0.0);
            cache.act[l].assign(h, 0.0);
            for (std::size_t k = 0; k < h; ++k) {
                double acc = biases_[l](0, k);
                for (std::size_t i = 0; i < cur->size(); ++i) acc += weights_[l](i, k) * (*cur)[i];
                cache.pre[l][k] = acc;
                cache.act[l][k] = gelu(acc);
            }
            cur = &cache.act[l];
        }
        for (std::size_t m = 0; m < d_; ++m) {
            double acc = out_b_(0, m);
            for (std::size_t i = 0; i < cur->size(); ++i) acc += out_w_(i, m) * (*cur)[i];
            out[m] = acc;
        }
    }

    void backward_input(const Cache& cache, ConstSpan upstream, Span grad_w_hat) const {
        std::vector<double> dinput = backward_to_input(cache, upstream, nullptr);
        // Only the w_hat half of the input carries gradient.
        for (std::size_t m = 0; m < d_; ++m) grad_w_hat[m] = dinput[d_ + m];
    }

    void backward_params(const Cache& cache, ConstSpan upstream, TransferGrads& acc) const {
        backward_to_input(cache, upstream, &acc);
    }

    std::vector<TensorRef> parameters() {
        std::vector<TensorRef> out;
        for (std::size_t l = 0; l < weights_.size(); ++l) {
            out.push_back({"M" + std::to_string(l) + ".W", &weights_[l]});
            out.push_back({"M" + std::to_string(l) + ".b", &biases_[l]});
        }
        out.push_back({"out.W", &out_w_});
        out.push_back({"out.b", &out_b_});
        return out;
    }

    TransferGrads zero_grads() const {
        TransferGrads g;
        for (std::size_t l = 0; l < weights_.size(); ++l) {
            g.tensors.push_back(DenseMatrix(weights_[l].rows, weights_[l].cols));
            g.tensors.push_back(DenseMatrix(biases_[l].rows, biases_[l].cols));
        }
        g.tensors.push_back(DenseMatrix(out_w_.rows, out_w_.cols));
        g.tensors.push_back(DenseMatrix(out_b_.rows, out_b_.cols));
        return g;
    }

private:
    // Shared backward walk; accumulates parameter grads when acc != nullptr
    // and always returns the gradient at the stacked input.
    std::vector<double> backward_to_input(const Cache& cache, ConstSpan upstream,
                                          TransferGrads* acc) const {
        std::size_t L = weights_.size();
        const std::vector<double>& last = L > 0 ? cache.act[L - 1] : cache.input;
        std::vector<double> delta(last.size(), 0.0);
        if (acc) {
            DenseMatrix& gw = acc->tensors[2 * L];
            DenseMatrix& gb = acc->tensors[2 * L + 1];
            for (std::size_t m = 0; m < d_; ++m) {
                gb(0, m) += upstream[m];
                for (std::size_t i = 0; i < last.size(); ++i) gw(i, m) += last[i] * upstream[m];
            }
        }
        for (std::size_t i = 0; i < last.size(); ++i) {
            double g = 0.0;
            for (std::size_t m = 0; m < d_; ++m) g += out_w_(i, m) * upstream[m];
            delta[i] = g;
        }
        for (std::size_t l = L; l-- > 0;) {
            const std::vector<double>& below = l > 0 ? cache.act[l - 1] : cache.input;
            std::vector<double> dpre(delta.size());
            for (std::size_t k = 0; k < delta.size(); ++k)
                dpre[k] = delta[k] * gelu_grad(cache.pre[l][k]);
            if (acc) {
                DenseMatrix& gw = acc->tensors[2 * l];
                DenseMatrix& gb = acc->tensors[2 * l + 1];
                for (std::size_t k = 0; k < dpre.size(); ++k) {
                    gb(0, k) += dpre[k];
                    for (std::size_t i = 0; i < below.size(); ++i) gw(i, k) += below[i] * dpre[k];
                }
            }
            std::vector<double> dnext(below.size(), 0.0);
            for (std::size_t i = 0; i < below.size(); ++i) {
                double g = 0.0;
                for (std::size_t k = 0; k < dpre.size(); ++k) g += weights_[l](i, k) * dpre[k];
                dnext[i] = g;
            }
            delta = std::move(dnext);
        }
        return delta;
    }

    std::size_t d_ = 0;
    std::vector<std::size_t> hidden_;
    std::vector<DenseMatrix> weights_;
    std::vector<DenseMatrix> biases_;
    DenseMatrix out_w_;
    DenseMatrix out_b_;
};

// Applies a transfer row by row; rows are independent and the output always
// has the exact shape of W_prev.
template <class Transfer>
DenseMatrix apply_group(const Transfer& transfer, const DenseMatrix& w_prev,
                        const DenseMatrix& w_hat) {
    require_same_shape(w_prev, w_hat, "apply_group");
    if (w_prev.cols != transfer.dim())
        throw std::invalid_argument("apply_group: row length does not match transfer dim");
    DenseMatrix out(w_prev.rows, w_prev.cols);
    typename Transfer::Cache cache;
    for (std::size_t r = 0; r < w_prev.rows; ++r)
        transfer.forward(w_prev.row(r), w_hat.row(r), cache, out.row(r));
    return out;
}

}  // namespace sml
