// Reference retraining strategies sharing the MF model, loss, negative
// sampling, and optimizer with the sequential meta-learner: Full-retrain,
// Fine-tune, and a uniform-reservoir retrain standing in for sample-based
// methods.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sml/mf.hpp"
#include "sml/rng.hpp"
#include "sml/trainer.hpp"

namespace sml {

struct BaselineConfig {
    std::size_t epochs = 10;
    double lr = 0.01;
    OptimizerKind optimizer = OptimizerKind::adam;
    double lambda = 0.0;
    std::size_t batch_size = 0;
    bool freeze_negatives = false;
    std::uint64_t seed = 1;
    std::size_t d = 16;

    TrainConfig as_train_config() const {
        TrainConfig tc;
        tc.lambda1 = lambda;
        tc.step1_epochs = epochs;
        tc.lr_embedding = lr;
        tc.embedding_optimizer = optimizer;
        tc.batch_size = batch_size;
        tc.freeze_negatives = freeze_negatives;
        tc.seed = seed;
        tc.d = d;
        return tc;
    }
};

struct RetrainContext {
    const ObservedSets& observed;  // cumulative through the current period
    std::size_t n_items = 0;       // item universe for negative sampling
    std::size_t period = 0;        // used for rng stream labels
};

// Plain MF log-loss training, implemented as Step 1 with an identity
// (alpha = 0 weighted-sum) transfer so every strategy runs the exact same
// inner loop as the meta-learner.
inline Embeddings train_mf(const std::vector<Interaction>& positives, const Embeddings& w_init,
                           const BaselineConfig& cfg, const RetrainContext& ctx) {
    if (positives.empty()) return w_init;
    WeightedSumTransfer identity = WeightedSumTransfer::fixed(cfg.d, 0.0);
    Embeddings w = w_init;
    OptimizerState opt_p = OptimizerState::make(cfg.optimizer, cfg.lr, w.n_users(), cfg.d);
    OptimizerState opt_q = OptimizerState::make(cfg.optimizer, cfg.lr, w.n_items(), cfg.d);
    TrainConfig tc = cfg.as_train_config();
    fit_period_embeddings(identity, identity, w_init, w, opt_p, opt_q, positives, ctx.observed,
                          ctx.n_items, cfg.epochs, 0, tc, "neg1/t" + std::to_string(ctx.period));
    return w;
}

// Log-loss training on all data up to the current period, initialized from
// the previous model.
inline Embeddings full_retrain(const std::vector<Interaction>& all_data_through_t,
                               const Embeddings& w_prev, const BaselineConfig& cfg,
                               const RetrainContext& ctx) {
    return train_mf(all_data_through_t, w_prev, cfg, ctx);
}

// Training on the newest period only, initialized from the previous model.
inline Embeddings fine_tune(const std::vector<Interaction>& d_t, const Embeddings& w_prev,
                            const BaselineConfig& cfg, const RetrainContext& ctx) {
    return train_mf(d_t, w_prev, cfg, ctx);
}

// Uniform reservoir (algorithm R): keeps each offered interaction with
// probability capacity/seen.
struct Reservoir {
    std::size_t capacity = 0;
    std::vector<Interaction> samples;
    std::size_t seen = 0;
};

inline void reservoir_offer_inplace(Reservoir& res, const Interaction& x, RngStream& rng) {
    ++res.seen;
    if (res.samples.size() < res.capacity) {
        res.samples.push_back(x);
        return;
    }
    if (res.capacity == 0) return;
    std::size_t j = static_cast<std::size_t>(rng.below(res.seen));
    if (j < res.capacity) res.samples[j] = x;
}

inline Reservoir reservoir_offer(Reservoir res, const Interaction& x, RngStream& rng) {
    reservoir_offer_inplace(res, x, rng);
    return res;
}

// Fine-tunes on D_t followed by the reservoir's samples, then offers all of
// D_t to the reservoir (stream "reservoir/t<period>").
inline Embeddings reservoir_retrain(const std::vector<Interaction>& d_t, Reservoir& res,
                                    const Embeddings& w_prev, const BaselineConfig& cfg,
                                    const RetrainContext& ctx) {
    std::vector<Interaction> training = d_t;
    training.insert(training.end(), res.samples.begin(), res.samples.end());
    Embeddings w = train_mf(training, w_prev, cfg, ctx);
    RngStream rng(cfg.seed, "reservoir/t" + std::to_string(ctx.period));
    for (const Interaction& x : d_t) reservoir_offer_inplace(res, x, rng);
    return w;
}

}  // namespace sml
