// Strategy drivers shared by the CLI and the acceptance suite: full offline
// train + serve-time walks for SML and the baselines, the retraining-cost
// bench, gradient-check suites, and the synthetic directional experiment.
#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "sml/baselines.hpp"
#include "sml/data.hpp"
#include "sml/errors.hpp"
#include "sml/evaluation.hpp"
#include "sml/gradcheck.hpp"
#include "sml/trainer.hpp"

namespace sml {

enum class Strategy { sml, full, finetune, reservoir };

inline Strategy parse_strategy(const std::string& s) {
    if (s == "sml") return Strategy::sml;
    if (s == "full") return Strategy::full;
    if (s == "finetune") return Strategy::finetune;
    if (s == "reservoir") return Strategy::reservoir;
    throw ConfigError("unknown strategy: " + s);
}

inline const char* strategy_name(Strategy s) {
    switch (s) {
        case Strategy::sml: return "sml";
        case Strategy::full: return "full";
        case Strategy::finetune: return "finetune";
        default: return "reservoir";
    }
}

// Transfer architecture selection (CLI --variant plus the CNN ablations).
struct VariantSpec {
    enum class Kind { cnn, weighted_sum, mlp };
    Kind kind = Kind::cnn;
    bool no_conv = false;  // SML-CNN ablation
    bool no_fc = false;    // SML-FC ablation
    double alpha = 0.5;    // weighted_sum initial / fixed value
    bool alpha_trainable = true;
    std::vector<std::size_t> mlp_hidden = {64};
};

inline CnnTransfer make_cnn_transfer(const TrainConfig& cfg, const VariantSpec& v) {
    CnnTransferConfig tc;
    tc.d = cfg.d;
    tc.n1 = cfg.n1;
    tc.n2 = cfg.n2;
    tc.df = cfg.df;
    tc.use_conv = !v.no_conv;
    tc.use_fc = !v.no_fc;
    return CnnTransfer(tc);
}

struct CostRow {
    std::string method;
    std::size_t period = 0;
    std::size_t examples_touched = 0;
    double wall_seconds = 0.0;
};

struct RunResult {
    std::vector<PeriodReport> reports;      // evaluated valid/test periods, in order
    std::vector<TrainLogRecord> train_log;  // SML only
    std::vector<CostRow> costs;             // per-period refresh cost
};

// Offline Alg. 1 pass over the training periods, then Alg. 2 over every
// later period in order.
template <class Transfer>
RunResult run_sml_typed(const PeriodizedDataset& ds, Transfer theta_user, Transfer theta_item,
                        const TrainConfig& cfg, const EvalConfig& ecfg, bool frozen_transfer,
                        const std::string& method_name = "sml",
                        const std::function<void(std::size_t, TaskState<Transfer>&)>& on_period = {}) {
    RunResult res;
    auto outcome = train_sequential(ds, std::move(theta_user), std::move(theta_item), cfg, on_period);
    res.train_log = outcome.log;
    {
        std::map<std::size_t, CostRow> per_period;
        for (const TrainLogRecord& rec : outcome.log) {
            CostRow& row = per_period[rec.period];
            row.method = method_name;
            row.period = rec.period;
            row.examples_touched = rec.examples_touched;
            row.wall_seconds += rec.wall_seconds;
        }
        for (auto& [t, row] : per_period) res.costs.push_back(row);
    }

    ObservedTracker observed(ds.n_users);
    observed.advance_to(ds, outcome.state.period);
    for (std::size_t p = outcome.state.period + 1; p < ds.n_periods(); ++p) {
        PeriodReport rep =
            evaluate_and_update(outcome.state, ds, p, observed, cfg, ecfg, frozen_transfer);
        rep.method = method_name;
        res.costs.push_back({method_name, p, rep.examples_touched, rep.train_wall_seconds});
        res.reports.push_back(std::move(rep));
        if (on_period) on_period(p, outcome.state);
    }
    return res;
}

// Variant dispatch used by the CLI.
inline RunResult run_sml(const PeriodizedDataset& ds, const TrainConfig& cfg,
                         const EvalConfig& ecfg, const VariantSpec& variant, bool frozen_transfer,
                         const std::string& method_name = "sml",
                         const std::string& checkpoint_dir = "") {
    switch (variant.kind) {
        case VariantSpec::Kind::weighted_sum: {
            auto t = variant.alpha_trainable
                         ? WeightedSumTransfer::learnable(cfg.d, variant.alpha)
                         : WeightedSumTransfer::fixed(cfg.d, variant.alpha);
            std::function<void(std::size_t, TaskState<WeightedSumTransfer>&)> hook;
            if (!checkpoint_dir.empty())
                hook = [&checkpoint_dir](std::size_t p, TaskState<WeightedSumTransfer>& st) {
                    Checkpoint c = make_checkpoint(st);
                    write_checkpoint(checkpoint_dir + "/period_" + std::to_string(p) + ".smlc", c);
                };
            return run_sml_typed(ds, t, t, cfg, ecfg, frozen_transfer, method_name, hook);
        }
        case VariantSpec::Kind::mlp: {
            MlpTransfer t(cfg.d, variant.mlp_hidden);
            std::function<void(std::size_t, TaskState<MlpTransfer>&)> hook;
            if (!checkpoint_dir.empty())
                hook = [&checkpoint_dir](std::size_t p, TaskState<MlpTransfer>& st) {
                    Checkpoint c = make_checkpoint(st);
                    write_checkpoint(checkpoint_dir + "/period_" + std::to_string(p) + ".smlc", c);
                };
            return run_sml_typed(ds, t, t, cfg, ecfg, frozen_transfer, method_name, hook);
        }
        default: {
            CnnTransfer t = make_cnn_transfer(cfg, variant);
            std::function<void(std::size_t, TaskState<CnnTransfer>&)> hook;
            if (!checkpoint_dir.empty())
                hook = [&checkpoint_dir](std::size_t p, TaskState<CnnTransfer>& st) {
                    Checkpoint c = make_checkpoint(st);
                    write_checkpoint(checkpoint_dir + "/period_" + std::to_string(p) + ".smlc", c);
                };
            return run_sml_typed(ds, t, t, cfg, ecfg, frozen_transfer, method_name, hook);
        }
    }
}

// Baseline walk, resumable period by period. Every advanced period triggers
// the strategy's retrain; periods with a valid/test role are evaluated first
// (test-then-update, like Alg. 2).
class BaselineWalker {
public:
    BaselineWalker(const PeriodizedDataset& ds, Strategy strat, const BaselineConfig& cfg,
                   std::size_t reservoir_capacity)
        : ds_(ds), strat_(strat), cfg_(cfg), observed_(ds.n_users) {
        if (strat == Strategy::sml) throw ConfigError("BaselineWalker: not applicable to sml");
        reservoir_.capacity = reservoir_capacity;
        RngStream rng(cfg_.seed, "init/t0");
        w_ = make_embeddings(ds_.users_through(0), ds_.items_through(0), cfg_.d, rng);
    }

    // Rebuilds walker state as if `advance` had been called for periods
    // 0..resume_after with `w` as the resulting model. The reservoir is a pure
    // function of the offered data and seed, so it is replayed, not stored.
    void resume(Embeddings w, std::size_t resume_after) {
        w_ = std::move(w);
        for (std::size_t t = 0; t <= resume_after; ++t) {
            if (strat_ == Strategy::full) {
                const auto& p = ds_.period(t);
                history_.insert(history_.end(), p.begin(), p.end());
            } else if (strat_ == Strategy::reservoir) {
                RngStream rng(cfg_.seed, "reservoir/t" + std::to_string(t));
                for (const Interaction& x : ds_.period(t)) reservoir_offer_inplace(reservoir_, x, rng);
            }
        }
        observed_.advance_to(ds_, resume_after);
        next_ = resume_after + 1;
    }

    std::size_t next_period() const { return next_; }
    const Embeddings& embeddings() const { return w_; }
    const Reservoir& reservoir() const { return reservoir_; }

    // Processes period `next_period()`: optional evaluation, then the
    // strategy's retrain. Appends cost (and report) rows to `out`.
    void advance(bool evaluate_this_period, const EvalConfig& ecfg, RunResult& out) {
        std::size_t t = next_++;
        if (t > 0 && (w_.n_users() < ds_.users_through(t) || w_.n_items() < ds_.items_through(t))) {
            RngStream rng(cfg_.seed, "init/t" + std::to_string(t));
            w_ = grow(w_, ds_.users_through(t), ds_.items_through(t), rng);
        }
        observed_.advance_to(ds_, t);

        PeriodReport rep;
        bool eval_here = evaluate_this_period && ds_.roles[t] != PeriodRole::train;
        if (eval_here) {
            auto eval_start = std::chrono::steady_clock::now();
            rep = evaluate_period(w_, ds_, t, observed_.sets(), ecfg, cfg_.seed);
            rep.method = strategy_name(strat_);
            rep.eval_wall_seconds = detail::wall_seconds_since(eval_start);
        }

        const auto& d_t = ds_.period(t);
        RetrainContext ctx{observed_.sets(), ds_.items_through(t), t};
        std::size_t touched = 0;
        auto start = std::chrono::steady_clock::now();
        switch (strat_) {
            case Strategy::full:
                history_.insert(history_.end(), d_t.begin(), d_t.end());
                touched = 2 * history_.size();
                w_ = full_retrain(history_, w_, cfg_, ctx);
                break;
            case Strategy::finetune:
                touched = 2 * d_t.size();
                w_ = fine_tune(d_t, w_, cfg_, ctx);
                break;
            case Strategy::reservoir:
                touched = 2 * (d_t.size() + reservoir_.samples.size());
                w_ = reservoir_retrain(d_t, reservoir_, w_, cfg_, ctx);
                break;
            default:
                break;
        }
        double wall = detail::wall_seconds_since(start);
        out.costs.push_back({strategy_name(strat_), t, touched, wall});
        if (eval_here) {
            rep.examples_touched = touched;
            rep.train_wall_seconds = wall;
            out.reports.push_back(std::move(rep));
        }
    }

private:
    const PeriodizedDataset& ds_;
    Strategy strat_;
    BaselineConfig cfg_;
    Embeddings w_;
    Reservoir reservoir_;
    ObservedTracker observed_;
    std::vector<Interaction> history_;
    std::size_t next_ = 0;
};

inline RunResult run_baseline(const PeriodizedDataset& ds, Strategy strat,
                              const BaselineConfig& cfg, std::size_t reservoir_capacity,
                              const EvalConfig& ecfg, bool evaluate_periods = true,
                              const std::function<void(std::size_t, const Embeddings&)>& on_period = {}) {
    RunResult res;
    BaselineWalker walker(ds, strat, cfg, reservoir_capacity);
    for (std::size_t t = 0; t < ds.n_periods(); ++t) {
        walker.advance(evaluate_periods, ecfg, res);
        if (on_period) on_period(t, walker.embeddings());
    }
    return res;
}

// ---------------------------------------------------------------------------
// Gradient-check suite (Eq. 9 and Eq. 11 analytic gradients against central
// finite differences on randomized small instances).
// ---------------------------------------------------------------------------

struct GradCheckSummary {
    bool pass = true;
    double worst_error = 0.0;
    std::string worst_site;
    std::size_t trials = 0;
};

namespace detail {

inline DenseMatrix row_grads_to_dense(const RowGrads& rg, std::size_t rows, std::size_t cols) {
    DenseMatrix out(rows, cols);
    for (const auto& [r, g] : rg.rows)
        for (std::size_t j = 0; j < cols; ++j) out(r, j) = g[j];
    return out;
}

}  // namespace detail

// `perturb` deliberately corrupts one analytic coordinate; a correct build
// must then fail (used as a self-check of the checker).
inline GradCheckSummary run_gradcheck_suite(std::uint64_t seed, std::size_t trials, double tol,
                                            bool perturb = false) {
    GradCheckSummary sum;
    sum.trials = trials;
    const double h = 1e-4;

    for (std::size_t trial = 0; trial < trials; ++trial) {
        RngStream rng(seed, "gradcheck/trial" + std::to_string(trial));
        std::size_t d = 2 + rng.below(7);    // <= 8
        std::size_t n1 = 1 + rng.below(4);   // <= 4
        std::size_t n2 = 1 + rng.below(3);   // <= 3
        std::size_t df = 2 + rng.below(5);   // <= 6
        std::size_t n_users = 2 + rng.below(3);
        std::size_t n_items = 2 + rng.below(3);
        std::size_t n_examples = 1 + rng.below(5);  // <= 5 interactions
        double lambda1 = (trial % 2 == 0) ? 0.0 : 0.05;
        double lambda2 = (trial % 3 == 0) ? 0.0 : 0.05;

        CnnTransferConfig tc;
        tc.d = d;
        tc.n1 = n1;
        tc.n2 = n2;
        tc.df = df;
        CnnTransfer theta_user(tc), theta_item(tc);
        theta_user.init(rng);
        theta_item.init(rng);

        Embeddings w_prev, w_hat;
        w_prev.P = DenseMatrix(n_users, d);
        w_prev.Q = DenseMatrix(n_items, d);
        for (double& v : w_prev.P.data) v = rng.normal(0.0, 0.5);
        for (double& v : w_prev.Q.data) v = rng.normal(0.0, 0.5);
        w_hat = w_prev;
        for (double& v : w_hat.P.data) v += rng.normal(0.0, 0.2);
        for (double& v : w_hat.Q.data) v += rng.normal(0.0, 0.2);

        std::vector<Example> examples;
        for (std::size_t i = 0; i < n_examples; ++i)
            examples.push_back({static_cast<EntityId>(rng.below(n_users)),
                                static_cast<EntityId>(rng.below(n_items)),
                                rng.below(2) == 0 ? 0.0 : 1.0});

        auto record = [&](const GradCheckReport& rep, const std::string& site) {
            if (rep.max_relative_error > sum.worst_error) {
                sum.worst_error = rep.max_relative_error;
                sum.worst_site = site + " trial " + std::to_string(trial);
            }
            if (!rep.pass) sum.pass = false;
        };

        // Eq. 9: dL_r/dw_hat, both embedding sides.
        {
            EmbeddingGrads grads;
            compute_lr_grads(theta_user, theta_item, w_prev, w_hat, examples, lambda1, grads);
            DenseMatrix gp = detail::row_grads_to_dense(grads.p, n_users, d);
            DenseMatrix gq = detail::row_grads_to_dense(grads.q, n_items, d);
            if (perturb) gp.data[0] += 1e-3;
            auto fp = [&](const DenseMatrix& P) {
                Embeddings w2 = w_hat;
                w2.P = P;
                return compute_lr_loss(theta_user, theta_item, w_prev, w2, examples, lambda1);
            };
            record(finite_diff_check(fp, w_hat.P, gp, h, tol), "lr/P");
            auto fq = [&](const DenseMatrix& Q) {
                Embeddings w2 = w_hat;
                w2.Q = Q;
                return compute_lr_loss(theta_user, theta_item, w_prev, w2, examples, lambda1);
            };
            record(finite_diff_check(fq, w_hat.Q, gq, h, tol), "lr/Q");
        }

        // Eq. 11: dL_s/dtheta for every tensor of both transfer networks.
        {
            TransferGrads gu = theta_user.zero_grads();
            TransferGrads gi = theta_item.zero_grads();
            compute_ls_grads(theta_user, theta_item, w_prev, w_hat, examples, lambda2, gu, gi);
            auto check_side = [&](CnnTransfer& net, TransferGrads& grads, const char* side) {
                auto refs = net.parameters();
                for (std::size_t i = 0; i < refs.size(); ++i) {
                    DenseMatrix saved = *refs[i].tensor;
                    auto f = [&](const DenseMatrix& T) {
                        *refs[i].tensor = T;
                        double loss = compute_ls_loss(theta_user, theta_item, w_prev, w_hat,
                                                      examples, lambda2);
                        *refs[i].tensor = saved;
                        return loss;
                    };
                    record(finite_diff_check(f, saved, grads.tensors[i], h, tol),
                           std::string("ls/") + side + "/" + refs[i].name);
                    *refs[i].tensor = saved;
                }
            };
            check_side(theta_user, gu, "user");
            check_side(theta_item, gi, "item");
        }
    }
    return sum;
}

// ---------------------------------------------------------------------------
// Retraining-cost bench over a dataset treated as all-training periods.
// ---------------------------------------------------------------------------

inline std::vector<CostRow> run_bench(const PeriodizedDataset& ds,
                                      const std::vector<Strategy>& strategies,
                                      const TrainConfig& sml_cfg, const BaselineConfig& base_cfg,
                                      std::size_t reservoir_capacity, const VariantSpec& variant) {
    PeriodizedDataset all_train = ds;
    all_train.roles.assign(all_train.n_periods(), PeriodRole::train);
    std::vector<CostRow> rows;
    EvalConfig ecfg;
    for (Strategy s : strategies) {
        if (s == Strategy::sml) {
            RunResult r = run_sml(all_train, sml_cfg, ecfg, variant, false);
            rows.insert(rows.end(), r.costs.begin(), r.costs.end());
        } else {
            RunResult r = run_baseline(all_train, s, base_cfg, reservoir_capacity, ecfg, false);
            rows.insert(rows.end(), r.costs.begin(), r.costs.end());
        }
    }
    return rows;
}

// ---------------------------------------------------------------------------
// Synthetic directional experiment: per-seed mean test Recall@K by method.
// ---------------------------------------------------------------------------

struct DirectionalSetup {
    SyntheticSpec synth;
    std::size_t train_periods = 10;
    std::size_t valid_periods = 2;
    std::size_t test_periods = 3;
    std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
    TrainConfig sml;
    BaselineConfig baseline;
    EvalConfig eval;
    std::size_t k_index = 1;  // ks = {5,10,20} -> recall@10
};

inline PeriodizedDataset make_directional_dataset(const DirectionalSetup& setup,
                                                  std::uint64_t seed) {
    SyntheticSpec spec = setup.synth;
    spec.seed = seed;
    PeriodizedDataset ds = generate_synthetic(spec);
    assign_roles(ds, setup.train_periods, setup.valid_periods, setup.test_periods);
    return ds;
}

// Runs one method over all seeds; "sml", "sml-n", "full", "finetune".
inline std::vector<double> directional_per_seed(const DirectionalSetup& setup,
                                                const std::string& method) {
    std::vector<double> out;
    for (std::uint64_t seed : setup.seeds) {
        PeriodizedDataset ds = make_directional_dataset(setup, seed);
        if (method == "sml" || method == "sml-n") {
            TrainConfig cfg = setup.sml;
            cfg.seed = seed;
            cfg.no_future = method == "sml-n";
            VariantSpec variant;
            RunResult r = run_sml(ds, cfg, setup.eval, variant, false, method);
            EvalReport er{r.reports};
            out.push_back(er.average_over_tests(setup.k_index));
        } else {
            BaselineConfig cfg = setup.baseline;
            cfg.seed = seed;
            RunResult r = run_baseline(ds, parse_strategy(method), cfg, 0, setup.eval);
            EvalReport er{r.reports};
            out.push_back(er.average_over_tests(setup.k_index));
        }
    }
    return out;
}

struct PairedMargin {
    double mean_diff = 0.0;
    double stderr_diff = 0.0;  // sd(diff) / sqrt(n)
};

inline PairedMargin paired_margin(const std::vector<double>& a, const std::vector<double>& b) {
    PairedMargin m;
    std::size_t n = a.size();
    std::vector<double> diff(n);
    for (std::size_t i = 0; i < n; ++i) diff[i] = a[i] - b[i];
    for (double v : diff) m.mean_diff += v;
    m.mean_diff /= static_cast<double>(n);
    double var = 0.0;
    for (double v : diff) var += (v - m.mean_diff) * (v - m.mean_diff);
    if (n > 1) var /= static_cast<double>(n - 1);
    m.stderr_diff = std::sqrt(var / static_cast<double>(n));
    return m;
}

}  // namespace sml
