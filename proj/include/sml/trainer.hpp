// Sequential meta-learning loops.
//
// Step 1 fits the transfer input w_hat on the current period's data by
// back-propagating the recommendation loss through the (frozen) transfer.
// Step 2 fits the transfer parameters on next-period data with w_hat frozen
// (first-order truncation: no differentiation through Step 1's history).
// train_sequential runs the offline pass over training periods;
// evaluate_and_update is the serve-time test-then-refresh procedure.
#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "sml/checkpoint.hpp"
#include "sml/data.hpp"
#include "sml/errors.hpp"
#include "sml/evaluation.hpp"
#include "sml/mf.hpp"
#include "sml/optimizer.hpp"
#include "sml/transfer.hpp"

namespace sml {

struct TrainConfig {
    double lambda1 = 0.0;   // L2 weight on w_hat in the Step-1 loss
    double lambda2 = 0.0;   // L2 weight on theta in the Step-2 loss
    std::size_t step1_epochs = 5;
    std::size_t step2_epochs = 5;
    std::size_t max_outer_iters = 6;
    std::size_t early_stop_patience = 0;  // 0 disables validation early stop
    std::size_t early_stop_sample = 200;  // test cases used for the early-stop metric
    double lr_embedding = 0.01;
    double lr_transfer = 0.01;
    OptimizerKind embedding_optimizer = OptimizerKind::adam;
    OptimizerKind transfer_optimizer = OptimizerKind::adam;
    std::size_t batch_size = 0;     // 0 = full batch
    bool freeze_negatives = false;  // reuse one negative draw per period instead of per epoch
    bool no_future = false;         // SML-N: Step 2 trains on D_t instead of D_{t+1}
    bool direct_fit = false;        // SML-FP: Step 1 fits w_hat on the raw loss, bypassing the transfer
    std::uint64_t seed = 1;
    // Model dimensions (consumed by make_cnn_transfer / make_embeddings).
    std::size_t d = 16;
    std::size_t n1 = 10;
    std::size_t n2 = 5;
    std::size_t df = 512;
    // Observability hook for tests and logging; called at each task start.
    std::function<void(std::size_t)> on_task_start;
};

template <class Transfer>
struct TaskState {
    Embeddings w_prev;   // W_{t-1}, constant within a period
    Embeddings w_hat;    // the trainable transfer input for period t
    Embeddings w_serve;  // W_t = f_theta(W_{t-1}, w_hat), the serving model
    Transfer theta_user;
    Transfer theta_item;
    OptimizerState opt_p, opt_q;                      // for w_hat; reset at period start
    std::vector<OptimizerState> opt_theta_user;       // per tensor; persist across periods
    std::vector<OptimizerState> opt_theta_item;
    std::size_t period = 0;                           // index t of the task last worked on
};

struct TrainLogRecord {
    std::size_t period = 0;
    std::size_t outer_iter = 0;
    double loss_r = std::numeric_limits<double>::quiet_NaN();
    double loss_s = std::numeric_limits<double>::quiet_NaN();
    double wall_seconds = 0.0;
    std::size_t examples_touched = 0;  // positives + negatives of this period's refresh set
};

namespace detail {

// Transfer outputs (and caches) for one embedding side, keyed by row.
template <class Transfer>
struct ForwardRows {
    std::map<std::size_t, std::vector<double>> out;
    std::map<std::size_t, typename Transfer::Cache> cache;

    const std::vector<double>& row(std::size_t r) const { return out.at(r); }
};

template <class Transfer>
ForwardRows<Transfer> forward_touched(const Transfer& tr, const DenseMatrix& w_prev,
                                      const DenseMatrix& w_hat, const std::set<std::size_t>& rows,
                                      bool direct_fit) {
    ForwardRows<Transfer> fw;
    for (std::size_t r : rows) {
        std::vector<double> out(w_hat.cols);
        if (direct_fit) {
            auto src = w_hat.row(r);
            std::copy(src.begin(), src.end(), out.begin());
        } else {
            tr.forward(w_prev.row(r), w_hat.row(r), fw.cache[r], out);
        }
        fw.out.emplace(r, std::move(out));
    }
    return fw;
}

inline void touched_rows(const std::vector<Example>& examples, std::set<std::size_t>& users,
                         std::set<std::size_t>& items) {
    for (const Example& ex : examples) {
        users.insert(ex.user);
        items.insert(ex.item);
    }
}

// Per-row gradients of the plain recommendation loss at the transfer output:
// upstream[u] = sum over u's examples of (sigmoid(y) - label) * x_item, and
// symmetrically for items. Also returns the data loss.
template <class Transfer>
double loss_and_upstream(const std::vector<Example>& examples,
                         const ForwardRows<Transfer>& fu, const ForwardRows<Transfer>& fi,
                         std::map<std::size_t, std::vector<double>>& up_user,
                         std::map<std::size_t, std::vector<double>>& up_item) {
    double loss = 0.0;
    for (const Example& ex : examples) {
        const auto& xu = fu.row(ex.user);
        const auto& xi = fi.row(ex.item);
        double y = dot(xu, xi);
        loss -= ex.label > 0.5 ? log_sigmoid(y) : log_one_minus_sigmoid(y);
        double s = sigmoid(y) - ex.label;
        auto gu = up_user.find(ex.user);
        if (gu == up_user.end()) gu = up_user.emplace(ex.user, std::vector<double>(xu.size(), 0.0)).first;
        auto gi = up_item.find(ex.item);
        if (gi == up_item.end()) gi = up_item.emplace(ex.item, std::vector<double>(xi.size(), 0.0)).first;
        for (std::size_t j = 0; j < xu.size(); ++j) {
            gu->second[j] += s * xi[j];
            gi->second[j] += s * xu[j];
        }
    }
    return loss;
}

inline void apply_dense_update(OptimizerState& opt, DenseMatrix& params, const DenseMatrix& grads) {
    opt.begin_step();
    for (std::size_t r = 0; r < params.rows; ++r) {
        auto g = grads.row(r);
        bool zero = true;
        for (double v : g)
            if (v != 0.0) {
                zero = false;
                break;
            }
        if (!zero) opt.update_row(params, r, g);
    }
}

}  // namespace detail

// L_r(w_hat | examples): recommendation loss of the transfer output plus
// lambda1 * ||w_hat||^2 restricted to the touched rows.
template <class Transfer>
double compute_lr_loss(const Transfer& theta_user, const Transfer& theta_item,
                       const Embeddings& w_prev, const Embeddings& w_hat,
                       const std::vector<Example>& examples, double lambda1,
                       bool direct_fit = false) {
    std::set<std::size_t> users, items;
    detail::touched_rows(examples, users, items);
    auto fu = detail::forward_touched(theta_user, w_prev.P, w_hat.P, users, direct_fit);
    auto fi = detail::forward_touched(theta_item, w_prev.Q, w_hat.Q, items, direct_fit);
    std::map<std::size_t, std::vector<double>> up_u, up_i;
    double loss = detail::loss_and_upstream(examples, fu, fi, up_u, up_i);
    if (lambda1 != 0.0) {
        double reg = 0.0;
        for (std::size_t r : users) reg += dot(w_hat.P.row(r), w_hat.P.row(r));
        for (std::size_t r : items) reg += dot(w_hat.Q.row(r), w_hat.Q.row(r));
        loss += lambda1 * reg;
    }
    return loss;
}

// Gradient of L_r with respect to w_hat (Step 1): chain of the loss gradient
// at the transfer output through backward_input, plus 2*lambda1*w_hat on
// touched rows. Returns the loss as well.
template <class Transfer>
double compute_lr_grads(const Transfer& theta_user, const Transfer& theta_item,
                        const Embeddings& w_prev, const Embeddings& w_hat,
                        const std::vector<Example>& examples, double lambda1,
                        EmbeddingGrads& grads, bool direct_fit = false) {
    std::set<std::size_t> users, items;
    detail::touched_rows(examples, users, items);
    auto fu = detail::forward_touched(theta_user, w_prev.P, w_hat.P, users, direct_fit);
    auto fi = detail::forward_touched(theta_item, w_prev.Q, w_hat.Q, items, direct_fit);
    std::map<std::size_t, std::vector<double>> up_u, up_i;
    double loss = detail::loss_and_upstream(examples, fu, fi, up_u, up_i);

    std::size_t d = w_hat.dim();
    double reg = 0.0;
    for (std::size_t r : users) {
        auto& g = grads.p.at(r, d);
        const auto& up = up_u.at(r);
        if (direct_fit) {
            for (std::size_t j = 0; j < d; ++j) g[j] += up[j];
        } else {
            std::vector<double> gin(d);
            theta_user.backward_input(fu.cache.at(r), up, gin);
            for (std::size_t j = 0; j < d; ++j) g[j] += gin[j];
        }
        auto wr = w_hat.P.row(r);
        reg += dot(wr, wr);
        if (lambda1 != 0.0)
            for (std::size_t j = 0; j < d; ++j) g[j] += 2.0 * lambda1 * wr[j];
    }
    for (std::size_t r : items) {
        auto& g = grads.q.at(r, d);
        const auto& up = up_i.at(r);
        if (direct_fit) {
            for (std::size_t j = 0; j < d; ++j) g[j] += up[j];
        } else {
            std::vector<double> gin(d);
            theta_item.backward_input(fi.cache.at(r), up, gin);
            for (std::size_t j = 0; j < d; ++j) g[j] += gin[j];
        }
        auto wr = w_hat.Q.row(r);
        reg += dot(wr, wr);
        if (lambda1 != 0.0)
            for (std::size_t j = 0; j < d; ++j) g[j] += 2.0 * lambda1 * wr[j];
    }
    return loss + lambda1 * reg;
}

// L_s(theta | examples): recommendation loss of the transfer output plus
// lambda2 * ||theta||^2 over all tensors of both parameter groups.
template <class Transfer>
double compute_ls_loss(Transfer& theta_user, Transfer& theta_item, const Embeddings& w_prev,
                       const Embeddings& w_hat, const std::vector<Example>& examples,
                       double lambda2) {
    std::set<std::size_t> users, items;
    detail::touched_rows(examples, users, items);
    auto fu = detail::forward_touched(theta_user, w_prev.P, w_hat.P, users, false);
    auto fi = detail::forward_touched(theta_item, w_prev.Q, w_hat.Q, items, false);
    std::map<std::size_t, std::vector<double>> up_u, up_i;
    double loss = detail::loss_and_upstream(examples, fu, fi, up_u, up_i);
    if (lambda2 != 0.0) {
        double reg = 0.0;
        for (auto& ref : theta_user.parameters()) reg += squared_norm(*ref.tensor);
        for (auto& ref : theta_item.parameters()) reg += squared_norm(*ref.tensor);
        loss += lambda2 * reg;
    }
    return loss;
}

// Gradient of L_s with respect to both transfers' parameters (Step 2), with
// w_hat treated as a constant. Accumulation over rows is in ascending row
// order. Returns the loss.
template <class Transfer>
double compute_ls_grads(Transfer& theta_user, Transfer& theta_item, const Embeddings& w_prev,
                        const Embeddings& w_hat, const std::vector<Example>& examples,
                        double lambda2, TransferGrads& grads_user, TransferGrads& grads_item) {
    std::set<std::size_t> users, items;
    detail::touched_rows(examples, users, items);
    auto fu = detail::forward_touched(theta_user, w_prev.P, w_hat.P, users, false);
    auto fi = detail::forward_touched(theta_item, w_prev.Q, w_hat.Q, items, false);
    std::map<std::size_t, std::vector<double>> up_u, up_i;
    double loss = detail::loss_and_upstream(examples, fu, fi, up_u, up_i);

    for (const auto& [r, up] : up_u) theta_user.backward_params(fu.cache.at(r), up, grads_user);
    for (const auto& [r, up] : up_i) theta_item.backward_params(fi.cache.at(r), up, grads_item);

    if (lambda2 != 0.0) {
        double reg = 0.0;
        std::vector<DenseMatrix*> pu, pi;
        for (auto& ref : theta_user.parameters()) {
            reg += squared_norm(*ref.tensor);
            pu.push_back(ref.tensor);
        }
        for (auto& ref : theta_item.parameters()) {
            reg += squared_norm(*ref.tensor);
            pi.push_back(ref.tensor);
        }
        grads_user.add_scaled(pu, 2.0 * lambda2);
        grads_item.add_scaled(pi, 2.0 * lambda2);
        loss += lambda2 * reg;
    }
    return loss;
}

namespace detail {

inline std::vector<std::vector<Example>> make_batches(std::vector<Example> examples,
                                                      std::size_t batch_size, std::uint64_t seed,
                                                      const std::string& shuffle_label) {
    if (batch_size == 0 || batch_size >= examples.size()) return {std::move(examples)};
    RngStream rng(seed, shuffle_label);
    rng.shuffle(examples);
    std::vector<std::vector<Example>> batches;
    for (std::size_t i = 0; i < examples.size(); i += batch_size) {
        std::size_t hi = std::min(i + batch_size, examples.size());
        batches.emplace_back(examples.begin() + static_cast<std::ptrdiff_t>(i),
                             examples.begin() + static_cast<std::ptrdiff_t>(hi));
    }
    return batches;
}

}  // namespace detail

// Step-1 engine: fits w_hat on `positives` through the (frozen) transfers.
// Also the plain-MF trainer used by every baseline (with a fixed alpha=0
// weighted-sum transfer the loop reduces to ordinary log-loss training).
// Epoch labels are "<prefix>/e<epoch_base+e>" so budgets split across outer
// iterations consume the same negative draws as one uninterrupted run.
template <class Transfer>
double fit_period_embeddings(const Transfer& theta_user, const Transfer& theta_item,
                             const Embeddings& w_prev, Embeddings& w_hat, OptimizerState& opt_p,
                             OptimizerState& opt_q, const std::vector<Interaction>& positives,
                             const ObservedSets& observed, std::size_t n_items_universe,
                             std::size_t epochs, std::size_t epoch_base, const TrainConfig& cfg,
                             const std::string& label_prefix) {
    if (positives.empty()) {
        std::fprintf(stderr, "[sml] warning: empty period passed to Step 1 (%s); skipping\n",
                     label_prefix.c_str());
        return 0.0;
    }
    double last_loss = 0.0;
    std::size_t d = w_hat.dim();
    for (std::size_t e = 0; e < epochs; ++e) {
        std::size_t global = epoch_base + e;
        std::size_t neg_epoch = cfg.freeze_negatives ? 0 : global;
        RngStream neg_rng(cfg.seed, label_prefix + "/e" + std::to_string(neg_epoch));
        auto examples = make_training_examples(positives, observed, n_items_universe, neg_rng);
        auto batches = detail::make_batches(std::move(examples), cfg.batch_size, cfg.seed,
                                            label_prefix + "/shuf/e" + std::to_string(global));
        double epoch_loss = 0.0;
        for (auto& batch : batches) {
            EmbeddingGrads grads;
            epoch_loss += compute_lr_grads(theta_user, theta_item, w_prev, w_hat, batch,
                                           cfg.lambda1, grads, cfg.direct_fit);
            opt_p.begin_step();
            for (auto& [r, g] : grads.p.rows) {
                bool zero = true;
                for (double v : g)
                    if (v != 0.0) {
                        zero = false;
                        break;
                    }
                if (!zero) opt_p.update_row(w_hat.P, r, std::span<const double>(g.data(), d));
            }
            opt_q.begin_step();
            for (auto& [r, g] : grads.q.rows) {
                bool zero = true;
                for (double v : g)
                    if (v != 0.0) {
                        zero = false;
                        break;
                    }
                if (!zero) opt_q.update_row(w_hat.Q, r, std::span<const double>(g.data(), d));
            }
        }
        last_loss = epoch_loss;
    }
    return last_loss;
}

// Step-2 engine: optimizes both transfers on `positives` with w_hat frozen.
template <class Transfer>
double run_theta_epochs(TaskState<Transfer>& state, const std::vector<Interaction>& positives,
                        const ObservedSets& observed, std::size_t n_items_universe,
                        std::size_t epochs, std::size_t epoch_base, const TrainConfig& cfg,
                        const std::string& label_prefix) {
    if (positives.empty()) {
        std::fprintf(stderr, "[sml] warning: empty period passed to Step 2 (%s); skipping\n",
                     label_prefix.c_str());
        return 0.0;
    }
    auto refs_user = state.theta_user.parameters();
    auto refs_item = state.theta_item.parameters();
    double last_loss = 0.0;
    for (std::size_t e = 0; e < epochs; ++e) {
        std::size_t global = epoch_base + e;
        std::size_t neg_epoch = cfg.freeze_negatives ? 0 : global;
        RngStream neg_rng(cfg.seed, label_prefix + "/e" + std::to_string(neg_epoch));
        auto examples = make_training_examples(positives, observed, n_items_universe, neg_rng);
        auto batches = detail::make_batches(std::move(examples), cfg.batch_size, cfg.seed,
                                            label_prefix + "/shuf/e" + std::to_string(global));
        double epoch_loss = 0.0;
        for (auto& batch : batches) {
            TransferGrads gu = state.theta_user.zero_grads();
            TransferGrads gi = state.theta_item.zero_grads();
            epoch_loss += compute_ls_grads(state.theta_user, state.theta_item, state.w_prev,
                                           state.w_hat, batch, cfg.lambda2, gu, gi);
            for (std::size_t i = 0; i < refs_user.size(); ++i)
                detail::apply_dense_update(state.opt_theta_user[i], *refs_user[i].tensor, gu.tensors[i]);
            for (std::size_t i = 0; i < refs_item.size(); ++i)
                detail::apply_dense_update(state.opt_theta_item[i], *refs_item[i].tensor, gi.tensors[i]);
        }
        last_loss = epoch_loss;
    }
    return last_loss;
}

namespace detail {

// Grows W_{t-1} (drawing fresh rows from "init/t<t>") and mirrors the new
// rows into w_hat, so the transfer is defined on entities that first appear
// in the upcoming data.
template <class Transfer>
void grow_task_state(TaskState<Transfer>& state, std::size_t n_users, std::size_t n_items,
                     std::uint64_t seed, std::size_t t) {
    std::size_t old_u = state.w_prev.n_users(), old_i = state.w_prev.n_items();
    if (n_users == old_u && n_items == old_i) return;
    RngStream rng(seed, "init/t" + std::to_string(t));
    state.w_prev = grow(state.w_prev, n_users, n_items, rng);
    Embeddings grown_hat;
    grown_hat.P = DenseMatrix(n_users, state.w_prev.dim());
    grown_hat.Q = DenseMatrix(n_items, state.w_prev.dim());
    std::copy(state.w_hat.P.data.begin(), state.w_hat.P.data.end(), grown_hat.P.data.begin());
    std::copy(state.w_hat.Q.data.begin(), state.w_hat.Q.data.end(), grown_hat.Q.data.begin());
    for (std::size_t r = old_u; r < n_users; ++r) {
        auto src = state.w_prev.P.row(r);
        std::copy(src.begin(), src.end(), grown_hat.P.row(r).begin());
    }
    for (std::size_t r = old_i; r < n_items; ++r) {
        auto src = state.w_prev.Q.row(r);
        std::copy(src.begin(), src.end(), grown_hat.Q.row(r).begin());
    }
    state.w_hat = std::move(grown_hat);
    state.opt_p.ensure_shape(n_users, state.w_prev.dim());
    state.opt_q.ensure_shape(n_items, state.w_prev.dim());
}

inline double wall_seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace detail

template <class Transfer>
struct TrainOutcome {
    TaskState<Transfer> state;
    std::vector<TrainLogRecord> log;
};

// Validation Recall@20 proxy used by the optional early stop: ranks a fixed
// subsample of next-period interactions under the current transfer output.
template <class Transfer>
double validation_recall(const TaskState<Transfer>& state, const PeriodizedDataset& ds,
                         std::size_t t_next, const ObservedSets& observed, const TrainConfig& cfg) {
    const auto& cases = ds.period(t_next);
    if (cases.empty()) return 0.0;
    Embeddings cand;
    cand.P = apply_group(state.theta_user, state.w_prev.P, state.w_hat.P);
    cand.Q = apply_group(state.theta_item, state.w_prev.Q, state.w_hat.Q);
    std::size_t n = std::min(cfg.early_stop_sample, cases.size());
    std::size_t universe = ds.items_through(t_next);
    double hits = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        RngStream rng(cfg.seed, "es/t" + std::to_string(t_next) + "/c" + std::to_string(i));
        CandidateSet cs = sample_candidates(cases[i].user, cases[i].item, observed, universe, rng);
        hits += recall_at_k(rank_of_positive(cand, cases[i].user, cs.items), 20);
    }
    return hits / static_cast<double>(n);
}

// Algorithm 1: one sequential pass over the training periods. Returns the
// final task state (W_{T-1}, w_hat_T, W_T, theta) and the per-iteration log.
template <class Transfer, class Dataset>
TrainOutcome<Transfer> train_sequential(
    const Dataset& ds, Transfer theta_user, Transfer theta_item, const TrainConfig& cfg,
    const std::function<void(std::size_t, TaskState<Transfer>&)>& on_period_complete = {}) {
    auto train_periods = ds.periods_with_role(PeriodRole::train);
    if (train_periods.empty()) throw ConfigError("train_sequential: no training periods");
    for (std::size_t i = 0; i < train_periods.size(); ++i)
        if (train_periods[i] != i)
            throw ConfigError("train_sequential: training periods must be the leading periods");
    {
        std::int64_t prev_max = std::numeric_limits<std::int64_t>::min();
        for (std::size_t t = 0; t < ds.n_periods(); ++t) {
            for (const Interaction& x : ds.period(t))
                if (x.timestamp < prev_max)
                    throw ConfigError("train_sequential: non-chronological periods");
            for (const Interaction& x : ds.period(t)) prev_max = std::max(prev_max, x.timestamp);
        }
    }

    TrainOutcome<Transfer> out;
    TaskState<Transfer>& st = out.state;
    st.theta_user = std::move(theta_user);
    st.theta_item = std::move(theta_item);
    {
        RngStream rng_u(cfg.seed, "theta/user");
        st.theta_user.init(rng_u);
        RngStream rng_i(cfg.seed, "theta/item");
        st.theta_item.init(rng_i);
    }
    for (auto& ref : st.theta_user.parameters())
        st.opt_theta_user.push_back(OptimizerState::make(cfg.transfer_optimizer, cfg.lr_transfer,
                                                         ref.tensor->rows, ref.tensor->cols));
    for (auto& ref : st.theta_item.parameters())
        st.opt_theta_item.push_back(OptimizerState::make(cfg.transfer_optimizer, cfg.lr_transfer,
                                                         ref.tensor->rows, ref.tensor->cols));

    std::size_t d = st.theta_user.dim();
    {
        RngStream rng(cfg.seed, "init/t0");
        st.w_prev = make_embeddings(ds.users_through(0), ds.items_through(0), d, rng);
    }
    st.w_hat = st.w_prev;
    st.w_serve = st.w_prev;

    ObservedTracker observed(st.w_prev.n_users());
    std::size_t last_train = train_periods.back();

    for (std::size_t t : train_periods) {
        if (cfg.on_task_start) cfg.on_task_start(t);
        auto period_start = std::chrono::steady_clock::now();
        if (t > 0) {
            st.w_prev = st.w_serve;  // advance W_{t-1} <- W_{t-1 result}
            detail::grow_task_state(st, ds.users_through(t), ds.items_through(t), cfg.seed, t);
        }
        st.w_hat = st.w_prev;  // Alg. 1 line 3
        st.opt_p = OptimizerState::make(cfg.embedding_optimizer, cfg.lr_embedding,
                                        st.w_hat.n_users(), d);
        st.opt_q = OptimizerState::make(cfg.embedding_optimizer, cfg.lr_embedding,
                                        st.w_hat.n_items(), d);
        observed.advance_to(ds, t);

        const auto& d_t = ds.period(t);
        std::size_t touched = 2 * d_t.size();
        double best_recall = -1.0;
        std::size_t since_best = 0;

        for (std::size_t iter = 0; iter < cfg.max_outer_iters; ++iter) {
            auto iter_start = std::chrono::steady_clock::now();
            TrainLogRecord rec;
            rec.period = t;
            rec.outer_iter = iter;
            rec.examples_touched = touched;

            rec.loss_r = fit_period_embeddings(
                st.theta_user, st.theta_item, st.w_prev, st.w_hat, st.opt_p, st.opt_q, d_t,
                observed.sets(), ds.items_through(t), cfg.step1_epochs, iter * cfg.step1_epochs,
                cfg, "neg1/t" + std::to_string(t));

            if (t == last_train) {  // Alg. 1 line 8: no next-period data in training
                rec.wall_seconds = detail::wall_seconds_since(iter_start);
                out.log.push_back(rec);
                break;
            }

            std::size_t t_next = t + 1;
            detail::grow_task_state(st, ds.users_through(t_next), ds.items_through(t_next),
                                    cfg.seed, t_next);
            std::size_t step2_t = cfg.no_future ? t : t_next;
            ObservedTracker step2_observed = observed;  // cheap at desk scale
            step2_observed.advance_to(ds, step2_t);
            rec.loss_s = run_theta_epochs(st, ds.period(step2_t), step2_observed.sets(),
                                          ds.items_through(step2_t), cfg.step2_epochs,
                                          iter * cfg.step2_epochs, cfg,
                                          "neg2/t" + std::to_string(t));

            rec.wall_seconds = detail::wall_seconds_since(iter_start);
            out.log.push_back(rec);

            if (cfg.early_stop_patience > 0) {
                ObservedTracker val_observed = observed;
                val_observed.advance_to(ds, t_next);
                double r = validation_recall(st, ds, t_next, val_observed.sets(), cfg);
                if (r > best_recall) {
                    best_recall = r;
                    since_best = 0;
                } else if (++since_best >= cfg.early_stop_patience) {
                    break;
                }
            }
        }

        st.w_serve.P = apply_group(st.theta_user, st.w_prev.P, st.w_hat.P);  // Alg. 1 line 11
        st.w_serve.Q = apply_group(st.theta_item, st.w_prev.Q, st.w_hat.Q);
        st.period = t;
        (void)period_start;
        if (on_period_complete) on_period_complete(t, st);
    }
    return out;
}

// Algorithm 2: test W_t on the newly collected period, then refresh theta and
// w_hat, recompute W_t, and learn the next period's transfer input.
// frozen_transfer (SML-S) skips every theta update.
template <class Transfer, class Dataset>
PeriodReport evaluate_and_update(TaskState<Transfer>& state, const Dataset& ds,
                                 std::size_t t_next, ObservedTracker& observed,
                                 const TrainConfig& cfg, const EvalConfig& ecfg,
                                 bool frozen_transfer = false) {
    std::size_t t = state.period;
    if (t_next != t + 1)
        throw ConfigError("evaluate_and_update: expected period " + std::to_string(t + 1));
    if (cfg.on_task_start) cfg.on_task_start(t_next);

    // New entities get fresh rows in every matrix before scoring.
    detail::grow_task_state(state, ds.users_through(t_next), ds.items_through(t_next), cfg.seed,
                            t_next);
    if (state.w_serve.n_users() < ds.users_through(t_next) ||
        state.w_serve.n_items() < ds.items_through(t_next)) {
        RngStream rng(cfg.seed, "init/t" + std::to_string(t_next));
        state.w_serve = grow(state.w_serve, ds.users_through(t_next), ds.items_through(t_next), rng);
    }
    observed.advance_to(ds, t_next);

    // Line 1: test before any parameter changes.
    auto eval_start = std::chrono::steady_clock::now();
    PeriodReport report = evaluate_period(state.w_serve, ds, t_next, observed.sets(), ecfg, cfg.seed);
    report.eval_wall_seconds = detail::wall_seconds_since(eval_start);

    auto update_start = std::chrono::steady_clock::now();
    const auto& d_next = ds.period(t_next);
    const auto& d_cur = ds.period(t);

    if (!frozen_transfer) {
        // Lines 3-6: alternate theta on D_{t+1} and w_hat_t on D_t.
        std::size_t step2_t = cfg.no_future ? t : t_next;
        for (std::size_t iter = 0; iter < cfg.max_outer_iters; ++iter) {
            run_theta_epochs(state, ds.period(step2_t), observed.sets(), ds.items_through(t_next),
                             cfg.step2_epochs, iter * cfg.step2_epochs, cfg,
                             "ev/neg2/t" + std::to_string(t_next));
            fit_period_embeddings(state.theta_user, state.theta_item, state.w_prev, state.w_hat,
                                  state.opt_p, state.opt_q, d_cur, observed.sets(),
                                  ds.items_through(t_next), cfg.step1_epochs,
                                  iter * cfg.step1_epochs, cfg, "ev2/neg1/t" + std::to_string(t));
        }
        // Line 7 runs line 4 once more before recomputing W_t.
        run_theta_epochs(state, ds.period(step2_t), observed.sets(), ds.items_through(t_next),
                         cfg.step2_epochs, cfg.max_outer_iters * cfg.step2_epochs, cfg,
                         "ev/neg2/t" + std::to_string(t_next));
    }
    state.w_serve.P = apply_group(state.theta_user, state.w_prev.P, state.w_hat.P);
    state.w_serve.Q = apply_group(state.theta_item, state.w_prev.Q, state.w_hat.Q);

    // Line 8: learn w_hat_{t+1} on D_{t+1} with W_t as the constant input.
    state.w_prev = state.w_serve;
    state.w_hat = state.w_serve;
    std::size_t d = state.w_hat.dim();
    state.opt_p = OptimizerState::make(cfg.embedding_optimizer, cfg.lr_embedding,
                                       state.w_hat.n_users(), d);
    state.opt_q = OptimizerState::make(cfg.embedding_optimizer, cfg.lr_embedding,
                                       state.w_hat.n_items(), d);
    fit_period_embeddings(state.theta_user, state.theta_item, state.w_prev, state.w_hat,
                          state.opt_p, state.opt_q, d_next, observed.sets(),
                          ds.items_through(t_next), cfg.max_outer_iters * cfg.step1_epochs, 0, cfg,
                          "ev/neg1/t" + std::to_string(t_next));

    // Line 9: W_{t+1} = f_theta(W_t, w_hat_{t+1}).
    state.w_serve.P = apply_group(state.theta_user, state.w_prev.P, state.w_hat.P);
    state.w_serve.Q = apply_group(state.theta_item, state.w_prev.Q, state.w_hat.Q);
    state.period = t_next;

    report.examples_touched = 2 * d_next.size();
    report.train_wall_seconds = detail::wall_seconds_since(update_start);
    return report;
}

// Checkpoint layout shared by train/evaluate: serving model under "P"/"Q",
// the task pair under "prev."/"hat.", transfers under "user."/"item.".
template <class Transfer>
Checkpoint make_checkpoint(TaskState<Transfer>& state) {
    Checkpoint ckpt;
    ckpt.add("P", state.w_serve.P);
    ckpt.add("Q", state.w_serve.Q);
    ckpt.add("prev.P", state.w_prev.P);
    ckpt.add("prev.Q", state.w_prev.Q);
    ckpt.add("hat.P", state.w_hat.P);
    ckpt.add("hat.Q", state.w_hat.Q);
    for (auto& ref : state.theta_user.parameters()) ckpt.add("user." + ref.name, *ref.tensor);
    for (auto& ref : state.theta_item.parameters()) ckpt.add("item." + ref.name, *ref.tensor);
    return ckpt;
}

// Restores the tensors of a checkpoint into a state whose transfers already
// have the right architecture.
template <class Transfer>
void restore_checkpoint(TaskState<Transfer>& state, const Checkpoint& ckpt) {
    state.w_serve.P = ckpt.require("P");
    state.w_serve.Q = ckpt.require("Q");
    state.w_prev.P = ckpt.require("prev.P");
    state.w_prev.Q = ckpt.require("prev.Q");
    state.w_hat.P = ckpt.require("hat.P");
    state.w_hat.Q = ckpt.require("hat.Q");
    for (auto& ref : state.theta_user.parameters()) {
        const DenseMatrix& t = ckpt.require("user." + ref.name);
        require_same_shape(*ref.tensor, t, "restore_checkpoint");
        *ref.tensor = t;
    }
    for (auto& ref : state.theta_item.parameters()) {
        const DenseMatrix& t = ckpt.require("item." + ref.name);
        require_same_shape(*ref.tensor, t, "restore_checkpoint");
        *ref.tensor = t;
    }
}

}  // namespace sml
