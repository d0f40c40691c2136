// Per-period top-K evaluation: sampled candidate ranking, Recall@K, NDCG@K,
// and the old/new user-item interaction typology.
#pragma once

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstdint>
#include <string>
#include <thread>
#include <vector>

#include "sml/data.hpp"
#include "sml/mf.hpp"
#include "sml/rng.hpp"

namespace sml {

struct EvalConfig {
    std::size_t n_candidates = 999;  // sampled non-interacted items per test case
    std::vector<std::size_t> ks = {5, 10, 20};
    std::size_t threads = 1;
};

// Single relevant item per case: hit iff its 1-based rank is within K.
inline double recall_at_k(std::size_t rank_of_positive, std::size_t k) {
    assert(rank_of_positive >= 1);
    return rank_of_positive <= k ? 1.0 : 0.0;
}

// DCG of the single positive over an ideal DCG of 1.
inline double ndcg_at_k(std::size_t rank_of_positive, std::size_t k) {
    assert(rank_of_positive >= 1);
    if (rank_of_positive > k) return 0.0;
    return std::log(2.0) / std::log(static_cast<double>(rank_of_positive) + 1.0);
}

// old/new user x old/new item; "new" means first occurring in the test period.
enum class InteractionType { OU_OI = 0, OU_NI = 1, NU_OI = 2, NU_NI = 3 };

inline const char* interaction_type_name(InteractionType t) {
    switch (t) {
        case InteractionType::OU_OI: return "OU-OI";
        case InteractionType::OU_NI: return "OU-NI";
        case InteractionType::NU_OI: return "NU-OI";
        default: return "NU-NI";
    }
}

struct CandidateSet {
    std::vector<EntityId> items;  // positive first, then sampled negatives
    std::size_t shortfall = 0;    // how many of the requested negatives were unavailable
};

// The positive plus up to n_candidates distinct non-interacted items, drawn
// uniformly without replacement via a partial Fisher-Yates over the
// complement of the observed set.
inline CandidateSet sample_candidates(EntityId user, EntityId positive_item,
                                      const ObservedSets& observed, std::size_t universe,
                                      RngStream& rng, std::size_t n_candidates = 999) {
    const auto& seen = observed.at(user);
    std::vector<EntityId> pool;
    pool.reserve(universe > seen.size() ? universe - seen.size() : 0);
    for (std::size_t i = 0; i < universe; ++i) {
        auto id = static_cast<EntityId>(i);
        if (id != positive_item && seen.count(id) == 0) pool.push_back(id);
    }
    CandidateSet out;
    std::size_t take = std::min(n_candidates, pool.size());
    out.shortfall = n_candidates - take;
    out.items.reserve(take + 1);
    out.items.push_back(positive_item);
    for (std::size_t j = 0; j < take; ++j) {
        std::size_t pick = j + static_cast<std::size_t>(rng.below(pool.size() - j));
        std::swap(pool[j], pool[pick]);
        out.items.push_back(pool[j]);
    }
    return out;
}

// 1-based rank of the positive (candidates[0]) under descending score with
// ties broken by ascending item id.
inline std::size_t rank_of_positive(const Embeddings& emb, EntityId user,
                                    const std::vector<EntityId>& candidates) {
    EntityId pos = candidates[0];
    double pos_score = score(emb, user, pos);
    std::size_t rank = 1;
    for (std::size_t i = 1; i < candidates.size(); ++i) {
        double s = score(emb, user, candidates[i]);
        if (s > pos_score || (s == pos_score && candidates[i] < pos)) ++rank;
    }
    return rank;
}

struct TypeMetrics {
    std::size_t count = 0;
    std::vector<double> recall;  // aligned with EvalConfig::ks
    std::vector<double> ndcg;
};

struct PeriodReport {
    std::size_t period = 0;
    std::string role;
    std::string method;
    std::size_t n_cases = 0;
    std::vector<std::size_t> ks;
    std::vector<double> recall;          // mean over cases
    std::vector<double> ndcg;
    TypeMetrics by_type[4];
    std::size_t candidate_shortfall = 0;
    std::size_t examples_touched = 0;    // training cost of this period's refresh
    double train_wall_seconds = 0.0;     // refresh wall time (not in metric files)
    double eval_wall_seconds = 0.0;
};

namespace detail {

template <class Fn>
void parallel_cases(std::size_t n, std::size_t threads, Fn&& fn) {
    if (threads <= 1 || n < 2) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::size_t workers = std::min(threads, n);
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w)
        pool.emplace_back([&, w] {
            for (std::size_t i = w; i < n; i += workers) fn(i);
        });
    for (auto& t : pool) t.join();
}

}  // namespace detail

// Evaluates every interaction of period t: sample candidates, rank, score
// metrics, and classify into the four old/new types. Candidate draws come
// from per-case streams ("cand/t{t}/c{i}") so results do not depend on
// evaluation order or thread count.
inline PeriodReport evaluate_period(const Embeddings& emb, const PeriodizedDataset& ds,
                                    std::size_t t, const ObservedSets& observed,
                                    const EvalConfig& cfg, std::uint64_t seed) {
    const auto& cases = ds.period(t);
    std::size_t universe = ds.items_through(t);

    PeriodReport rep;
    rep.period = t;
    rep.role = role_name(ds.roles.at(t));
    rep.n_cases = cases.size();
    rep.ks = cfg.ks;
    rep.recall.assign(cfg.ks.size(), 0.0);
    rep.ndcg.assign(cfg.ks.size(), 0.0);
    for (auto& tm : rep.by_type) {
        tm.recall.assign(cfg.ks.size(), 0.0);
        tm.ndcg.assign(cfg.ks.size(), 0.0);
    }

    std::vector<std::size_t> ranks(cases.size());
    std::vector<std::size_t> shortfalls(cases.size());
    detail::parallel_cases(cases.size(), cfg.threads, [&](std::size_t i) {
        const Interaction& x = cases[i];
        RngStream rng(seed, "cand/t" + std::to_string(t) + "/c" + std::to_string(i));
        CandidateSet cs = sample_candidates(x.user, x.item, observed, universe, rng, cfg.n_candidates);
        ranks[i] = rank_of_positive(emb, x.user, cs.items);
        shortfalls[i] = cs.shortfall;
    });

    for (std::size_t i = 0; i < cases.size(); ++i) {
        const Interaction& x = cases[i];
        bool nu = ds.user_is_new_at(x.user, t);
        bool ni = ds.item_is_new_at(x.item, t);
        auto type = static_cast<std::size_t>(nu ? (ni ? InteractionType::NU_NI : InteractionType::NU_OI)
                                                : (ni ? InteractionType::OU_NI : InteractionType::OU_OI));
        rep.by_type[type].count += 1;
        rep.candidate_shortfall += shortfalls[i];
        for (std::size_t j = 0; j < cfg.ks.size(); ++j) {
            double r = recall_at_k(ranks[i], cfg.ks[j]);
            double n = ndcg_at_k(ranks[i], cfg.ks[j]);
            rep.recall[j] += r;
            rep.ndcg[j] += n;
            rep.by_type[type].recall[j] += r;
            rep.by_type[type].ndcg[j] += n;
        }
    }
    if (!cases.empty())
        for (std::size_t j = 0; j < cfg.ks.size(); ++j) {
            rep.recall[j] /= static_cast<double>(cases.size());
            rep.ndcg[j] /= static_cast<double>(cases.size());
        }
    for (auto& tm : rep.by_type)
        if (tm.count > 0)
            for (std::size_t j = 0; j < cfg.ks.size(); ++j) {
                tm.recall[j] /= static_cast<double>(tm.count);
                tm.ndcg[j] /= static_cast<double>(tm.count);
            }
    return rep;
}

struct EvalReport {
    std::vector<PeriodReport> periods;

    // Unweighted mean of a metric over testing periods.
    double average_over_tests(std::size_t k_index, bool use_ndcg = false) const {
        double sum = 0.0;
        std::size_t n = 0;
        for (const PeriodReport& p : periods) {
            if (p.role != "test") continue;
            sum += use_ndcg ? p.ndcg[k_index] : p.recall[k_index];
            ++n;
        }
        return n > 0 ? sum / static_cast<double>(n) : 0.0;
    }
};

}  // namespace sml
