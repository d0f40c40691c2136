#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "sml/evaluation.hpp"

using namespace sml;

namespace {

// Fixture: 4 users, 6 items, scores chosen so every rank is hand-computable.
// Q row i = [i, 1]; user 0 = [1,0] (score = id), user 1 = [-1,0] (score = -id),
// user 2 = [0,1] (all scores tie at 1), user 3 = [0,0] (all tie at 0).
struct HandFixture {
    PeriodizedDataset ds;
    Embeddings emb;
    ObservedTracker tracker{0};

    HandFixture() {
        ds.n_users = 4;
        ds.n_items = 6;
        ds.periods.resize(2);
        ds.periods[0] = {{0, 0, 0}, {1, 1, 1}, {2, 2, 2}};                    // train
        ds.periods[1] = {{0, 5, 10}, {1, 2, 11}, {2, 3, 12}, {3, 1, 13}};     // test
        ds.finalize();
        assign_roles(ds, 1, 0, 1);

        emb.P = DenseMatrix(4, 2);
        emb.Q = DenseMatrix(6, 2);
        emb.P(0, 0) = 1.0;
        emb.P(1, 0) = -1.0;
        emb.P(2, 1) = 1.0;
        for (std::size_t i = 0; i < 6; ++i) {
            emb.Q(i, 0) = static_cast<double>(i);
            emb.Q(i, 1) = 1.0;
        }

        tracker = ObservedTracker(4);
        tracker.advance_to(ds, 1);
    }
};

}  // namespace

TEST_CASE("recall_at_k fixtures") {
    CHECK(recall_at_k(3, 5) == 1.0);
    CHECK(recall_at_k(6, 5) == 0.0);
    CHECK(recall_at_k(5, 5) == 1.0);
    CHECK(recall_at_k(1, 1) == 1.0);
}

TEST_CASE("ndcg_at_k fixtures") {
    CHECK(ndcg_at_k(1, 5) == 1.0);
    CHECK(ndcg_at_k(11, 10) == 0.0);
    CHECK(ndcg_at_k(4, 10) == Catch::Approx(0.4306765580733931).epsilon(1e-12));  // 1/log2(5)
    CHECK(ndcg_at_k(3, 10) == Catch::Approx(0.5).epsilon(1e-12));                 // 1/log2(4)
}

TEST_CASE("recall averaged over a 5-case toy set matches brute-force hit counting") {
    std::vector<std::size_t> ranks = {1, 4, 6, 2, 9};
    std::size_t k = 5;
    double mean = 0.0;
    for (std::size_t r : ranks) mean += recall_at_k(r, k);
    mean /= 5.0;
    std::size_t hits = 0;
    for (std::size_t r : ranks)
        if (r <= k) ++hits;
    CHECK(mean == Catch::Approx(static_cast<double>(hits) / 5.0));
}

TEST_CASE("metric monotonicity and ndcg <= recall") {
    for (std::size_t rank = 1; rank <= 30; ++rank) {
        for (std::size_t k : {1u, 5u, 10u, 20u}) {
            CHECK(ndcg_at_k(rank, k) <= recall_at_k(rank, k));
            if (rank > 1) {
                CHECK(recall_at_k(rank, k) <= recall_at_k(rank - 1, k));
                CHECK(ndcg_at_k(rank, k) <= ndcg_at_k(rank - 1, k));
            }
        }
        CHECK(recall_at_k(rank, 10) >= recall_at_k(rank, 5));
        CHECK(ndcg_at_k(rank, 10) >= ndcg_at_k(rank, 5));
    }
}

TEST_CASE("sample_candidates covers the whole complement when small") {
    ObservedSets observed(1);
    observed[0] = {3};
    RngStream rng(1, "cand");
    CandidateSet cs = sample_candidates(0, 3, observed, 1000, rng, 999);
    REQUIRE(cs.items.size() == 1000);
    CHECK(cs.shortfall == 0);
    std::unordered_set<EntityId> uniq(cs.items.begin(), cs.items.end());
    CHECK(uniq.size() == 1000);  // whole universe, positive exactly once
    CHECK(cs.items[0] == 3);
}

TEST_CASE("sample_candidates records shortfall and keeps the positive once") {
    ObservedSets observed(1);
    observed[0] = {0, 1, 2};
    RngStream rng(2, "cand");
    CandidateSet cs = sample_candidates(0, 2, observed, 10, rng, 999);
    CHECK(cs.items.size() == 8);  // positive + 7 available non-interacted
    CHECK(cs.shortfall == 992);
    std::size_t pos_count = 0;
    for (EntityId i : cs.items)
        if (i == 2) ++pos_count;
    CHECK(pos_count == 1);
}

TEST_CASE("sample_candidates is uniform over the complement (3 sigma)") {
    ObservedSets observed(1);
    observed[0] = {19};
    const std::size_t k = 5, trials = 10000, pool = 19;  // candidates drawn from items 0..18
    std::vector<int> counts(20, 0);
    for (std::size_t trial = 0; trial < trials; ++trial) {
        RngStream rng(900 + trial, "cand-uniform");
        CandidateSet cs = sample_candidates(0, 19, observed, 20, rng, k);
        REQUIRE(cs.items.size() == k + 1);
        for (std::size_t j = 1; j < cs.items.size(); ++j) counts[cs.items[j]]++;
    }
    double p = static_cast<double>(k) / pool;
    double expect = trials * p;
    double sigma = std::sqrt(trials * p * (1 - p));
    for (std::size_t i = 0; i < pool; ++i) CHECK(std::abs(counts[i] - expect) <= 3.0 * sigma);
    CHECK(counts[19] == 0);
}

TEST_CASE("rank_of_positive breaks ties by ascending item id") {
    Embeddings emb;
    emb.P = DenseMatrix(1, 1, 0.0);
    emb.Q = DenseMatrix(5, 1, 0.0);  // every score ties at 0
    CHECK(rank_of_positive(emb, 0, {2, 0, 1, 3, 4}) == 3);  // ids 0,1 precede 2
    CHECK(rank_of_positive(emb, 0, {0, 1, 2, 3, 4}) == 1);
    CHECK(rank_of_positive(emb, 0, {4, 0, 1, 2, 3}) == 5);
}

TEST_CASE("evaluate_period matches the hand-computed fixture") {
    HandFixture fx;
    EvalConfig ecfg;  // 999 candidates -> the whole complement on 6 items
    PeriodReport rep = evaluate_period(fx.emb, fx.ds, 1, fx.tracker.sets(), ecfg, 42);

    REQUIRE(rep.n_cases == 4);
    REQUIRE(rep.ks == std::vector<std::size_t>{5, 10, 20});
    // Hand ranks: u0/pos5 -> 1; u1/pos2 -> 2; u2/pos3 (ties) -> 3; u3/pos1 (ties) -> 2.
    CHECK(rep.recall[0] == Catch::Approx(1.0));
    double expected_ndcg5 =
        (1.0 + 1.0 / std::log2(3.0) + 0.5 + 1.0 / std::log2(3.0)) / 4.0;
    CHECK(rep.ndcg[0] == Catch::Approx(expected_ndcg5).epsilon(1e-12));

    // Typology: item5 and item3 first appear in the test period, user 3 too.
    CHECK(rep.by_type[static_cast<int>(InteractionType::OU_NI)].count == 2);
    CHECK(rep.by_type[static_cast<int>(InteractionType::OU_OI)].count == 1);
    CHECK(rep.by_type[static_cast<int>(InteractionType::NU_OI)].count == 1);
    CHECK(rep.by_type[static_cast<int>(InteractionType::NU_NI)].count == 0);

    // Shortfall: complements of size 4,4,4,5 against 999 requested.
    CHECK(rep.candidate_shortfall == 3 * 995 + 994);
}

TEST_CASE("interaction types partition the test set") {
    SyntheticSpec spec;
    spec.n_users = 30;
    spec.n_items = 25;
    spec.periods = 5;
    spec.interactions_per_period = 150;
    spec.latent_dim = 3;
    spec.arrival_rate = 0.08;
    spec.seed = 12;
    PeriodizedDataset ds = generate_synthetic(spec);
    assign_roles(ds, 3, 1, 1);
    ObservedTracker tracker(ds.n_users);
    tracker.advance_to(ds, 4);
    Embeddings emb;
    RngStream rng(12, "emb");
    emb = make_embeddings(ds.n_users, ds.n_items, 4, rng);
    EvalConfig ecfg;
    ecfg.n_candidates = 10;
    PeriodReport rep = evaluate_period(emb, ds, 4, tracker.sets(), ecfg, 12);
    std::size_t total = 0;
    for (const auto& tm : rep.by_type) total += tm.count;
    CHECK(total == rep.n_cases);
}

TEST_CASE("zero embeddings give recall ~ K / candidate count") {
    // 2000 single-case users, universe 200, 49 sampled negatives + positive.
    PeriodizedDataset ds;
    ds.n_users = 2001;
    ds.n_items = 200;
    ds.periods.resize(2);
    ds.periods[0] = {{2000, 199, 0}};
    RngStream rng(33, "cases");
    for (std::size_t i = 0; i < 2000; ++i)
        ds.periods[1].push_back({static_cast<EntityId>(i),
                                 static_cast<EntityId>(rng.below(200)),
                                 static_cast<std::int64_t>(100 + i)});
    ds.finalize();
    assign_roles(ds, 1, 0, 1);

    Embeddings emb;
    emb.P = DenseMatrix(2001, 4, 0.0);
    emb.Q = DenseMatrix(200, 4, 0.0);
    ObservedTracker tracker(ds.n_users);
    tracker.advance_to(ds, 1);

    EvalConfig ecfg;
    ecfg.n_candidates = 49;
    ecfg.ks = {5};
    PeriodReport rep = evaluate_period(emb, ds, 1, tracker.sets(), ecfg, 7);
    double expect = 5.0 / 50.0;
    double sigma = std::sqrt(expect * (1 - expect) / 2000.0);
    CHECK(std::abs(rep.recall[0] - expect) <= 3.0 * sigma);
}

TEST_CASE("evaluation is reproducible and thread-count independent") {
    HandFixture fx;
    EvalConfig one;
    EvalConfig two;
    two.threads = 2;
    PeriodReport a = evaluate_period(fx.emb, fx.ds, 1, fx.tracker.sets(), one, 5);
    PeriodReport b = evaluate_period(fx.emb, fx.ds, 1, fx.tracker.sets(), one, 5);
    PeriodReport c = evaluate_period(fx.emb, fx.ds, 1, fx.tracker.sets(), two, 5);
    CHECK(a.recall == b.recall);
    CHECK(a.ndcg == b.ndcg);
    CHECK(a.recall == c.recall);
    CHECK(a.ndcg == c.ndcg);

    PeriodReport d = evaluate_period(fx.emb, fx.ds, 1, fx.tracker.sets(), one, 6);
    CHECK(a.recall == d.recall);  // tiny universe: candidates are the full complement either way
}
