#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "sml/data.hpp"

using namespace sml;
namespace fs = std::filesystem;

namespace {

std::string temp_path(const std::string& name) {
    return (fs::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("parse_interactions: basic line, densification, error paths") {
    std::string path = temp_path("sml_parse_basic.tsv");
    {
        std::ofstream os(path);
        os << "0\t5\t100\n";
        os << "7\t5\t101\n";
        os << "0\t9\t102\n";
    }
    ParsedLog log = parse_interactions(path);
    REQUIRE(log.interactions.size() == 3);
    // First-appearance densification: user "0"->0, "7"->1; item "5"->0, "9"->1.
    CHECK(log.interactions[0].user == 0);
    CHECK(log.interactions[1].user == 1);
    CHECK(log.interactions[2].item == 1);
    CHECK(log.user_names == std::vector<std::string>{"0", "7"});
    CHECK(log.item_names == std::vector<std::string>{"5", "9"});

    std::string bad = temp_path("sml_parse_bad.tsv");
    {
        std::ofstream os(bad);
        os << "0\t1\t100\n";
        os << "a\tb\tc\n";
    }
    CHECK_THROWS_WITH(parse_interactions(bad), Catch::Matchers::ContainsSubstring(":2"));

    std::string empty = temp_path("sml_parse_empty.tsv");
    {
        std::ofstream os(empty);
    }
    CHECK_THROWS_AS(parse_interactions(empty), ConfigError);
    CHECK_THROWS_AS(parse_interactions(temp_path("sml_does_not_exist.tsv")), ConfigError);
}

TEST_CASE("write-then-parse round trip on a random log") {
    RngStream rng(5, "roundtrip");
    std::string path = temp_path("sml_roundtrip.tsv");
    std::vector<RawRecord> records;
    {
        std::ofstream os(path);
        for (int i = 0; i < 100; ++i) {
            RawRecord r{"u" + std::to_string(rng.below(20)), "i" + std::to_string(rng.below(30)),
                        static_cast<std::int64_t>(rng.below(100000))};
            os << r.user << "\t" << r.item << "\t" << r.timestamp << "\n";
            records.push_back(r);
        }
    }
    ParsedLog log = parse_interactions(path);
    REQUIRE(log.interactions.size() == 100);
    for (std::size_t i = 0; i < 100; ++i) {
        CHECK(log.user_names[log.interactions[i].user] == records[i].user);
        CHECK(log.item_names[log.interactions[i].item] == records[i].item);
        CHECK(log.interactions[i].timestamp == records[i].timestamp);
    }
}

TEST_CASE("filter_inactive drops below-threshold entities in one pass") {
    std::vector<RawRecord> records;
    for (int i = 0; i < 5; ++i) records.push_back({"heavy", "pop", 10 + i});
    records.push_back({"light", "pop", 20});
    records.push_back({"heavy", "rare", 21});
    auto kept = filter_inactive(records, 2, 3);
    // "light" (1 interaction) and "rare" (1) go; note counts come from the raw log.
    REQUIRE(kept.size() == 5);
    for (const auto& r : kept) {
        CHECK(r.user == "heavy");
        CHECK(r.item == "pop");
    }
}

TEST_CASE("split_by_count: sizes, remainder rule, order preservation") {
    auto make_log = [](std::size_t n) {
        ParsedLog log;
        for (std::size_t i = 0; i < n; ++i)
            log.interactions.push_back({static_cast<EntityId>(i % 3), static_cast<EntityId>(i % 4),
                                        static_cast<std::int64_t>(1000 - i)});  // reverse order
        log.user_names.assign(3, "u");
        log.item_names.assign(4, "i");
        return log;
    };

    PeriodizedDataset ds10 = split_by_count(make_log(10), 5);
    for (const auto& p : ds10.periods) CHECK(p.size() == 2);

    PeriodizedDataset ds11 = split_by_count(make_log(11), 5);
    std::vector<std::size_t> sizes;
    for (const auto& p : ds11.periods) sizes.push_back(p.size());
    CHECK(sizes == std::vector<std::size_t>{3, 2, 2, 2, 2});

    // Concatenation equals the timestamp-sorted input.
    std::int64_t prev = -1;
    std::size_t total = 0;
    for (const auto& p : ds11.periods)
        for (const auto& x : p) {
            CHECK(x.timestamp >= prev);
            prev = x.timestamp;
            ++total;
        }
    CHECK(total == 11);

    CHECK_THROWS_AS(split_by_count(make_log(3), 5), ConfigError);
}

TEST_CASE("split_by_window reproduces the three-per-day scheme") {
    ParsedLog log;
    log.user_names = {"u"};
    log.item_names = {"a", "b", "c", "d"};
    auto at = [](std::int64_t day, std::int64_t h, std::int64_t m) {
        return day * 86400 + h * 3600 + m * 60;
    };
    log.interactions = {
        {0, 0, at(0, 9, 59)},   // morning day 0
        {0, 1, at(0, 10, 0)},   // afternoon day 0
        {0, 2, at(0, 23, 30)},  // evening day 0
        {0, 3, at(2, 0, 0)},    // morning day 2
    };
    PeriodizedDataset ds = split_by_window(log, {0.0, 10.0, 17.0});
    REQUIRE(ds.n_periods() == 9);  // 3 days x 3 windows, empty ones retained
    CHECK(ds.periods[0].size() == 1);
    CHECK(ds.periods[0][0].item == 0);
    CHECK(ds.periods[1].size() == 1);
    CHECK(ds.periods[2].size() == 1);
    CHECK(ds.periods[3].empty());
    CHECK(ds.periods[6].size() == 1);

    CHECK(validate(ds).empty());

    CHECK_THROWS_AS(split_by_window(log, {10.0, 5.0}), ConfigError);
    CHECK_THROWS_AS(split_by_window(log, {0.0, 25.0}), ConfigError);
    CHECK_THROWS_AS(split_by_window(log, {}), ConfigError);
}

TEST_CASE("generate_synthetic: determinism and arrival behavior") {
    SyntheticSpec spec;
    spec.n_users = 40;
    spec.n_items = 30;
    spec.periods = 6;
    spec.interactions_per_period = 200;
    spec.latent_dim = 4;
    spec.drift_rate = 0.2;
    spec.arrival_rate = 0.05;
    spec.seed = 9;

    PeriodizedDataset a = generate_synthetic(spec);
    PeriodizedDataset b = generate_synthetic(spec);
    REQUIRE(a.n_periods() == b.n_periods());
    for (std::size_t t = 0; t < a.n_periods(); ++t) {
        REQUIRE(a.periods[t].size() == b.periods[t].size());
        for (std::size_t i = 0; i < a.periods[t].size(); ++i) {
            CHECK(a.periods[t][i].user == b.periods[t][i].user);
            CHECK(a.periods[t][i].item == b.periods[t][i].item);
        }
    }
    CHECK(validate(a).empty());
    for (const auto& p : a.periods) CHECK(p.size() == 200);

    // arrival 0: entity counts constant across periods.
    spec.arrival_rate = 0.0;
    PeriodizedDataset c = generate_synthetic(spec);
    for (std::size_t t = 1; t < c.n_periods(); ++t) {
        std::unordered_set<EntityId> users;
        for (const auto& x : c.periods[t]) users.insert(x.user);
        for (EntityId u : users) CHECK_FALSE(c.user_is_new_at(u, t));
    }
}

TEST_CASE("generate_synthetic: zero drift gives stationary item frequencies") {
    SyntheticSpec spec;
    spec.n_users = 30;
    spec.n_items = 25;
    spec.periods = 10;
    spec.interactions_per_period = 1500;
    spec.latent_dim = 4;
    spec.drift_rate = 0.0;
    spec.arrival_rate = 0.0;
    spec.seed = 4;
    PeriodizedDataset ds = generate_synthetic(spec);

    // Two-sample chi-square between the halves' item histograms.
    std::vector<double> c1(spec.n_items, 0.0), c2(spec.n_items, 0.0);
    for (std::size_t t = 0; t < 5; ++t)
        for (const auto& x : ds.periods[t]) c1[x.item] += 1.0;
    for (std::size_t t = 5; t < 10; ++t)
        for (const auto& x : ds.periods[t]) c2[x.item] += 1.0;
    double n1 = 5.0 * 1500, n2 = 5.0 * 1500;
    double chi2 = 0.0;
    std::size_t dof = 0;
    for (std::size_t i = 0; i < spec.n_items; ++i) {
        double tot = c1[i] + c2[i];
        if (tot == 0.0) continue;
        double e1 = tot * n1 / (n1 + n2), e2 = tot * n2 / (n1 + n2);
        chi2 += (c1[i] - e1) * (c1[i] - e1) / e1 + (c2[i] - e2) * (c2[i] - e2) / e2;
        ++dof;
    }
    REQUIRE(dof > 1);
    dof -= 1;
    double z = (chi2 - dof) / std::sqrt(2.0 * static_cast<double>(dof));
    CHECK(z <= 3.0);
}

TEST_CASE("observed sets accumulate as union of period positives") {
    SyntheticSpec spec;
    spec.n_users = 10;
    spec.n_items = 12;
    spec.periods = 4;
    spec.interactions_per_period = 60;
    spec.latent_dim = 3;
    spec.seed = 2;
    PeriodizedDataset ds = generate_synthetic(spec);

    ObservedTracker tracker(ds.n_users);
    ObservedSets manual(ds.n_users);
    for (std::size_t t = 0; t < ds.n_periods(); ++t) {
        tracker.advance_to(ds, t);
        for (const auto& x : ds.periods[t]) manual[x.user].insert(x.item);
        REQUIRE(tracker.sets().size() >= manual.size());
        for (std::size_t u = 0; u < manual.size(); ++u) CHECK(tracker.sets()[u] == manual[u]);
    }
}

TEST_CASE("role assignment and validation") {
    SyntheticSpec spec;
    spec.n_users = 8;
    spec.n_items = 8;
    spec.periods = 6;
    spec.interactions_per_period = 20;
    spec.latent_dim = 2;
    spec.seed = 3;
    PeriodizedDataset ds = generate_synthetic(spec);
    assign_roles(ds, 3, 1, 2);
    CHECK(ds.roles[0] == PeriodRole::train);
    CHECK(ds.roles[3] == PeriodRole::valid);
    CHECK(ds.roles[5] == PeriodRole::test);
    CHECK(validate(ds).empty());

    CHECK_THROWS_AS(assign_roles(ds, 3, 3, 3), ConfigError);
    CHECK_THROWS_AS(assign_roles(ds, 0, 3, 3), ConfigError);

    // Interleaved roles are flagged.
    ds.roles = {PeriodRole::train, PeriodRole::test, PeriodRole::train,
                PeriodRole::train, PeriodRole::valid, PeriodRole::test};
    CHECK_FALSE(validate(ds).empty());
}

TEST_CASE("dataset save/load round trip") {
    SyntheticSpec spec;
    spec.n_users = 12;
    spec.n_items = 10;
    spec.periods = 5;
    spec.interactions_per_period = 40;
    spec.latent_dim = 3;
    spec.arrival_rate = 0.04;
    spec.seed = 6;
    PeriodizedDataset ds = generate_synthetic(spec);
    assign_roles(ds, 3, 1, 1);

    std::string dir = temp_path("sml_ds_roundtrip");
    fs::remove_all(dir);
    save_dataset(ds, dir, {{"scheme", "synthetic"}});
    PeriodizedDataset back = load_dataset(dir);

    REQUIRE(back.n_periods() == ds.n_periods());
    CHECK(back.n_users == ds.n_users);
    CHECK(back.n_items == ds.n_items);
    CHECK(back.roles == ds.roles);
    for (std::size_t t = 0; t < ds.n_periods(); ++t) {
        REQUIRE(back.periods[t].size() == ds.periods[t].size());
        for (std::size_t i = 0; i < ds.periods[t].size(); ++i) {
            CHECK(back.periods[t][i].user == ds.periods[t][i].user);
            CHECK(back.periods[t][i].item == ds.periods[t][i].item);
            CHECK(back.periods[t][i].timestamp == ds.periods[t][i].timestamp);
        }
    }
    CHECK(back.users_through_period == ds.users_through_period);
}
