// Interaction-log ingestion, period splitting, and synthetic drift-dataset
// generation.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "sml/errors.hpp"
#include "sml/mf.hpp"
#include "sml/rng.hpp"

namespace sml {

enum class PeriodRole { train, valid, test };

inline const char* role_name(PeriodRole r) {
    switch (r) {
        case PeriodRole::train: return "train";
        case PeriodRole::valid: return "valid";
        default: return "test";
    }
}

struct PeriodizedDataset {
    std::vector<std::vector<Interaction>> periods;
    std::vector<PeriodRole> roles;
    std::size_t n_users = 0;
    std::size_t n_items = 0;
    // Raw ids per dense id; empty for synthetic data.
    std::vector<std::string> user_names;
    std::vector<std::string> item_names;

    // Derived: cumulative entity counts and first period of appearance.
    std::vector<std::size_t> users_through_period;
    std::vector<std::size_t> items_through_period;
    std::vector<std::size_t> first_user_period;
    std::vector<std::size_t> first_item_period;

    std::size_t n_periods() const { return periods.size(); }
    const std::vector<Interaction>& period(std::size_t t) const { return periods.at(t); }

    std::size_t users_through(std::size_t t) const { return users_through_period.at(t); }
    std::size_t items_through(std::size_t t) const { return items_through_period.at(t); }

    bool user_is_new_at(EntityId u, std::size_t t) const { return first_user_period.at(u) == t; }
    bool item_is_new_at(EntityId i, std::size_t t) const { return first_item_period.at(i) == t; }

    std::vector<std::size_t> periods_with_role(PeriodRole r) const {
        std::vector<std::size_t> out;
        for (std::size_t t = 0; t < roles.size(); ++t)
            if (roles[t] == r) out.push_back(t);
        return out;
    }

    // Recomputes the cumulative/first-appearance tables from `periods`.
    void finalize() {
        std::size_t np = periods.size();
        users_through_period.assign(np, 0);
        items_through_period.assign(np, 0);
        first_user_period.assign(n_users, np);
        first_item_period.assign(n_items, np);
        std::size_t u_max = 0, i_max = 0;
        for (std::size_t t = 0; t < np; ++t) {
            for (const Interaction& x : periods[t]) {
                u_max = std::max(u_max, static_cast<std::size_t>(x.user) + 1);
                i_max = std::max(i_max, static_cast<std::size_t>(x.item) + 1);
                if (first_user_period[x.user] == np) first_user_period[x.user] = t;
                if (first_item_period[x.item] == np) first_item_period[x.item] = t;
            }
            users_through_period[t] = u_max;
            items_through_period[t] = i_max;
        }
        if (roles.size() != np) roles.assign(np, PeriodRole::train);
    }
};

// Tags the first n_train periods train, the next n_valid valid, the rest test.
inline void assign_roles(PeriodizedDataset& ds, std::size_t n_train, std::size_t n_valid,
                         std::size_t n_test) {
    if (n_train + n_valid + n_test != ds.n_periods())
        throw ConfigError("assign_roles: train+valid+test = " +
                          std::to_string(n_train + n_valid + n_test) + " but dataset has " +
                          std::to_string(ds.n_periods()) + " periods");
    if (n_train == 0) throw ConfigError("assign_roles: need at least one training period");
    ds.roles.clear();
    ds.roles.insert(ds.roles.end(), n_train, PeriodRole::train);
    ds.roles.insert(ds.roles.end(), n_valid, PeriodRole::valid);
    ds.roles.insert(ds.roles.end(), n_test, PeriodRole::test);
}

// Invariant checks used by tests and by the split command.
inline std::vector<std::string> validate(const PeriodizedDataset& ds) {
    std::vector<std::string> problems;
    std::int64_t prev_max = std::numeric_limits<std::int64_t>::min();
    for (std::size_t t = 0; t < ds.n_periods(); ++t) {
        const auto& p = ds.periods[t];
        if (p.empty()) continue;
        std::int64_t lo = p.front().timestamp, hi = p.front().timestamp;
        for (const Interaction& x : p) {
            lo = std::min(lo, x.timestamp);
            hi = std::max(hi, x.timestamp);
            if (x.user >= ds.n_users || x.item >= ds.n_items)
                problems.push_back("period " + std::to_string(t) + ": id out of range");
        }
        if (lo < prev_max)
            problems.push_back("period " + std::to_string(t) + " overlaps an earlier period in time");
        prev_max = std::max(prev_max, hi);
    }
    int phase = 0;  // train -> valid -> test must not interleave
    for (PeriodRole r : ds.roles) {
        int p = r == PeriodRole::train ? 0 : r == PeriodRole::valid ? 1 : 2;
        if (p < phase) problems.push_back("role order violates train < valid < test");
        phase = std::max(phase, p);
    }
    return problems;
}

// Incrementally merged per-user observed-item sets; observed(t) =
// observed(t-1) union positives(D_t).
class ObservedTracker {
public:
    explicit ObservedTracker(std::size_t n_users) : sets_(n_users) {}

    void advance_to(const PeriodizedDataset& ds, std::size_t t) {
        if (ds.n_users > sets_.size()) sets_.resize(ds.n_users);
        while (next_ <= t) {
            for (const Interaction& x : ds.period(next_)) sets_[x.user].insert(x.item);
            ++next_;
        }
    }

    const ObservedSets& sets() const { return sets_; }
    std::size_t merged_through() const { return next_; }

private:
    ObservedSets sets_;
    std::size_t next_ = 0;
};

// ---------------------------------------------------------------------------
// Ingestion
// ---------------------------------------------------------------------------

struct RawRecord {
    std::string user;
    std::string item;
    std::int64_t timestamp = 0;
};

struct ParsedLog {
    std::vector<Interaction> interactions;
    std::vector<std::string> user_names;  // dense id -> raw id
    std::vector<std::string> item_names;
};

// One record per line: user_id TAB item_id TAB unix_timestamp.
inline std::vector<RawRecord> read_raw_log(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open interaction log: " + path);
    std::vector<RawRecord> records;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::size_t tab1 = line.find('\t');
        std::size_t tab2 = tab1 == std::string::npos ? std::string::npos : line.find('\t', tab1 + 1);
        if (tab1 == std::string::npos || tab2 == std::string::npos)
            throw ConfigError(path + ":" + std::to_string(line_no) + ": expected 3 tab-separated fields");
        RawRecord rec;
        rec.user = line.substr(0, tab1);
        rec.item = line.substr(tab1 + 1, tab2 - tab1 - 1);
        std::string ts = line.substr(tab2 + 1);
        if (!ts.empty() && ts.back() == '\r') ts.pop_back();
        try {
            std::size_t pos = 0;
            rec.timestamp = std::stoll(ts, &pos);
            if (pos != ts.size()) throw std::invalid_argument("trailing");
        } catch (const std::exception&) {
            throw ConfigError(path + ":" + std::to_string(line_no) + ": bad timestamp '" + ts + "'");
        }
        if (rec.timestamp < 0)
            throw ConfigError(path + ":" + std::to_string(line_no) + ": negative timestamp");
        records.push_back(std::move(rec));
    }
    if (records.empty()) throw ConfigError("empty interaction log: " + path);
    return records;
}

// Drops users/items below the activity thresholds (0 disables a threshold).
// Counting happens once on the raw log, matching a single filtering pass.
inline std::vector<RawRecord> filter_inactive(std::vector<RawRecord> records,
                                              std::size_t min_user_interactions,
                                              std::size_t min_item_interactions) {
    if (min_user_interactions <= 1 && min_item_interactions <= 1) return records;
    std::unordered_map<std::string, std::size_t> ucount, icount;
    for (const RawRecord& r : records) {
        ++ucount[r.user];
        ++icount[r.item];
    }
    std::vector<RawRecord> kept;
    kept.reserve(records.size());
    for (RawRecord& r : records) {
        if (min_user_interactions > 0 && ucount[r.user] < min_user_interactions) continue;
        if (min_item_interactions > 0 && icount[r.item] < min_item_interactions) continue;
        kept.push_back(std::move(r));
    }
    return kept;
}

// Densifies ids to contiguous integers in first-appearance order.
inline ParsedLog densify(const std::vector<RawRecord>& records) {
    ParsedLog log;
    std::unordered_map<std::string, EntityId> umap, imap;
    log.interactions.reserve(records.size());
    for (const RawRecord& r : records) {
        auto [uit, unew] = umap.try_emplace(r.user, static_cast<EntityId>(log.user_names.size()));
        if (unew) log.user_names.push_back(r.user);
        auto [iit, inew] = imap.try_emplace(r.item, static_cast<EntityId>(log.item_names.size()));
        if (inew) log.item_names.push_back(r.item);
        log.interactions.push_back({uit->second, iit->second, r.timestamp});
    }
    return log;
}

inline ParsedLog parse_interactions(const std::string& path) { return densify(read_raw_log(path)); }

// ---------------------------------------------------------------------------
// Splitting
// ---------------------------------------------------------------------------

// Equal-count periods: floor(N/n) each, remainder distributed one extra to the
// earliest periods. Input is stably sorted by timestamp first.
inline PeriodizedDataset split_by_count(ParsedLog log, std::size_t n_periods) {
    if (n_periods == 0 || n_periods > log.interactions.size())
        throw ConfigError("split_by_count: need 1 <= n_periods <= interaction count");
    std::stable_sort(log.interactions.begin(), log.interactions.end(),
                     [](const Interaction& a, const Interaction& b) { return a.timestamp < b.timestamp; });
    PeriodizedDataset ds;
    ds.user_names = std::move(log.user_names);
    ds.item_names = std::move(log.item_names);
    ds.n_users = ds.user_names.size();
    ds.n_items = ds.item_names.size();
    std::size_t n = log.interactions.size();
    std::size_t base = n / n_periods, extra = n % n_periods;
    std::size_t pos = 0;
    for (std::size_t t = 0; t < n_periods; ++t) {
        std::size_t sz = base + (t < extra ? 1 : 0);
        ds.periods.emplace_back(log.interactions.begin() + static_cast<std::ptrdiff_t>(pos),
                                log.interactions.begin() + static_cast<std::ptrdiff_t>(pos + sz));
        pos += sz;
    }
    ds.finalize();
    return ds;
}

// Time-of-day windows: cut points in hours, strictly increasing in [0, 24).
// Windows are [c0,c1), ..., [ck,24)+[0,c0) with the wrapping tail assigned to
// the day the window started. Period index = day * windows + window.
inline PeriodizedDataset split_by_window(ParsedLog log, const std::vector<double>& cuts_hours,
                                         std::int64_t tz_offset_seconds = 0) {
    if (cuts_hours.empty()) throw ConfigError("split_by_window: need at least one cut point");
    for (std::size_t i = 0; i < cuts_hours.size(); ++i) {
        if (cuts_hours[i] < 0.0 || cuts_hours[i] >= 24.0)
            throw ConfigError("split_by_window: cut points must lie in [0,24)");
        if (i > 0 && cuts_hours[i] <= cuts_hours[i - 1])
            throw ConfigError("split_by_window: cut points must be strictly increasing");
    }
    std::vector<std::int64_t> cuts;  // seconds since the (shifted) midnight
    std::int64_t c0 = static_cast<std::int64_t>(std::llround(cuts_hours[0] * 3600.0));
    for (double c : cuts_hours)
        cuts.push_back(static_cast<std::int64_t>(std::llround(c * 3600.0)) - c0);
    cuts.push_back(86400);  // sentinel end of the wrapped day

    std::stable_sort(log.interactions.begin(), log.interactions.end(),
                     [](const Interaction& a, const Interaction& b) { return a.timestamp < b.timestamp; });

    std::size_t n_windows = cuts_hours.size();
    auto slot_of = [&](std::int64_t ts) -> std::pair<std::int64_t, std::size_t> {
        std::int64_t shifted = ts + tz_offset_seconds - c0;
        std::int64_t day = shifted >= 0 ? shifted / 86400 : (shifted - 86399) / 86400;
        std::int64_t tod = shifted - day * 86400;
        std::size_t w = 0;
        while (w + 1 < n_windows && tod >= cuts[w + 1]) ++w;
        return {day, w};
    };

    auto [first_day, w0] = slot_of(log.interactions.front().timestamp);
    auto [last_day, w1] = slot_of(log.interactions.back().timestamp);
    (void)w0;
    (void)w1;
    std::size_t n_days = static_cast<std::size_t>(last_day - first_day + 1);

    PeriodizedDataset ds;
    ds.user_names = std::move(log.user_names);
    ds.item_names = std::move(log.item_names);
    ds.n_users = ds.user_names.size();
    ds.n_items = ds.item_names.size();
    ds.periods.assign(n_days * n_windows, {});
    for (const Interaction& x : log.interactions) {
        auto [day, w] = slot_of(x.timestamp);
        std::size_t idx = static_cast<std::size_t>(day - first_day) * n_windows + w;
        ds.periods[idx].push_back(x);
    }
    ds.finalize();
    return ds;
}

// ---------------------------------------------------------------------------
// Synthetic drift generator
// ---------------------------------------------------------------------------

struct SyntheticSpec {
    std::size_t n_users = 500;
    std::size_t n_items = 300;
    std::size_t periods = 15;
    std::size_t interactions_per_period = 2000;
    std::size_t latent_dim = 8;       // long-term factor dimension
    double drift_rate = 0.3;          // per-period random-walk step of the short-term vector
    double arrival_rate = 0.0;        // fraction of the entity pool injected per period
    std::uint64_t seed = 1;

    void check() const {
        if (n_users == 0 || n_items == 0 || periods == 0 || interactions_per_period == 0 ||
            latent_dim == 0)
            throw ConfigError("SyntheticSpec: counts must be positive");
        if (drift_rate < 0.0 || arrival_rate < 0.0 || arrival_rate >= 1.0)
            throw ConfigError("SyntheticSpec: need drift_rate >= 0 and arrival_rate in [0,1)");
    }
};

// Users carry a static long-term vector plus a short-term vector evolving by
// a Gaussian random walk; interaction probabilities follow a softmax over the
// active items' affinities. New entities activate in id order so dense ids
// match first-appearance order.
inline PeriodizedDataset generate_synthetic(const SyntheticSpec& spec) {
    spec.check();
    std::size_t P = spec.periods, k = spec.latent_dim;

    std::size_t add_u = static_cast<std::size_t>(static_cast<double>(spec.n_users) * spec.arrival_rate);
    std::size_t add_i = static_cast<std::size_t>(static_cast<double>(spec.n_items) * spec.arrival_rate);
    std::size_t base_u = spec.n_users > add_u * (P - 1) ? spec.n_users - add_u * (P - 1) : 0;
    std::size_t base_i = spec.n_items > add_i * (P - 1) ? spec.n_items - add_i * (P - 1) : 0;
    if (base_u == 0 || base_i == 0)
        throw ConfigError("generate_synthetic: arrival rate leaves no entities for period 0");

    RngStream factor_rng(spec.seed, "synth/factors");
    DenseMatrix item_f(spec.n_items, k), long_f(spec.n_users, k), short_f(spec.n_users, k);
    for (double& v : item_f.data) v = factor_rng.normal();
    for (double& v : long_f.data) v = factor_rng.normal();

    PeriodizedDataset ds;
    ds.n_users = spec.n_users;
    ds.n_items = spec.n_items;
    for (std::size_t t = 0; t < P; ++t) {
        std::size_t active_u = std::min(spec.n_users, base_u + add_u * t);
        std::size_t active_i = std::min(spec.n_items, base_i + add_i * t);
        if (t > 0 && spec.drift_rate > 0.0) {
            RngStream drift_rng(spec.seed, "synth/drift/t" + std::to_string(t));
            for (double& v : short_f.data) v += drift_rng.normal(0.0, spec.drift_rate);
        }
        RngStream draw_rng(spec.seed, "synth/draw/t" + std::to_string(t));
        std::vector<Interaction> period;
        period.reserve(spec.interactions_per_period);
        std::unordered_map<std::size_t, std::vector<double>> cdf_cache;
        for (std::size_t j = 0; j < spec.interactions_per_period; ++j) {
            auto u = static_cast<std::size_t>(draw_rng.below(active_u));
            auto it = cdf_cache.find(u);
            if (it == cdf_cache.end()) {
                std::vector<double> scores(active_i);
                double hi = -1e300;
                for (std::size_t i = 0; i < active_i; ++i) {
                    double s = 0.0;
                    for (std::size_t f = 0; f < k; ++f)
                        s += (long_f(u, f) + short_f(u, f)) * item_f(i, f);
                    scores[i] = s;
                    hi = std::max(hi, s);
                }
                double total = 0.0;
                for (std::size_t i = 0; i < active_i; ++i) {
                    total += std::exp(scores[i] - hi);
                    scores[i] = total;
                }
                for (double& v : scores) v /= total;
                it = cdf_cache.emplace(u, std::move(scores)).first;
            }
            double r = draw_rng.real01();
            const auto& cdf = it->second;
            auto pick = std::lower_bound(cdf.begin(), cdf.end(), r) - cdf.begin();
            if (static_cast<std::size_t>(pick) >= active_i) pick = static_cast<std::ptrdiff_t>(active_i) - 1;
            period.push_back({static_cast<EntityId>(u), static_cast<EntityId>(pick),
                              static_cast<std::int64_t>(t * 100000 + j)});
        }
        // Guarantee first-appearance order == id order for the period's new
        // entities so grown embedding rows line up with the generator.
        ds.periods.push_back(std::move(period));
    }
    ds.finalize();
    // Entities that never interacted would leave holes in the id space; trim
    // the universe to what actually appears.
    ds.n_users = ds.users_through_period.back();
    ds.n_items = ds.items_through_period.back();
    ds.finalize();
    return ds;
}

// ---------------------------------------------------------------------------
// On-disk dataset directory: manifest + interactions + id maps
// ---------------------------------------------------------------------------

inline void save_dataset(const PeriodizedDataset& ds, const std::string& dir,
                         const std::map<std::string, std::string>& extra_manifest = {}) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    {
        std::ofstream os(dir + "/manifest.txt");
        if (!os) throw ConfigError("cannot write manifest in " + dir);
        os << "format = sml-dataset-v1\n";
        os << "n_users = " << ds.n_users << "\n";
        os << "n_items = " << ds.n_items << "\n";
        os << "n_periods = " << ds.n_periods() << "\n";
        std::size_t n_train = ds.periods_with_role(PeriodRole::train).size();
        std::size_t n_valid = ds.periods_with_role(PeriodRole::valid).size();
        std::size_t n_test = ds.periods_with_role(PeriodRole::test).size();
        os << "roles = " << n_train << "," << n_valid << "," << n_test << "\n";
        os << "period_sizes =";
        for (const auto& p : ds.periods) os << " " << p.size();
        os << "\n";
        for (const auto& [key, value] : extra_manifest) os << key << " = " << value << "\n";
    }
    {
        std::ofstream os(dir + "/interactions.tsv");
        for (std::size_t t = 0; t < ds.n_periods(); ++t)
            for (const Interaction& x : ds.periods[t])
                os << x.user << "\t" << x.item << "\t" << x.timestamp << "\t" << t << "\n";
        if (!os) throw ConfigError("cannot write interactions in " + dir);
    }
    if (!ds.user_names.empty()) {
        std::ofstream us(dir + "/user_map.tsv");
        for (std::size_t i = 0; i < ds.user_names.size(); ++i) us << i << "\t" << ds.user_names[i] << "\n";
        std::ofstream is(dir + "/item_map.tsv");
        for (std::size_t i = 0; i < ds.item_names.size(); ++i) is << i << "\t" << ds.item_names[i] << "\n";
    }
}

inline PeriodizedDataset load_dataset(const std::string& dir) {
    std::ifstream ms(dir + "/manifest.txt");
    if (!ms) throw ConfigError("cannot open dataset manifest: " + dir + "/manifest.txt");
    std::map<std::string, std::string> kv;
    std::string line;
    while (std::getline(ms, line)) {
        std::size_t eq = line.find('=');
        if (eq == std::string::npos) continue;
        auto trim = [](std::string s) {
            std::size_t a = s.find_first_not_of(" \t");
            std::size_t b = s.find_last_not_of(" \t\r");
            return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
        };
        kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    if (kv["format"] != "sml-dataset-v1") throw ConfigError("unknown dataset format in " + dir);

    PeriodizedDataset ds;
    ds.n_users = std::stoull(kv.at("n_users"));
    ds.n_items = std::stoull(kv.at("n_items"));
    std::size_t np = std::stoull(kv.at("n_periods"));
    ds.periods.assign(np, {});

    std::ifstream is(dir + "/interactions.tsv");
    if (!is) throw ConfigError("cannot open " + dir + "/interactions.tsv");
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::uint64_t u, i;
        std::int64_t ts;
        std::size_t t;
        char tab;
        ss >> u >> tab >> i >> tab >> ts >> tab >> t;  // whitespace-separated works for tabs
        if (!ss || t >= np) throw ConfigError("bad interactions row in " + dir);
        ds.periods[t].push_back({static_cast<EntityId>(u), static_cast<EntityId>(i), ts});
    }

    std::size_t n_train = 0, n_valid = 0, n_test = 0;
    {
        std::istringstream rs(kv.at("roles"));
        char comma;
        rs >> n_train >> comma >> n_valid >> comma >> n_test;
    }
    ds.finalize();
    assign_roles(ds, n_train, n_valid, n_test);

    auto load_names = [&](const std::string& path, std::vector<std::string>& out) {
        std::ifstream ns(path);
        if (!ns) return;
        std::string row;
        while (std::getline(ns, row)) {
            std::size_t tab = row.find('\t');
            if (tab != std::string::npos) out.push_back(row.substr(tab + 1));
        }
    };
    load_names(dir + "/user_map.tsv", ds.user_names);
    load_names(dir + "/item_map.tsv", ds.item_names);
    return ds;
}

}  // namespace sml
