// Serialization of evaluation reports and training logs.
//
// Metric files (NDJSON + flat TSV) carry only deterministic quantities so two
// runs with the same seed are byte-identical; wall-clock timings go to a
// separate timing file.
#pragma once

#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "sml/evaluation.hpp"
#include "sml/trainer.hpp"

namespace sml {

inline nlohmann::json period_report_json(const PeriodReport& rep) {
    nlohmann::json j;
    j["method"] = rep.method;
    j["period"] = rep.period;
    j["role"] = rep.role;
    j["cases"] = rep.n_cases;
    for (std::size_t i = 0; i < rep.ks.size(); ++i) {
        j["recall@" + std::to_string(rep.ks[i])] = rep.recall[i];
        j["ndcg@" + std::to_string(rep.ks[i])] = rep.ndcg[i];
    }
    for (int t = 0; t < 4; ++t) {
        const TypeMetrics& tm = rep.by_type[t];
        nlohmann::json tj;
        tj["count"] = tm.count;
        for (std::size_t i = 0; i < rep.ks.size(); ++i) {
            tj["recall@" + std::to_string(rep.ks[i])] = tm.recall[i];
            tj["ndcg@" + std::to_string(rep.ks[i])] = tm.ndcg[i];
        }
        j["type"][interaction_type_name(static_cast<InteractionType>(t))] = tj;
    }
    j["candidate_shortfall"] = rep.candidate_shortfall;
    j["examples_touched"] = rep.examples_touched;
    return j;
}

inline void write_reports_ndjson(const std::vector<PeriodReport>& reports, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write " + path);
    for (const PeriodReport& rep : reports) os << period_report_json(rep).dump() << "\n";
}

// One row per period per method, suitable for external plotting.
inline void write_reports_tsv(const std::vector<PeriodReport>& reports, const std::string& path,
                              bool append = false) {
    std::ofstream os(path, append ? std::ios::app : std::ios::out);
    if (!os) throw std::runtime_error("cannot write " + path);
    if (!append) {
        os << "method\tperiod\trole\tcases";
        if (!reports.empty())
            for (std::size_t k : reports.front().ks)
                os << "\trecall@" << k << "\tndcg@" << k;
        os << "\tOU-OI\tOU-NI\tNU-OI\tNU-NI\texamples_touched\n";
    }
    for (const PeriodReport& rep : reports) {
        os << rep.method << "\t" << rep.period << "\t" << rep.role << "\t" << rep.n_cases;
        char buf[64];
        for (std::size_t i = 0; i < rep.ks.size(); ++i) {
            std::snprintf(buf, sizeof buf, "\t%.6f\t%.6f", rep.recall[i], rep.ndcg[i]);
            os << buf;
        }
        for (int t = 0; t < 4; ++t) os << "\t" << rep.by_type[t].count;
        os << "\t" << rep.examples_touched << "\n";
    }
}

inline void write_timing_ndjson(const std::vector<PeriodReport>& reports, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write " + path);
    for (const PeriodReport& rep : reports) {
        nlohmann::json j;
        j["method"] = rep.method;
        j["period"] = rep.period;
        j["train_wall_seconds"] = rep.train_wall_seconds;
        j["eval_wall_seconds"] = rep.eval_wall_seconds;
        os << j.dump() << "\n";
    }
}

// One record per (period, outer iteration); this is the training log, so it
// keeps its wall times.
inline void write_train_log_ndjson(const std::vector<TrainLogRecord>& log, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write " + path);
    for (const TrainLogRecord& rec : log) {
        nlohmann::json j;
        j["period"] = rec.period;
        j["outer_iter"] = rec.outer_iter;
        if (std::isfinite(rec.loss_r)) j["loss_r"] = rec.loss_r;
        if (std::isfinite(rec.loss_s)) j["loss_s"] = rec.loss_s;
        j["wall_seconds"] = rec.wall_seconds;
        j["examples_touched"] = rec.examples_touched;
        os << j.dump() << "\n";
    }
}

}  // namespace sml
