// sml: dataset preparation, sequential training, evaluation, gradient
// checking, retraining-cost benchmarking, and report emission.
//
// Exit codes: 0 success, 1 check/acceptance failure, 2 usage or config error.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sml/sml.hpp"

namespace fs = std::filesystem;
using namespace sml;

namespace {

struct CliOptions {
    std::string data_dir;
    std::string out_dir;
    std::string run_dir;
    std::string strategy = "sml";
    std::string variant = "cnn";
    std::string optimizer = "adam";
    std::string transfer_optimizer = "adam";

    TrainConfig train;
    std::size_t baseline_epochs = 10;
    double baseline_lambda = 0.0;
    std::size_t reservoir_capacity = 7000;

    bool no_cnn = false;
    bool no_fc = false;
    bool no_future = false;
    bool direct_fit = false;
    bool freeze_transfer = false;
    double alpha = 0.5;
    bool alpha_fixed = false;
    std::vector<std::size_t> mlp_hidden = {64};

    std::size_t candidates = 999;
    std::size_t threads = 1;
};

OptimizerKind parse_optimizer(const std::string& s) {
    if (s == "sgd") return OptimizerKind::sgd;
    if (s == "adam") return OptimizerKind::adam;
    throw ConfigError("unknown optimizer: " + s);
}

VariantSpec make_variant(const CliOptions& opt) {
    VariantSpec v;
    if (opt.variant == "cnn")
        v.kind = VariantSpec::Kind::cnn;
    else if (opt.variant == "weighted_sum")
        v.kind = VariantSpec::Kind::weighted_sum;
    else if (opt.variant == "mlp")
        v.kind = VariantSpec::Kind::mlp;
    else
        throw ConfigError("unknown transfer variant: " + opt.variant);
    v.no_conv = opt.no_cnn;
    v.no_fc = opt.no_fc;
    v.alpha = opt.alpha;
    v.alpha_trainable = !opt.alpha_fixed;
    v.mlp_hidden = opt.mlp_hidden;
    return v;
}

void finish_config(CliOptions& opt) {
    opt.train.embedding_optimizer = parse_optimizer(opt.optimizer);
    opt.train.transfer_optimizer = parse_optimizer(opt.transfer_optimizer);
    opt.train.no_future = opt.no_future;
    opt.train.direct_fit = opt.direct_fit;
    if (opt.strategy != "sml" &&
        (opt.no_cnn || opt.no_fc || opt.no_future || opt.direct_fit || opt.freeze_transfer))
        throw ConfigError("ablation flags are only valid with --strategy sml");
}

BaselineConfig make_baseline_config(const CliOptions& opt) {
    BaselineConfig b;
    b.epochs = opt.baseline_epochs;
    b.lr = opt.train.lr_embedding;
    b.optimizer = opt.train.embedding_optimizer;
    b.lambda = opt.baseline_lambda;
    b.batch_size = opt.train.batch_size;
    b.freeze_negatives = opt.train.freeze_negatives;
    b.seed = opt.train.seed;
    b.d = opt.train.d;
    return b;
}

EvalConfig make_eval_config(const CliOptions& opt) {
    EvalConfig e;
    e.n_candidates = opt.candidates;
    e.threads = opt.threads;
    return e;
}

void add_model_options(CLI::App* cmd, CliOptions& opt) {
    cmd->add_option("--seed", opt.train.seed, "Random seed (all streams derive from it)");
    cmd->add_option("--d", opt.train.d, "Embedding size");
    cmd->add_option("--n1", opt.train.n1, "First conv layer filters");
    cmd->add_option("--n2", opt.train.n2, "Second conv layer filters");
    cmd->add_option("--df", opt.train.df, "Fully connected layer size");
    cmd->add_option("--lr", opt.train.lr_embedding, "Embedding learning rate");
    cmd->add_option("--lr-transfer", opt.train.lr_transfer, "Transfer learning rate");
    cmd->add_option("--lambda1", opt.train.lambda1, "L2 weight on the transfer input");
    cmd->add_option("--lambda2", opt.train.lambda2, "L2 weight on the transfer parameters");
    cmd->add_option("--step1-epochs", opt.train.step1_epochs, "Epochs per Step-1 round");
    cmd->add_option("--step2-epochs", opt.train.step2_epochs, "Epochs per Step-2 round");
    cmd->add_option("--outer-iters", opt.train.max_outer_iters, "Max Step1/Step2 iterations per period");
    cmd->add_option("--early-stop-patience", opt.train.early_stop_patience,
                    "Stop a period after this many iterations without validation Recall@20 improvement (0 = off; the paper-style setting is 2)");
    cmd->add_option("--batch-size", opt.train.batch_size, "Minibatch size (0 = full batch)");
    cmd->add_flag("--freeze-negatives", opt.train.freeze_negatives,
                  "Sample negatives once per period instead of every epoch");
    cmd->add_option("--optimizer", opt.optimizer, "sgd|adam for embeddings");
    cmd->add_option("--transfer-optimizer", opt.transfer_optimizer, "sgd|adam for the transfer");
    cmd->add_option("--epochs", opt.baseline_epochs, "Baseline retraining epochs");
    cmd->add_option("--lambda", opt.baseline_lambda, "Baseline L2 weight");
    cmd->add_option("--reservoir-capacity", opt.reservoir_capacity, "Reservoir size");
    cmd->add_option("--strategy", opt.strategy, "sml|full|finetune|reservoir");
    cmd->add_option("--variant", opt.variant, "Transfer variant: cnn|weighted_sum|mlp");
    cmd->add_flag("--no-cnn", opt.no_cnn, "Ablation: drop the convolution layers");
    cmd->add_flag("--no-fc", opt.no_fc, "Ablation: drop the fully connected layer");
    cmd->add_flag("--no-future", opt.no_future, "Ablation: train the transfer on D_t instead of D_{t+1}");
    cmd->add_flag("--direct-fit", opt.direct_fit, "Ablation: fit the transfer input on the raw loss");
    cmd->add_option("--alpha", opt.alpha, "weighted_sum coefficient (initial, or fixed with --alpha-fixed)");
    cmd->add_flag("--alpha-fixed", opt.alpha_fixed, "Keep the weighted_sum coefficient constant");
    cmd->add_option("--mlp-hidden", opt.mlp_hidden, "MLP variant hidden sizes")->delimiter(',');
    cmd->add_option("--candidates", opt.candidates, "Sampled non-interacted items per test case");
    cmd->add_option("--threads", opt.threads, "Worker cap for evaluation");
    cmd->set_config("--config", "", "key=value config file (flags override it)");
    cmd->allow_config_extras(true);
}

std::vector<std::size_t> parse_roles(const std::string& roles, std::size_t n_periods) {
    std::vector<std::size_t> out;
    std::stringstream ss(roles);
    std::string tok;
    while (std::getline(ss, tok, ',')) out.push_back(std::stoull(tok));
    if (out.size() != 3)
        throw ConfigError("--roles expects train,valid,test counts");
    if (out[0] + out[1] + out[2] != n_periods)
        throw ConfigError("--roles sums to " + std::to_string(out[0] + out[1] + out[2]) +
                          " but the dataset has " + std::to_string(n_periods) + " periods");
    return out;
}

void write_run_config(CLI::App* cmd, const std::string& out_dir) {
    std::ofstream os(out_dir + "/run.ini");
    os << cmd->config_to_str(true, false);
}

std::size_t last_train_period(const PeriodizedDataset& ds) {
    auto train = ds.periods_with_role(PeriodRole::train);
    if (train.empty()) throw ConfigError("dataset has no training periods");
    return train.back();
}

void write_eval_outputs(const RunResult& res, const EvalConfig& ecfg, const std::string& out_dir) {
    write_reports_ndjson(res.reports, out_dir + "/report.ndjson");
    write_reports_tsv(res.reports, out_dir + "/report.tsv");
    write_timing_ndjson(res.reports, out_dir + "/timing.ndjson");

    EvalReport er{res.reports};
    std::ofstream os(out_dir + "/report_avg.tsv");
    os << "method";
    for (std::size_t k : ecfg.ks) os << "\trecall@" << k << "\tndcg@" << k;
    os << "\n";
    if (!res.reports.empty()) {
        os << res.reports.front().method;
        char buf[64];
        for (std::size_t i = 0; i < ecfg.ks.size(); ++i) {
            std::snprintf(buf, sizeof buf, "\t%.6f\t%.6f", er.average_over_tests(i, false),
                          er.average_over_tests(i, true));
            os << buf;
        }
        os << "\n";
    }
}

// ---------------------------------------------------------------------------

void cmd_synth(const CliOptions& opt, const SyntheticSpec& spec, const std::string& roles) {
    PeriodizedDataset ds = generate_synthetic(spec);
    auto r = parse_roles(roles, ds.n_periods());
    assign_roles(ds, r[0], r[1], r[2]);
    auto problems = validate(ds);
    if (!problems.empty()) throw ConfigError("generated dataset invalid: " + problems.front());
    fs::create_directories(opt.out_dir);
    std::map<std::string, std::string> extras = {
        {"scheme", "synthetic"},
        {"seed", std::to_string(spec.seed)},
        {"drift_rate", std::to_string(spec.drift_rate)},
        {"arrival_rate", std::to_string(spec.arrival_rate)},
    };
    save_dataset(ds, opt.out_dir, extras);
    std::cout << "wrote " << ds.n_periods() << " periods, " << ds.n_users << " users, "
              << ds.n_items << " items to " << opt.out_dir << "\n";
}

void cmd_split(const CliOptions& opt, const std::string& input, const std::string& scheme,
               std::size_t periods, const std::string& cuts_arg, double tz_offset_hours,
               std::size_t min_user, std::size_t min_item, const std::string& roles) {
    auto raw = read_raw_log(input);
    raw = filter_inactive(std::move(raw), min_user, min_item);
    if (raw.empty()) throw ConfigError("no interactions left after inactivity filtering");
    ParsedLog log = densify(raw);

    PeriodizedDataset ds;
    std::map<std::string, std::string> extras = {{"scheme", scheme},
                                                 {"source", input},
                                                 {"min_user_interactions", std::to_string(min_user)},
                                                 {"min_item_interactions", std::to_string(min_item)}};
    if (scheme == "count") {
        ds = split_by_count(std::move(log), periods);
    } else if (scheme == "window") {
        std::vector<double> cuts;
        std::stringstream ss(cuts_arg);
        std::string tok;
        while (std::getline(ss, tok, ',')) cuts.push_back(std::stod(tok));
        ds = split_by_window(std::move(log), cuts,
                             static_cast<std::int64_t>(tz_offset_hours * 3600.0));
        extras["cuts"] = cuts_arg;
    } else {
        throw ConfigError("unknown split scheme: " + scheme);
    }

    if (!roles.empty()) {
        auto r = parse_roles(roles, ds.n_periods());
        assign_roles(ds, r[0], r[1], r[2]);
    }
    auto problems = validate(ds);
    if (!problems.empty()) throw ConfigError("split produced an invalid dataset: " + problems.front());
    fs::create_directories(opt.out_dir);
    save_dataset(ds, opt.out_dir, extras);
    std::cout << "wrote " << ds.n_periods() << " periods (" << ds.n_users << " users, "
              << ds.n_items << " items) to " << opt.out_dir << "\n";
}

void cmd_train(CLI::App* cmd, CliOptions& opt) {
    finish_config(opt);
    PeriodizedDataset ds = load_dataset(opt.data_dir);
    fs::create_directories(opt.out_dir);
    write_run_config(cmd, opt.out_dir);

    if (opt.strategy == "sml") {
        VariantSpec variant = make_variant(opt);
        std::vector<TrainLogRecord> log;
        auto run_one = [&](auto transfer) {
            using T = decltype(transfer);
            std::function<void(std::size_t, TaskState<T>&)> hook =
                [&](std::size_t t, TaskState<T>& st) {
                    Checkpoint c = make_checkpoint(st);
                    write_checkpoint(opt.out_dir + "/period_" + std::to_string(t) + ".smlc", c);
                };
            auto outcome = train_sequential(ds, transfer, transfer, opt.train, hook);
            log = std::move(outcome.log);
        };
        switch (variant.kind) {
            case VariantSpec::Kind::weighted_sum:
                run_one(variant.alpha_trainable
                            ? WeightedSumTransfer::learnable(opt.train.d, variant.alpha)
                            : WeightedSumTransfer::fixed(opt.train.d, variant.alpha));
                break;
            case VariantSpec::Kind::mlp:
                run_one(MlpTransfer(opt.train.d, variant.mlp_hidden));
                break;
            default:
                run_one(make_cnn_transfer(opt.train, variant));
                break;
        }
        write_train_log_ndjson(log, opt.out_dir + "/training_log.ndjson");
    } else {
        Strategy strat = parse_strategy(opt.strategy);
        BaselineConfig bcfg = make_baseline_config(opt);
        BaselineWalker walker(ds, strat, bcfg, opt.reservoir_capacity);
        RunResult res;
        EvalConfig ecfg = make_eval_config(opt);
        std::size_t last = last_train_period(ds);
        for (std::size_t t = 0; t <= last; ++t) {
            walker.advance(false, ecfg, res);
            Checkpoint c;
            c.add("P", walker.embeddings().P);
            c.add("Q", walker.embeddings().Q);
            write_checkpoint(opt.out_dir + "/period_" + std::to_string(t) + ".smlc", c);
        }
        std::vector<TrainLogRecord> log;
        for (const CostRow& row : res.costs)
            log.push_back({row.period, 0, std::numeric_limits<double>::quiet_NaN(),
                           std::numeric_limits<double>::quiet_NaN(), row.wall_seconds,
                           row.examples_touched});
        write_train_log_ndjson(log, opt.out_dir + "/training_log.ndjson");
    }
    std::cout << "training finished; checkpoints in " << opt.out_dir << "\n";
}

void cmd_evaluate(CLI::App* cmd, CliOptions& opt) {
    finish_config(opt);
    PeriodizedDataset ds = load_dataset(opt.data_dir);
    if (opt.run_dir.empty()) opt.run_dir = opt.out_dir;
    fs::create_directories(opt.out_dir);
    std::size_t last = last_train_period(ds);
    std::string ckpt_path = opt.run_dir + "/period_" + std::to_string(last) + ".smlc";
    if (!fs::exists(ckpt_path)) throw ConfigError("missing checkpoint: " + ckpt_path);
    Checkpoint ckpt = read_checkpoint(ckpt_path);
    EvalConfig ecfg = make_eval_config(opt);
    RunResult res;

    if (opt.strategy == "sml") {
        VariantSpec variant = make_variant(opt);
        auto eval_walk = [&](auto transfer) {
            TaskState<decltype(transfer)> state;
            state.theta_user = transfer;
            state.theta_item = transfer;
            restore_checkpoint(state, ckpt);
            state.period = last;
            std::size_t d = opt.train.d;
            state.opt_p = OptimizerState::make(opt.train.embedding_optimizer,
                                               opt.train.lr_embedding, state.w_hat.n_users(), d);
            state.opt_q = OptimizerState::make(opt.train.embedding_optimizer,
                                               opt.train.lr_embedding, state.w_hat.n_items(), d);
            for (auto& ref : state.theta_user.parameters())
                state.opt_theta_user.push_back(OptimizerState::make(
                    opt.train.transfer_optimizer, opt.train.lr_transfer, ref.tensor->rows,
                    ref.tensor->cols));
            for (auto& ref : state.theta_item.parameters())
                state.opt_theta_item.push_back(OptimizerState::make(
                    opt.train.transfer_optimizer, opt.train.lr_transfer, ref.tensor->rows,
                    ref.tensor->cols));
            ObservedTracker observed(ds.n_users);
            observed.advance_to(ds, last);
            for (std::size_t p = last + 1; p < ds.n_periods(); ++p) {
                PeriodReport rep = evaluate_and_update(state, ds, p, observed, opt.train, ecfg,
                                                       opt.freeze_transfer);
                rep.method = opt.freeze_transfer ? "sml-s" : "sml";
                res.reports.push_back(rep);
                Checkpoint c = make_checkpoint(state);
                write_checkpoint(opt.out_dir + "/period_" + std::to_string(p) + ".smlc", c);
            }
        };
        switch (variant.kind) {
            case VariantSpec::Kind::weighted_sum:
                eval_walk(variant.alpha_trainable
                              ? WeightedSumTransfer::learnable(opt.train.d, variant.alpha)
                              : WeightedSumTransfer::fixed(opt.train.d, variant.alpha));
                break;
            case VariantSpec::Kind::mlp:
                eval_walk(MlpTransfer(opt.train.d, variant.mlp_hidden));
                break;
            default:
                eval_walk(make_cnn_transfer(opt.train, variant));
                break;
        }
    } else {
        Strategy strat = parse_strategy(opt.strategy);
        BaselineConfig bcfg = make_baseline_config(opt);
        BaselineWalker walker(ds, strat, bcfg, opt.reservoir_capacity);
        Embeddings w;
        w.P = ckpt.require("P");
        w.Q = ckpt.require("Q");
        walker.resume(std::move(w), last);
        for (std::size_t p = last + 1; p < ds.n_periods(); ++p) {
            walker.advance(true, ecfg, res);
            Checkpoint c;
            c.add("P", walker.embeddings().P);
            c.add("Q", walker.embeddings().Q);
            write_checkpoint(opt.out_dir + "/period_" + std::to_string(p) + ".smlc", c);
        }
        for (PeriodReport& rep : res.reports) rep.method = opt.strategy;
    }

    write_eval_outputs(res, ecfg, opt.out_dir);
    write_run_config(cmd, opt.out_dir);
    EvalReport er{res.reports};
    std::cout << "evaluated " << res.reports.size() << " periods; mean test recall@10 = "
              << er.average_over_tests(1) << "\n";
}

int cmd_gradcheck(std::uint64_t seed, std::size_t trials, double tol, bool perturb) {
    GradCheckSummary sum = run_gradcheck_suite(seed, trials, tol, perturb);
    std::printf("gradcheck: %zu trials, max relative error %.3e (%s)\n", sum.trials,
                sum.worst_error, sum.worst_site.c_str());
    std::printf("%s\n", sum.pass ? "PASS" : "FAIL");
    return sum.pass ? 0 : 1;
}

void cmd_bench(CliOptions& opt, const std::string& strategies_arg) {
    finish_config(opt);
    PeriodizedDataset ds = load_dataset(opt.data_dir);
    std::vector<Strategy> strategies;
    std::stringstream ss(strategies_arg);
    std::string tok;
    while (std::getline(ss, tok, ',')) strategies.push_back(parse_strategy(tok));

    VariantSpec variant = make_variant(opt);
    auto rows = run_bench(ds, strategies, opt.train, make_baseline_config(opt),
                          opt.reservoir_capacity, variant);

    fs::create_directories(opt.out_dir);
    std::ofstream os(opt.out_dir + "/cost_table.tsv");
    os << "strategy\tperiod\texamples_touched\twall_seconds\n";
    for (const CostRow& row : rows) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.6f", row.wall_seconds);
        os << row.method << "\t" << row.period << "\t" << row.examples_touched << "\t" << buf
           << "\n";
    }

    std::map<std::string, std::map<std::size_t, const CostRow*>> by_method;
    for (const CostRow& row : rows) by_method[row.method][row.period] = &row;
    std::printf("%-10s %10s %14s %12s\n", "strategy", "period", "examples", "wall_s");
    for (auto& [m, per] : by_method)
        for (auto& [t, row] : per)
            std::printf("%-10s %10zu %14zu %12.4f\n", m.c_str(), t, row->examples_touched,
                        row->wall_seconds);
    if (by_method.count("full") && by_method.count("sml")) {
        std::size_t final_t = ds.n_periods() - 1;
        const CostRow* f = by_method["full"][final_t];
        const CostRow* s = by_method["sml"][final_t];
        if (f && s && s->wall_seconds > 0.0)
            std::printf("final-period wall ratio full/sml = %.2f\n",
                        f->wall_seconds / s->wall_seconds);
    }
}

void cmd_report(const std::string& runs_arg, const std::string& out_file,
                const std::string& dump_filters) {
    if (!dump_filters.empty()) {
        Checkpoint ckpt = read_checkpoint(dump_filters);
        for (const char* name : {"user.F1", "item.F1"}) {
            const DenseMatrix* t = ckpt.find(name);
            if (!t) continue;
            std::printf("# %s (%zux%zu), rows are filters, columns are the stacked inputs\n",
                        name, t->rows, t->cols);
            for (std::size_t r = 0; r < t->rows; ++r) {
                for (std::size_t c = 0; c < t->cols; ++c) std::printf("% .6f\t", (*t)(r, c));
                std::printf("\n");
            }
        }
    }
    if (runs_arg.empty()) return;

    std::ofstream os(out_file);
    if (!os) throw ConfigError("cannot write " + out_file);
    bool first = true;
    std::stringstream ss(runs_arg);
    std::string dir;
    while (std::getline(ss, dir, ',')) {
        std::ifstream is(dir + "/report.ndjson");
        if (!is) throw ConfigError("missing report.ndjson in " + dir);
        std::string line;
        std::vector<std::string> header;
        while (std::getline(is, line)) {
            auto j = nlohmann::json::parse(line);
            if (first) {
                os << "method\tperiod\trole\tcases";
                for (auto& [k, v] : j.items())
                    if (k.rfind("recall@", 0) == 0 || k.rfind("ndcg@", 0) == 0) header.push_back(k);
                std::sort(header.begin(), header.end());
                for (const auto& h : header) os << "\t" << h;
                os << "\n";
                first = false;
            }
            if (header.empty())
                for (auto& [k, v] : j.items())
                    if (k.rfind("recall@", 0) == 0 || k.rfind("ndcg@", 0) == 0) header.push_back(k);
            os << j["method"].get<std::string>() << "\t" << j["period"] << "\t"
               << j["role"].get<std::string>() << "\t" << j["cases"];
            for (const auto& h : header) os << "\t" << j.value(h, 0.0);
            os << "\n";
        }
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Sequential meta-learning for periodic recommender retraining"};
    app.require_subcommand(1);

    CliOptions opt;
    int rc = 0;

    // synth
    SyntheticSpec synth;
    std::string synth_roles = "10,2,3";
    auto* c_synth = app.add_subcommand("synth", "Generate a synthetic drift dataset");
    c_synth->add_option("--users", synth.n_users);
    c_synth->add_option("--items", synth.n_items);
    c_synth->add_option("--periods", synth.periods);
    c_synth->add_option("--per-period", synth.interactions_per_period);
    c_synth->add_option("--latent", synth.latent_dim, "Long-term factor dimension");
    c_synth->add_option("--drift", synth.drift_rate, "Per-period short-term random-walk step");
    c_synth->add_option("--arrival", synth.arrival_rate, "New-entity arrival rate per period");
    c_synth->add_option("--seed", synth.seed);
    c_synth->add_option("--roles", synth_roles, "train,valid,test period counts");
    c_synth->add_option("--out", opt.out_dir)->required()->envname("SML_OUTDIR");
    c_synth->callback([&] { cmd_synth(opt, synth, synth_roles); });

    // split
    std::string split_input, split_scheme = "count", split_cuts = "0,10,17", split_roles;
    std::size_t split_periods = 40, min_user = 0, min_item = 0;
    double tz_offset_hours = 0.0;
    auto* c_split = app.add_subcommand("split", "Split an interaction log into periods");
    c_split->add_option("--input", split_input, "user TAB item TAB unix_timestamp per line")->required();
    c_split->add_option("--scheme", split_scheme, "count|window");
    c_split->add_option("--periods", split_periods, "Period count for --scheme count");
    c_split->add_option("--cuts", split_cuts, "Time-of-day cut hours for --scheme window");
    c_split->add_option("--tz-offset-hours", tz_offset_hours, "Local-time offset applied to timestamps");
    c_split->add_option("--min-user", min_user, "Drop users with fewer interactions");
    c_split->add_option("--min-item", min_item, "Drop items with fewer interactions");
    c_split->add_option("--roles", split_roles, "train,valid,test period counts");
    c_split->add_option("--out", opt.out_dir)->required()->envname("SML_OUTDIR");
    c_split->callback([&] {
        cmd_split(opt, split_input, split_scheme, split_periods, split_cuts, tz_offset_hours,
                  min_user, min_item, split_roles);
    });

    // train
    auto* c_train = app.add_subcommand("train", "Run the selected strategy over the training periods");
    c_train->add_option("--data", opt.data_dir)->required();
    c_train->add_option("--out", opt.out_dir)->required()->envname("SML_OUTDIR");
    add_model_options(c_train, opt);
    c_train->callback([&] { cmd_train(c_train, opt); });

    // evaluate
    auto* c_eval = app.add_subcommand("evaluate", "Walk the validation/testing periods with test-then-update");
    c_eval->add_option("--data", opt.data_dir)->required();
    c_eval->add_option("--run", opt.run_dir, "Directory holding training checkpoints");
    c_eval->add_option("--out", opt.out_dir)->required()->envname("SML_OUTDIR");
    c_eval->add_flag("--freeze-transfer", opt.freeze_transfer,
                     "Do not update the transfer during evaluation (SML-S)");
    add_model_options(c_eval, opt);
    c_eval->callback([&] { cmd_evaluate(c_eval, opt); });

    // gradcheck
    std::size_t gc_trials = 10;
    double gc_tol = 1e-4;
    std::uint64_t gc_seed = 1;
    bool gc_perturb = false;
    auto* c_gc = app.add_subcommand("gradcheck", "Finite-difference checks of the two training gradients");
    c_gc->add_option("--trials", gc_trials);
    c_gc->add_option("--tol", gc_tol);
    c_gc->add_option("--seed", gc_seed);
    c_gc->add_flag("--perturb", gc_perturb)->group("");  // harness hook: corrupt one coordinate
    c_gc->callback([&] { rc = cmd_gradcheck(gc_seed, gc_trials, gc_tol, gc_perturb); });

    // bench
    std::string bench_strategies = "full,finetune,sml";
    auto* c_bench = app.add_subcommand("bench", "Per-period retraining cost for each strategy");
    c_bench->add_option("--data", opt.data_dir)->required();
    c_bench->add_option("--strategies", bench_strategies);
    c_bench->add_option("--out", opt.out_dir)->required()->envname("SML_OUTDIR");
    add_model_options(c_bench, opt);
    c_bench->callback([&] { cmd_bench(opt, bench_strategies); });

    // report
    std::string report_runs, report_out = "report_table.tsv", report_filters;
    auto* c_report = app.add_subcommand("report", "Merge run reports into a flat table / dump learned filters");
    c_report->add_option("--runs", report_runs, "Comma-separated run directories");
    c_report->add_option("--out", report_out);
    c_report->add_option("--dump-filters", report_filters, "Checkpoint whose first-layer filters to print");
    c_report->callback([&] { cmd_report(report_runs, report_out, report_filters); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return rc;
}
