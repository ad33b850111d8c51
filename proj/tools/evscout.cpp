// evscout: batch front end for ingestion, extraction, featurization and the
// profiling experiments.

#include "evscout/evaluation.hpp"
#include "evscout/features.hpp"
#include "evscout/synth.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace evscout;

namespace {

constexpr const char* kToolVersion = "0.1.0";

std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        if (c == '"' || c == '\\') out += '\\';
        out += c == '\n' ? ' ' : c;
    }
    return out;
}

fs::path output_path(const std::string& given, const std::string& fallback) {
    if (!given.empty()) return given;
    const char* dir = std::getenv("EVSCOUT_OUT_DIR");
    return fs::path(dir && *dir ? dir : ".") / fallback;
}

std::string iso_now() {
    return format_instant(std::chrono::floor<std::chrono::seconds>(std::chrono::system_clock::now()));
}

/// Runs `run` and, if it returns, writes the manifest next to `out`.
template <class Fn>
void with_manifest(const std::string& command, nlohmann::json config, std::vector<std::string> inputs,
                   const fs::path& out, std::uint64_t seed, Fn&& run) {
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    config["command"] = command;
    RunManifest m;
    m.config_hash = config_hash(config);
    m.config = std::move(config);
    m.inputs = std::move(inputs);
    m.outputs = {out.string()};
    m.tool_version = kToolVersion;
    m.started = iso_now();
    m.seed = seed;
    const auto t0 = std::chrono::steady_clock::now();
    run();
    m.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    write_manifest(m, out.string() + ".manifest.json");
}

void print_ingest(const IngestReport& r, const Fleet& f) {
    std::cout << "accepted " << r.accepted << " skipped " << r.skipped;
    for (const auto& [reason, n] : r.reasons) std::cout << ' ' << reason << '=' << n;
    std::cout << " evs " << f.ev_count() << '\n';
}

void print_warnings(const MetricsReport& r) {
    for (const auto& w : r.warnings) std::cerr << "warning: " << w << '\n';
}

struct ExperimentOptions {
    std::string features;
    std::string model = "knn";
    std::vector<double> q;
    int nof = 100;
    int iterations = 0;
    double train_fraction = 0.8;
    std::uint64_t seed = 0;
    int folds = 3;
    int jobs = 1;
    std::string out;

    ExperimentConfig config() const {
        ExperimentConfig c;
        c.model = model_kind_from_string(model);
        c.q = q;
        c.nof = nof;
        if (iterations > 0) c.iterations = iterations;
        c.train_fraction = train_fraction;
        c.seed = seed;
        c.folds = folds;
        c.jobs = jobs;
        c.validate();
        return c;
    }
};

void add_experiment_options(CLI::App* cmd, ExperimentOptions& o, std::vector<double> default_q,
                            bool needs_features = true) {
    o.q = std::move(default_q);
    if (needs_features) cmd->add_option("--features", o.features, "feature table")->required();
    cmd->add_option("--model", o.model, "svm, knn, dt, lr, rf or ada")
        ->check(CLI::IsMember({"svm", "knn", "dt", "lr", "rf", "ada"}))
        ->capture_default_str();
    cmd->add_option("--q", o.q, "others-to-target ratios")->delimiter(',')->capture_default_str();
    cmd->add_option("--nof", o.nof, "features kept by chi2 selection")->capture_default_str();
    cmd->add_option("--iterations", o.iterations, "repetitions (default 100, 25 for rf/ada)");
    cmd->add_option("--train-fraction", o.train_fraction)->capture_default_str();
    cmd->add_option("--seed", o.seed)->capture_default_str();
    cmd->add_option("--folds", o.folds, "cross-validation folds")->capture_default_str();
    cmd->add_option("--jobs", o.jobs, "worker threads")->capture_default_str();
    cmd->add_option("--out", o.out, "report file");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"evscout: EV profiling from charging current and pilot time series"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kToolVersion);

    // ingest
    std::string acn, canonical, cutoff, ingest_out;
    auto* ingest = app.add_subcommand("ingest", "read ACN or canonical sessions into a fleet file");
    auto* acn_opt = ingest->add_option("--acn", acn, "ACN-Data session document (JSON)");
    auto* can_opt = ingest->add_option("--canonical", canonical, "canonical line-delimited session file");
    acn_opt->excludes(can_opt);
    ingest->add_option("--cutoff", cutoff, "keep sessions connected before this UTC instant");
    ingest->add_option("--out", ingest_out, "fleet file");

    // synth
    FleetSpec spec;
    std::string synth_out, truth_out;
    auto* synth = app.add_subcommand("synth", "generate a synthetic fleet");
    synth->add_option("--evs", spec.n_evs)->capture_default_str();
    synth->add_option("--sessions", spec.sessions_per_ev)->capture_default_str();
    synth->add_option("--spread", spec.spread, "signature spread in [0, 1]")->capture_default_str();
    synth->add_option("--seed", spec.seed)->capture_default_str();
    synth->add_option("--period", spec.period, "sampling period, seconds")->capture_default_str();
    synth->add_option("--untailed", spec.untailed_fraction, "share of sessions cut before CV")
        ->capture_default_str();
    synth->add_option("--drift", spec.drift, "relative i_max/tau drift over an EV's sessions")
        ->capture_default_str();
    synth->add_option("--jitter", spec.session_jitter, "per-session signature variation, half-range units")
        ->capture_default_str();
    synth->add_option("--out", synth_out, "fleet file");
    synth->add_option("--truth", truth_out, "ground-truth side table (JSON)");

    // extract
    TailParams tp;
    std::string fleet_in, tails_out, dump_out;
    std::size_t min_tailed = 8;
    auto* extract = app.add_subcommand("extract", "filter eligible EVs and extract tails and delta series");
    extract->add_option("--fleet", fleet_in)->required();
    extract->add_option("--n-avg", tp.n_avg)->capture_default_str();
    extract->add_option("--epsilon", tp.epsilon)->capture_default_str();
    extract->add_option("--t-max", tp.t_max)->capture_default_str();
    extract->add_option("--zero-threshold", tp.zero_threshold)->capture_default_str();
    auto* min_len_opt = extract->add_option("--min-tail-len", tp.min_tail_len, "defaults to --n-avg");
    extract->add_option("--min-tailed", min_tailed, "tailed sessions an EV needs")->capture_default_str();
    extract->add_option("--out", tails_out, "tails file");
    extract->add_option("--dump", dump_out, "long-format CSV dump of the series");

    // featurize
    std::string tails_in, features_out;
    bool legacy = false;
    auto* featurize_cmd = app.add_subcommand("featurize", "build the feature table");
    featurize_cmd->add_option("--tails", tails_in)->required();
    featurize_cmd->add_flag("--legacy", legacy, "18-feature legacy catalog");
    featurize_cmd->add_option("--out", features_out, "feature table");

    // evaluate
    ExperimentOptions eval_opts;
    auto* evaluate = app.add_subcommand("evaluate", "per-EV profiling over a list of q");
    add_experiment_options(evaluate, eval_opts, {1.0});

    // sweep
    auto* sweep = app.add_subcommand("sweep", "parameter sweeps");
    sweep->require_subcommand(1);
    ExperimentOptions nof_opts, size_opts, q_opts, deg_opts;
    std::vector<int> nof_list{10, 25, 50, 100, 150, 200}, sizes = default_train_sizes();
    std::size_t size_min = 70, deg_min = 150, deg_top = 10;
    std::vector<double> fractions{0.3, 0.6};
    double window = 0.05;
    auto* sweep_nof_cmd = sweep->add_subcommand("nof", "F1 against the number of features");
    add_experiment_options(sweep_nof_cmd, nof_opts, {1.0});
    sweep_nof_cmd->add_option("--nof-list", nof_list)->delimiter(',')->capture_default_str();
    auto* sweep_size_cmd = sweep->add_subcommand("train-size", "F1 against the number of training vectors");
    add_experiment_options(sweep_size_cmd, size_opts, {1.0});
    sweep_size_cmd->add_option("--sizes", sizes)->delimiter(',')->capture_default_str();
    sweep_size_cmd->add_option("--min-sessions", size_min)->capture_default_str();
    auto* sweep_q_cmd = sweep->add_subcommand("q", "F1 against q");
    add_experiment_options(sweep_q_cmd, q_opts, {1.0, 2.0, 3.0, 4.0, 5.0});
    auto* sweep_deg_cmd = sweep->add_subcommand("degradation", "F1 over consecutive test windows");
    add_experiment_options(sweep_deg_cmd, deg_opts, {1.0});
    sweep_deg_cmd->add_option("--fractions", fractions)->delimiter(',')->capture_default_str();
    sweep_deg_cmd->add_option("--window", window)->capture_default_str();
    sweep_deg_cmd->add_option("--top", deg_top)->capture_default_str();
    sweep_deg_cmd->add_option("--min-sessions", deg_min)->capture_default_str();

    // compare-legacy
    ExperimentOptions cmp_opts;
    std::string cmp_tails;
    auto* compare = app.add_subcommand("compare-legacy", "modern catalog versus the legacy 18 features");
    compare->add_option("--tails", cmp_tails)->required();
    add_experiment_options(compare, cmp_opts, {1.0, 2.0, 3.0, 4.0, 5.0}, false);

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: code=usage message=\"" << escape(e.what()) << "\"\n";
        std::cerr << app.help();
        return 2;
    }

    try {
        if (*ingest) {
            if (acn.empty() == canonical.empty()) throw Error("usage", "give exactly one of --acn or --canonical");
            if (!canonical.empty() && !cutoff.empty()) throw Error("usage", "--cutoff applies to --acn input only");
            const fs::path out = output_path(ingest_out, "fleet.jsonl");
            nlohmann::json cfg{{"source", acn.empty() ? "canonical" : "acn"}, {"cutoff", cutoff}};
            with_manifest("ingest", cfg, {acn.empty() ? canonical : acn}, out, 0, [&] {
                IngestReport report;
                Fleet fleet;
                if (!acn.empty()) {
                    std::ifstream in(acn);
                    if (!in) throw Error("unreadable_file", "cannot open '" + acn + "'");
                    const auto raw = nlohmann::json::parse(in, nullptr, false);
                    if (raw.is_discarded()) throw Error("malformed_json", "'" + acn + "' is not JSON");
                    std::optional<Instant> cut;
                    if (!cutoff.empty()) cut = parse_instant(cutoff);
                    fleet = fleet_from_acn(raw, cut, &report);
                } else {
                    fleet = ingest_canonical(canonical, &report);
                }
                persist(fleet, out);
                print_ingest(report, fleet);
            });
        } else if (*synth) {
            const fs::path out = output_path(synth_out, "fleet.jsonl");
            nlohmann::json cfg{{"evs", spec.n_evs},         {"sessions", spec.sessions_per_ev},
                               {"spread", spec.spread},     {"period", spec.period},
                               {"untailed", spec.untailed_fraction}, {"drift", spec.drift},
                               {"jitter", spec.session_jitter}};
            with_manifest("synth", cfg, {}, out, spec.seed, [&] {
                const auto fleet = generate_fleet(spec);
                persist(fleet.fleet, out);
                if (!truth_out.empty()) write_truth(fleet, truth_out);
                std::cout << "sessions " << fleet.fleet.session_count() << " evs " << fleet.fleet.ev_count() << '\n';
            });
        } else if (*extract) {
            if (min_len_opt->count() == 0) tp.min_tail_len = tp.n_avg;
            tp.validate();
            const fs::path out = output_path(tails_out, "tails.jsonl");
            nlohmann::json cfg{{"n_avg", tp.n_avg},
                               {"epsilon", tp.epsilon},
                               {"t_max", tp.t_max},
                               {"zero_threshold", tp.zero_threshold},
                               {"min_tail_len", tp.min_tail_len},
                               {"min_tailed", min_tailed}};
            with_manifest("extract", cfg, {fleet_in}, out, 0, [&] {
                const Fleet fleet = filter_eligible(load_fleet(fleet_in), min_tailed, tp);
                const auto tails = extract_tails(fleet, tp);
                persist(tails, tp, out);
                if (!dump_out.empty()) {
                    std::ofstream dump(dump_out);
                    if (!dump) throw Error("unwritable_file", "cannot write '" + dump_out + "'");
                    dump_tails_csv(tails, dump);
                }
                std::cout << "tails " << tails.size() << " evs " << fleet.ev_count() << '\n';
            });
        } else if (*featurize_cmd) {
            const fs::path out = output_path(features_out, legacy ? "features_legacy.csv" : "features.csv");
            with_manifest("featurize", {{"legacy", legacy}}, {tails_in}, out, 0, [&] {
                TailParams params;
                const auto tails = load_tails(tails_in, &params);
                const auto table = featurize_all(tails, legacy, params.min_tail_len);
                persist(table, out);
                std::cout << "rows " << table.rows() << " features " << table.names.size() << '\n';
            });
        } else if (*evaluate) {
            const auto cfg = eval_opts.config();
            const fs::path out = output_path(eval_opts.out, "report.csv");
            with_manifest("evaluate", cfg.to_json(), {eval_opts.features}, out, cfg.seed, [&] {
                const auto rep = run_profiling(cfg, load_feature_table(eval_opts.features));
                persist(rep, out);
                print_warnings(rep);
            });
        } else if (*sweep) {
            const ExperimentOptions& o = *sweep_nof_cmd    ? nof_opts
                                         : *sweep_size_cmd ? size_opts
                                         : *sweep_q_cmd    ? q_opts
                                                           : deg_opts;
            const std::string kind = *sweep_nof_cmd    ? "nof"
                                     : *sweep_size_cmd ? "train-size"
                                     : *sweep_q_cmd    ? "q"
                                                       : "degradation";
            const auto cfg = o.config();
            auto json = cfg.to_json();
            json["sweep"] = kind;
            if (kind == "nof") json["nof_list"] = nof_list;
            if (kind == "train-size") {
                json["sizes"] = sizes;
                json["min_sessions"] = size_min;
            }
            if (kind == "degradation") {
                json["fractions"] = fractions;
                json["window"] = window;
                json["top"] = deg_top;
                json["min_sessions"] = deg_min;
            }
            const fs::path out = output_path(o.out, "sweep_" + kind + ".csv");
            with_manifest("sweep", json, {o.features}, out, cfg.seed, [&] {
                const auto table = load_feature_table(o.features);
                MetricsReport rep;
                if (kind == "nof") rep = sweep_nof(cfg, table, nof_list);
                else if (kind == "train-size") rep = sweep_train_size(cfg, table, sizes, size_min);
                else if (kind == "q") rep = run_profiling(cfg, table, true);
                else rep = sweep_degradation(cfg, table, fractions, window, deg_top, deg_min);
                persist(rep, out);
                print_warnings(rep);
            });
        } else if (*compare) {
            const auto cfg = cmp_opts.config();
            const fs::path out = output_path(cmp_opts.out, "compare_legacy.csv");
            with_manifest("compare-legacy", cfg.to_json(), {cmp_tails}, out, cfg.seed, [&] {
                TailParams params;
                const auto tails = load_tails(cmp_tails, &params);
                const auto rep = compare_legacy(cfg, featurize_all(tails, false, params.min_tail_len),
                                                featurize_all(tails, true, params.min_tail_len));
                persist(rep, out);
                print_warnings(rep);
            });
        }
    } catch (const VersionMismatch& e) {
        std::cerr << "error: code=" << e.code() << " message=\"" << escape(e.what()) << "\"\n";
        return 3;
    } catch (const Error& e) {
        std::cerr << "error: code=" << e.code() << " message=\"" << escape(e.what()) << "\"\n";
        return e.code() == "usage" ? 2 : 1;
    } catch (const std::exception& e) {
        std::cerr << "error: code=internal message=\"" << escape(e.what()) << "\"\n";
        return 1;
    }
    return 0;
}
