#include "evscout/evaluation.hpp"

#include "text_io.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <mutex>
#include <random>
#include <sstream>
#include <thread>

namespace evscout {

namespace {

constexpr std::string_view kReportFormat = "evscout-report";
constexpr std::string_view kReportColumns = "model,q,nof,metric,mean,std,n_evs,iterations,seed,axis,axis_value";
constexpr std::array<std::string_view, 5> kMetricNames{"precision", "recall", "specificity", "f1", "g_mean"};
constexpr std::size_t kF1 = 3;

double metric_at(const Metrics& m, std::size_t k) {
    switch (k) {
        case 0: return m.precision;
        case 1: return m.recall;
        case 2: return m.specificity;
        case 3: return m.f1;
        default: return m.g_mean;
    }
}

std::size_t rounded(double v) { return static_cast<std::size_t>(std::llround(v)); }

struct MeanStd {
    double mean = 0.0;
    double std = 0.0;
};

MeanStd mean_std(const std::vector<double>& v) {
    if (v.empty()) return {};
    double m = 0.0;
    for (double x : v) m += x;
    m /= static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    return {m, std::sqrt(ss / static_cast<double>(v.size()))};
}

LabeledDataset make_dataset(const FeatureTable& t, const std::string& target, const std::vector<Eigen::Index>& pos,
                            const std::vector<Eigen::Index>& neg) {
    LabeledDataset ds;
    ds.catalog = t.catalog;
    ds.names = t.names;
    ds.target_ev = target;
    const auto n = static_cast<Eigen::Index>(pos.size() + neg.size());
    ds.X.resize(n, t.values.cols());
    ds.y.resize(n);
    Eigen::Index r = 0;
    for (const auto* rows : {&pos, &neg}) {
        for (Eigen::Index i : *rows) {
            ds.X.row(r) = t.values.row(i);
            ds.y[r] = rows == &pos ? 1 : 0;
            ds.ev_ids.push_back(t.ev_ids[static_cast<std::size_t>(i)]);
            ds.session_ids.push_back(t.session_ids[static_cast<std::size_t>(i)]);
            ++r;
        }
    }
    return ds;
}

std::vector<Eigen::Index> slice(const std::vector<Eigen::Index>& v, std::size_t begin, std::size_t end) {
    return {v.begin() + static_cast<std::ptrdiff_t>(begin), v.begin() + static_cast<std::ptrdiff_t>(end)};
}

/// Selection plus fitted model, reusable on several test sets.
struct FittedPipeline {
    SelectionModel selection;
    TrainedModel model;
};

FittedPipeline fit_pipeline(const LabeledDataset& train, const ExperimentConfig& cfg, int nof, std::uint64_t seed) {
    FittedPipeline p;
    p.selection = train.catalog == kLegacyCatalog ? fit_scaling(train) : fit_selection(train, nof);
    const MatrixXd X = apply_selection(p.selection, train.X, train.names);
    p.model = fit(cfg.model, cfg.grid, X, train.y, cfg.folds, seed);
    return p;
}

Confusion score(const FittedPipeline& p, const LabeledDataset& test) {
    return tally(test.y, predict(p.model, apply_selection(p.selection, test.X, test.names)));
}

/// Per-(EV, iteration) outcome for a set of result slots; empty optional
/// marks a skipped slot and `why` explains it.
struct TaskResult {
    std::vector<std::optional<Metrics>> slots;
    std::vector<std::string> why;
};

/// Runs fn for every (EV, iteration) pair in parallel and returns results in
/// task order.
template <class Fn>
std::vector<TaskResult> run_tasks(std::size_t n_evs, int iterations, std::size_t n_slots, int jobs, Fn&& fn) {
    const auto iters = static_cast<std::size_t>(iterations);
    std::vector<TaskResult> out(n_evs * iters);
    parallel_for(out.size(), jobs, [&](std::size_t task) {
        TaskResult& r = out[task];
        r.slots.assign(n_slots, std::nullopt);
        r.why.assign(n_slots, {});
        fn(task / iters, static_cast<int>(task % iters), r);
    });
    return out;
}

void record(TaskResult& r, std::size_t slot, const std::function<Confusion()>& body) {
    try {
        r.slots[slot] = compute_metrics(body());
    } catch (const Error& e) {
        r.why[slot] = e.code() + ": " + e.what();
    }
}

/// Per-EV means over iterations of one slot; EVs with any skipped iteration
/// are excluded and reported in `warnings`.
struct SlotSummary {
    std::vector<std::string> evs;
    std::vector<Metrics> per_ev;
};

SlotSummary summarize(const std::vector<TaskResult>& results, const std::vector<std::string>& evs, int iterations,
                      std::size_t slot, const std::string& label, std::vector<std::string>& warnings) {
    SlotSummary s;
    const auto iters = static_cast<std::size_t>(iterations);
    for (std::size_t e = 0; e < evs.size(); ++e) {
        Metrics sum;
        std::string why;
        for (std::size_t it = 0; it < iters && why.empty(); ++it) {
            const TaskResult& r = results[e * iters + it];
            if (!r.slots[slot]) {
                why = r.why[slot];
                break;
            }
            const Metrics& m = *r.slots[slot];
            sum.precision += m.precision;
            sum.recall += m.recall;
            sum.specificity += m.specificity;
            sum.f1 += m.f1;
            sum.g_mean += m.g_mean;
        }
        if (!why.empty()) {
            warnings.push_back("skipped " + evs[e] + " (" + label + "): " + why);
            continue;
        }
        const double n = static_cast<double>(iters);
        s.evs.push_back(evs[e]);
        s.per_ev.push_back({sum.precision / n, sum.recall / n, sum.specificity / n, sum.f1 / n, sum.g_mean / n});
    }
    return s;
}

MetricRow base_row(const ExperimentConfig& cfg, double q, int nof) {
    MetricRow r;
    r.model = std::string(to_string(cfg.model));
    r.q = q;
    r.nof = nof;
    r.iterations = cfg.effective_iterations();
    r.seed = cfg.seed;
    return r;
}

void add_aggregate(MetricsReport& rep, const SlotSummary& s, MetricRow base, bool f1_only) {
    for (std::size_t k = 0; k < kMetricNames.size(); ++k) {
        if (f1_only && k != kF1) continue;
        std::vector<double> v;
        for (const auto& m : s.per_ev) v.push_back(metric_at(m, k));
        const auto ms = mean_std(v);
        MetricRow r = base;
        r.metric = std::string(kMetricNames[k]);
        r.mean = ms.mean;
        r.std = ms.std;
        r.n_evs = static_cast<int>(s.per_ev.size());
        rep.rows.push_back(std::move(r));
    }
}

std::vector<Eigen::Index> concat_excluding(const std::vector<std::vector<Eigen::Index>>& pools,
                                           std::size_t skip) {
    std::vector<Eigen::Index> out;
    for (std::size_t e = 0; e < pools.size(); ++e) {
        if (e != skip) out.insert(out.end(), pools[e].begin(), pools[e].end());
    }
    return out;
}

std::vector<Eigen::Index> draw(const std::vector<Eigen::Index>& pool, std::size_t count, std::uint64_t seed,
                               const std::string& what) {
    if (count > pool.size()) {
        throw Error("insufficient_pool", "need " + std::to_string(count) + " " + what + " negatives, pool has " +
                                             std::to_string(pool.size()) + " (short by " +
                                             std::to_string(count - pool.size()) + ")");
    }
    return sample_without_replacement(pool, count, seed);
}

void require_table(const FeatureTable& t) {
    if (t.rows() == 0) throw Error("bad_dataset", "feature table is empty");
    if (t.ev_ids.size() != static_cast<std::size_t>(t.rows()) ||
        t.session_ids.size() != static_cast<std::size_t>(t.rows())) {
        throw Error("bad_dataset", "feature table ids do not match its rows");
    }
}

nlohmann::json depth_list(const std::vector<std::optional<int>>& v) {
    nlohmann::json a = nlohmann::json::array();
    for (const auto& d : v) a.push_back(d ? nlohmann::json(*d) : nlohmann::json(nullptr));
    return a;
}

}  // namespace

int default_iterations(ModelKind kind) noexcept {
    return kind == ModelKind::rf || kind == ModelKind::ada ? 25 : 100;
}

void ExperimentConfig::validate() const {
    if (q.empty()) throw Error("bad_config", "q list is empty");
    for (double v : q) {
        if (!std::isfinite(v) || v < 1.0) throw Error("bad_config", "q must be >= 1");
    }
    if (nof < 1) throw Error("bad_config", "nof must be >= 1");
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw Error("bad_config", "train_fraction must be in (0, 1)");
    if (effective_iterations() < 1) throw Error("bad_config", "iterations must be >= 1");
    if (folds < 2) throw Error("bad_config", "folds must be >= 2");
    if (jobs < 1) throw Error("bad_config", "jobs must be >= 1");
    grid.validate();
}

nlohmann::json ExperimentConfig::to_json() const {
    nlohmann::json g;
    g["svm_c"] = grid.svm_c;
    g["svm_gamma"] = grid.svm_gamma;
    g["knn_neighbors"] = grid.knn_neighbors;
    nlohmann::json w = nlohmann::json::array(), m = nlohmann::json::array(), c = nlohmann::json::array();
    for (auto x : grid.knn_weights) w.push_back(x == KnnWeights::uniform ? "uniform" : "distance");
    for (auto x : grid.knn_metric) m.push_back(x == KnnMetric::euclidean ? "euclidean" : "manhattan");
    for (auto x : grid.dt_criterion) c.push_back(x == SplitCriterion::gini ? "gini" : "entropy");
    g["knn_weights"] = w;
    g["knn_metric"] = m;
    g["dt_criterion"] = c;
    g["dt_max_depth"] = depth_list(grid.dt_max_depth);
    g["lr_max_iter"] = grid.lr_max_iter;
    g["lr_c"] = grid.lr_c;
    g["rf_n_estimators"] = grid.rf_n_estimators;
    g["rf_max_depth"] = depth_list(grid.rf_max_depth);
    g["ada_n_estimators"] = grid.ada_n_estimators;
    return {{"model", to_string(model)},
            {"q", q},
            {"nof", nof},
            {"train_fraction", train_fraction},
            {"iterations", effective_iterations()},
            {"seed", seed},
            {"folds", folds},
            {"grid", g}};
}

// ---- report -----------------------------------------------------------------

std::vector<const MetricRow*> MetricsReport::select(std::string_view metric, std::string_view axis,
                                                    std::string_view axis_value) const {
    std::vector<const MetricRow*> out;
    for (const auto& r : rows) {
        if ((metric.empty() || r.metric == metric) && (axis.empty() || r.axis == axis) &&
            (axis_value.empty() || r.axis_value == axis_value)) {
            out.push_back(&r);
        }
    }
    return out;
}

double MetricsReport::value(std::string_view metric, double q, std::string_view axis,
                            std::string_view axis_value) const {
    for (const auto* r : select(metric, axis, axis_value)) {
        if (r->q == q) return r->mean;
    }
    throw Error("missing_row", "no report row for " + std::string(metric) + " at q=" + detail::format_double(q) +
                                   " " + std::string(axis) + "=" + std::string(axis_value));
}

void persist(const MetricsReport& r, std::ostream& out) {
    using detail::csv_field;
    using detail::format_double;
    out << '#' << kReportFormat << ',' << kReportFormatVersion << '\n';
    for (const auto& w : r.warnings) out << "#warning," << csv_field(w) << '\n';
    out << kReportColumns << '\n';
    for (const auto& row : r.rows) {
        out << csv_field(row.model) << ',' << format_double(row.q) << ',' << row.nof << ',' << csv_field(row.metric)
            << ',' << format_double(row.mean) << ',' << format_double(row.std) << ',' << row.n_evs << ','
            << row.iterations << ',' << row.seed << ',' << csv_field(row.axis) << ',' << csv_field(row.axis_value)
            << '\n';
    }
}

void persist(const MetricsReport& r, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw Error("unwritable_file", "cannot write '" + path.string() + "'");
    persist(r, out);
}

MetricsReport load_report(std::istream& in) {
    detail::read_artifact_header(in, kReportFormat, kReportFormatVersion);
    MetricsReport r;
    std::string line;
    bool columns = false;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (line.rfind("#warning,", 0) == 0) {
            r.warnings.push_back(detail::split_csv(std::string_view(line).substr(9)).at(0));
            continue;
        }
        if (!columns) {
            if (line != kReportColumns) throw Error("malformed_table", "unexpected report columns");
            columns = true;
            continue;
        }
        const auto f = detail::split_csv(line);
        if (f.size() != 11) throw Error("malformed_table", "report row has " + std::to_string(f.size()) + " fields");
        MetricRow row;
        row.model = f[0];
        row.q = detail::parse_double(f[1]);
        row.nof = std::stoi(f[2]);
        row.metric = f[3];
        row.mean = detail::parse_double(f[4]);
        row.std = detail::parse_double(f[5]);
        row.n_evs = std::stoi(f[6]);
        row.iterations = std::stoi(f[7]);
        row.seed = std::stoull(f[8]);
        row.axis = f[9];
        row.axis_value = f[10];
        r.rows.push_back(std::move(row));
    }
    return r;
}

MetricsReport load_report(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("unreadable_file", "cannot open '" + path.string() + "'");
    return load_report(in);
}

// ---- assembly ---------------------------------------------------------------

std::vector<Eigen::Index> sample_without_replacement(const std::vector<Eigen::Index>& pool, std::size_t count,
                                                     std::uint64_t seed) {
    if (count > pool.size()) throw Error("insufficient_pool", "sample larger than pool");
    std::vector<Eigen::Index> v(pool);
    std::mt19937_64 rng(seed);
    for (std::size_t i = 0; i < count; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, v.size() - 1);
        std::swap(v[i], v[pick(rng)]);
    }
    v.resize(count);
    return v;
}

LabeledDataset assemble(const std::string& target, const FeatureTable& table, double q, std::uint64_t seed) {
    require_table(table);
    if (!std::isfinite(q) || q < 1.0) throw Error("bad_config", "q must be >= 1");
    const auto pos = table.rows_of(target);
    if (pos.size() < 2) {
        throw Error("too_few_rows", "target " + target + " has " + std::to_string(pos.size()) + " rows, need 2");
    }
    std::vector<Eigen::Index> pool;
    for (Eigen::Index i = 0; i < table.rows(); ++i) {
        if (table.ev_ids[static_cast<std::size_t>(i)] != target) pool.push_back(i);
    }
    const std::size_t need = rounded(q * static_cast<double>(pos.size()));
    return make_dataset(table, target, pos, draw(pool, need, seed, "target " + target));
}

TrainTestSplit stratified_split(const LabelVector& y, double train_fraction, std::uint64_t seed) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw Error("bad_config", "train_fraction must be in (0, 1)");
    TrainTestSplit s;
    for (int cls : {1, 0}) {
        std::vector<Eigen::Index> idx;
        for (Eigen::Index i = 0; i < y.size(); ++i) {
            if (y[i] == cls) idx.push_back(i);
        }
        if (idx.size() < 2) {
            throw Error("too_few_rows", "class " + std::to_string(cls) + " has " + std::to_string(idx.size()) +
                                            " rows; a split needs 2");
        }
        std::mt19937_64 rng(derive_seed(seed, cls));
        std::shuffle(idx.begin(), idx.end(), rng);
        const std::size_t k = std::clamp<std::size_t>(rounded(train_fraction * static_cast<double>(idx.size())), 1,
                                                      idx.size() - 1);
        s.train.insert(s.train.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k));
        s.test.insert(s.test.end(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end());
    }
    std::sort(s.train.begin(), s.train.end());
    std::sort(s.test.begin(), s.test.end());
    return s;
}

Confusion evaluate_split(const LabeledDataset& train, const LabeledDataset& test, const ExperimentConfig& config,
                         int nof, std::uint64_t seed) {
    return score(fit_pipeline(train, config, nof, seed), test);
}

// ---- experiments ------------------------------------------------------------

namespace {

/// Shared body of run_profiling and sweep_nof: slots are (q, nof) pairs.
MetricsReport profile(const ExperimentConfig& cfg, const FeatureTable& table, const std::vector<int>& nofs,
                      bool f1_only, bool per_ev, const std::string& axis) {
    cfg.validate();
    require_table(table);
    const auto evs = table.evs();
    const int iters = cfg.effective_iterations();
    const std::size_t nq = cfg.q.size(), nn = nofs.size();

    auto results = run_tasks(evs.size(), iters, nq * nn, cfg.jobs, [&](std::size_t e, int it, TaskResult& r) {
        const std::uint64_t seed = derive_seed(cfg.seed, e, it);
        for (std::size_t qi = 0; qi < nq; ++qi) {
            std::optional<LabeledDataset> ds;
            std::optional<TrainTestSplit> split;
            for (std::size_t ni = 0; ni < nn; ++ni) {
                record(r, qi * nn + ni, [&] {
                    if (!ds) {
                        ds = assemble(evs[e], table, cfg.q[qi], derive_seed(seed, 1));
                        split = stratified_split(ds->y, cfg.train_fraction, derive_seed(seed, 2));
                    }
                    return evaluate_split(ds->subset(split->train), ds->subset(split->test), cfg, nofs[ni],
                                          derive_seed(seed, 3));
                });
            }
        }
    });

    MetricsReport rep;
    for (std::size_t qi = 0; qi < nq; ++qi) {
        for (std::size_t ni = 0; ni < nn; ++ni) {
            const std::string label = "q=" + detail::format_double(cfg.q[qi]) + " nof=" + std::to_string(nofs[ni]);
            const auto s = summarize(results, evs, iters, qi * nn + ni, label, rep.warnings);
            MetricRow base = base_row(cfg, cfg.q[qi], nofs[ni]);
            base.axis = axis;
            base.axis_value = axis == "nof" ? std::to_string(nofs[ni]) : axis == "q" ? detail::format_double(cfg.q[qi]) : "";
            add_aggregate(rep, s, base, f1_only);
            if (!per_ev) continue;
            for (std::size_t e = 0; e < s.evs.size(); ++e) {
                for (std::size_t k = 0; k < kMetricNames.size(); ++k) {
                    MetricRow row = base_row(cfg, cfg.q[qi], nofs[ni]);
                    row.metric = std::string(kMetricNames[k]);
                    row.mean = metric_at(s.per_ev[e], k);
                    row.n_evs = 1;
                    row.axis = "ev";
                    row.axis_value = s.evs[e];
                    rep.rows.push_back(std::move(row));
                }
            }
        }
    }
    return rep;
}

}  // namespace

MetricsReport run_profiling(const ExperimentConfig& config, const FeatureTable& table, bool f1_only) {
    return profile(config, table, {config.nof}, f1_only, !f1_only, f1_only ? "q" : "fleet");
}

MetricsReport sweep_nof(const ExperimentConfig& config, const FeatureTable& table, std::vector<int> nof_list) {
    if (nof_list.empty()) throw Error("bad_config", "nof list is empty");
    const int cap = static_cast<int>(table.names.size());
    std::vector<std::string> warnings;
    for (int& n : nof_list) {
        if (n < 1) throw Error("bad_config", "nof values must be >= 1");
        if (n > cap) {
            warnings.push_back("nof " + std::to_string(n) + " exceeds the catalog size; clamped to " +
                               std::to_string(cap));
            n = cap;
        }
    }
    auto rep = profile(config, table, nof_list, true, false, "nof");
    rep.warnings.insert(rep.warnings.begin(), warnings.begin(), warnings.end());
    return rep;
}

std::vector<int> default_train_sizes() { return {7, 14, 21, 28, 35, 42, 49, 56}; }

MetricsReport sweep_train_size(const ExperimentConfig& config, const FeatureTable& table, std::vector<int> sizes,
                               std::size_t min_sessions) {
    config.validate();
    require_table(table);
    if (sizes.empty()) throw Error("bad_config", "size list is empty");
    for (int s : sizes) {
        if (s < 2) throw Error("bad_config", "training sizes must be >= 2");
    }
    const auto all_evs = table.evs();
    std::vector<std::vector<Eigen::Index>> train_pools, test_pools;
    std::vector<std::string> evs;
    std::vector<std::size_t> ev_pos;
    for (std::size_t e = 0; e < all_evs.size(); ++e) {
        const auto rows = table.rows_of(all_evs[e]);
        const std::size_t cut = rounded(config.train_fraction * static_cast<double>(rows.size()));
        train_pools.push_back(slice(rows, 0, cut));
        test_pools.push_back(slice(rows, cut, rows.size()));
        if (rows.size() >= min_sessions) {
            evs.push_back(all_evs[e]);
            ev_pos.push_back(e);
        }
    }

    MetricsReport rep;
    if (evs.empty()) {
        rep.warnings.push_back("no EV has at least " + std::to_string(min_sessions) + " rows");
    }
    const int iters = config.effective_iterations();
    const std::size_t nq = config.q.size(), ns = sizes.size();
    auto results = run_tasks(evs.size(), iters, nq * ns, config.jobs, [&](std::size_t e, int it, TaskResult& r) {
        const std::uint64_t seed = derive_seed(config.seed, e, it);
        const std::size_t self = ev_pos[e];
        const auto& own_train = train_pools[self];
        const auto& test_pos = test_pools[self];
        const auto neg_train_pool = concat_excluding(train_pools, self);
        const auto neg_test_pool = concat_excluding(test_pools, self);
        for (std::size_t qi = 0; qi < nq; ++qi) {
            const double q = config.q[qi];
            for (std::size_t si = 0; si < ns; ++si) {
                record(r, qi * ns + si, [&] {
                    const auto size = static_cast<std::size_t>(sizes[si]);
                    if (size > own_train.size()) {
                        throw Error("too_few_rows", "size " + std::to_string(size) + " exceeds the " +
                                                        std::to_string(own_train.size()) + " training rows of " +
                                                        evs[e]);
                    }
                    if (test_pos.empty()) throw Error("too_few_rows", evs[e] + " has no test rows");
                    const auto pos = slice(own_train, 0, size);
                    const auto neg = draw(neg_train_pool, rounded(q * static_cast<double>(size)),
                                          derive_seed(seed, 1), "training");
                    const auto test_neg = draw(neg_test_pool, rounded(q * static_cast<double>(test_pos.size())),
                                               derive_seed(seed, 2), "test");
                    return evaluate_split(make_dataset(table, evs[e], pos, neg),
                                          make_dataset(table, evs[e], test_pos, test_neg), config, config.nof,
                                          derive_seed(seed, 3));
                });
            }
        }
    });

    for (std::size_t qi = 0; qi < nq; ++qi) {
        for (std::size_t si = 0; si < ns; ++si) {
            const std::string label = "q=" + detail::format_double(config.q[qi]) + " size=" + std::to_string(sizes[si]);
            const auto s = summarize(results, evs, iters, qi * ns + si, label, rep.warnings);
            MetricRow base = base_row(config, config.q[qi], config.nof);
            base.axis = "train_size";
            base.axis_value = std::to_string(sizes[si]);
            add_aggregate(rep, s, base, true);
        }
    }
    return rep;
}

int degradation_window_count(double train_fraction, double window) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0) || !(window > 0.0)) {
        throw Error("bad_config", "degradation needs 0 < train_fraction < 1 and window > 0");
    }
    return std::max(1, static_cast<int>(std::lround((1.0 - train_fraction) / window)));
}

std::vector<std::pair<Eigen::Index, Eigen::Index>> partition_span(Eigen::Index begin, Eigen::Index end, int count) {
    if (count < 1 || end < begin) throw Error("bad_config", "bad span partition");
    const Eigen::Index len = end - begin;
    std::vector<std::pair<Eigen::Index, Eigen::Index>> out;
    for (int w = 0; w < count; ++w) {
        out.emplace_back(begin + len * w / count, begin + len * (w + 1) / count);
    }
    return out;
}

MetricsReport sweep_degradation(const ExperimentConfig& config, const FeatureTable& table,
                                std::vector<double> train_fractions, double window, std::size_t top_n,
                                std::size_t min_sessions) {
    config.validate();
    require_table(table);
    if (train_fractions.empty()) throw Error("bad_config", "train fraction list is empty");
    const auto all_evs = table.evs();
    std::vector<std::vector<Eigen::Index>> rows_by_ev;
    for (const auto& ev : all_evs) rows_by_ev.push_back(table.rows_of(ev));

    std::vector<std::size_t> order;
    for (std::size_t e = 0; e < all_evs.size(); ++e) {
        if (rows_by_ev[e].size() >= min_sessions) order.push_back(e);
    }
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return rows_by_ev[a].size() > rows_by_ev[b].size(); });
    if (order.size() > top_n) order.resize(top_n);
    std::vector<std::string> evs;
    for (std::size_t e : order) evs.push_back(all_evs[e]);

    MetricsReport rep;
    if (evs.empty()) rep.warnings.push_back("no EV has at least " + std::to_string(min_sessions) + " rows");

    // Slot layout: for each fraction, for each q, one slot per window.
    std::vector<int> windows;
    std::vector<std::size_t> offset;
    std::size_t n_slots = 0;
    for (double f : train_fractions) {
        windows.push_back(degradation_window_count(f, window));
        offset.push_back(n_slots);
        n_slots += config.q.size() * static_cast<std::size_t>(windows.back());
    }

    const int iters = config.effective_iterations();
    auto results = run_tasks(evs.size(), iters, n_slots, config.jobs, [&](std::size_t e, int it, TaskResult& r) {
        const std::uint64_t seed = derive_seed(config.seed, e, it);
        const std::size_t self = order[e];
        for (std::size_t fi = 0; fi < train_fractions.size(); ++fi) {
            const double frac = train_fractions[fi];
            const int W = windows[fi];
            std::vector<std::vector<Eigen::Index>> train_pools;
            std::vector<std::vector<std::vector<Eigen::Index>>> window_pools(static_cast<std::size_t>(W));
            for (std::size_t o = 0; o < rows_by_ev.size(); ++o) {
                const auto& rows = rows_by_ev[o];
                const auto cut = rounded(frac * static_cast<double>(rows.size()));
                train_pools.push_back(slice(rows, 0, cut));
                const auto parts = partition_span(static_cast<Eigen::Index>(cut),
                                                  static_cast<Eigen::Index>(rows.size()), W);
                for (int w = 0; w < W; ++w) {
                    window_pools[static_cast<std::size_t>(w)].push_back(
                        slice(rows, static_cast<std::size_t>(parts[static_cast<std::size_t>(w)].first),
                              static_cast<std::size_t>(parts[static_cast<std::size_t>(w)].second)));
                }
            }
            const auto& own = rows_by_ev[self];
            const auto cut = rounded(frac * static_cast<double>(own.size()));
            const auto pos = slice(own, 0, cut);
            const auto parts = partition_span(static_cast<Eigen::Index>(cut), static_cast<Eigen::Index>(own.size()), W);
            const auto neg_train_pool = concat_excluding(train_pools, self);
            for (std::size_t qi = 0; qi < config.q.size(); ++qi) {
                const double q = config.q[qi];
                const std::size_t base = offset[fi] + qi * static_cast<std::size_t>(W);
                std::optional<FittedPipeline> fitted;
                std::string fit_error;
                try {
                    const auto neg = draw(neg_train_pool, rounded(q * static_cast<double>(pos.size())),
                                          derive_seed(seed, 1, fi), "training");
                    fitted = fit_pipeline(make_dataset(table, evs[e], pos, neg), config, config.nof,
                                          derive_seed(seed, 3, fi));
                } catch (const Error& err) {
                    fit_error = err.code() + ": " + err.what();
                }
                for (int w = 0; w < W; ++w) {
                    const std::size_t slot = base + static_cast<std::size_t>(w);
                    if (!fitted) {
                        r.why[slot] = fit_error;
                        continue;
                    }
                    record(r, slot, [&] {
                        const auto& part = parts[static_cast<std::size_t>(w)];
                        const auto test_pos = slice(own, static_cast<std::size_t>(part.first),
                                                    static_cast<std::size_t>(part.second));
                        if (test_pos.empty()) throw Error("too_few_rows", "empty test window");
                        const auto pool = concat_excluding(window_pools[static_cast<std::size_t>(w)], self);
                        const auto test_neg = draw(pool, rounded(q * static_cast<double>(test_pos.size())),
                                                   derive_seed(seed, 2, fi, w), "window");
                        return score(*fitted, make_dataset(table, evs[e], test_pos, test_neg));
                    });
                }
            }
        }
    });

    for (std::size_t fi = 0; fi < train_fractions.size(); ++fi) {
        const std::string frac = detail::format_double(train_fractions[fi]);
        for (std::size_t qi = 0; qi < config.q.size(); ++qi) {
            std::vector<double> window_means;
            for (int w = 0; w < windows[fi]; ++w) {
                const std::size_t slot = offset[fi] + qi * static_cast<std::size_t>(windows[fi]) +
                                         static_cast<std::size_t>(w);
                const std::string label = "frac=" + frac + " q=" + detail::format_double(config.q[qi]) +
                                          " window=" + std::to_string(w);
                const auto s = summarize(results, evs, iters, slot, label, rep.warnings);
                MetricRow base = base_row(config, config.q[qi], config.nof);
                base.axis = "window";
                base.axis_value = frac + ":" + std::to_string(w);
                add_aggregate(rep, s, base, true);
                if (!s.per_ev.empty()) window_means.push_back(rep.rows.back().mean);
            }
            const auto ms = mean_std(window_means);
            MetricRow row = base_row(config, config.q[qi], config.nof);
            row.metric = "f1";
            row.mean = ms.mean;
            row.std = ms.std;
            row.n_evs = static_cast<int>(evs.size());
            row.axis = "window";
            row.axis_value = frac + ":mean";
            rep.rows.push_back(std::move(row));
        }
    }
    return rep;
}

MetricsReport compare_legacy(const ExperimentConfig& config, const FeatureTable& modern, const FeatureTable& legacy) {
    config.validate();
    require_table(modern);
    require_table(legacy);
    if (modern.catalog != kModernCatalog || legacy.catalog != kLegacyCatalog) {
        throw Error("table_mismatch", "compare_legacy needs a modern and a legacy feature table");
    }
    if (modern.session_ids != legacy.session_ids || modern.ev_ids != legacy.ev_ids) {
        throw Error("table_mismatch", "modern and legacy tables hold different sessions");
    }
    const auto evs = modern.evs();
    const int iters = config.effective_iterations();
    const std::size_t nq = config.q.size();
    // Slots: q-major, arm-minor (0 modern, 1 legacy).
    auto results = run_tasks(evs.size(), iters, nq * 2, config.jobs, [&](std::size_t e, int it, TaskResult& r) {
        const std::uint64_t seed = derive_seed(config.seed, e, it);
        for (std::size_t qi = 0; qi < nq; ++qi) {
            const FeatureTable* tables[2] = {&modern, &legacy};
            for (std::size_t arm = 0; arm < 2; ++arm) {
                record(r, qi * 2 + arm, [&] {
                    const auto ds = assemble(evs[e], *tables[arm], config.q[qi], derive_seed(seed, 1));
                    const auto split = stratified_split(ds.y, config.train_fraction, derive_seed(seed, 2));
                    return evaluate_split(ds.subset(split.train), ds.subset(split.test), config, config.nof,
                                          derive_seed(seed, 3));
                });
            }
        }
    });

    MetricsReport rep;
    for (std::size_t qi = 0; qi < nq; ++qi) {
        for (std::size_t arm = 0; arm < 2; ++arm) {
            const std::string name = arm == 0 ? "modern" : "legacy";
            const auto s = summarize(results, evs, iters, qi * 2 + arm,
                                     "q=" + detail::format_double(config.q[qi]) + " arm=" + name, rep.warnings);
            MetricRow base = base_row(config, config.q[qi],
                                      arm == 0 ? config.nof : static_cast<int>(legacy.names.size()));
            base.axis = "arm";
            base.axis_value = name;
            add_aggregate(rep, s, base, true);
        }
    }
    return rep;
}

// ---- manifest / parallel ----------------------------------------------------

std::string config_hash(const nlohmann::json& config) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : config.dump()) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    std::ostringstream os;
    os << std::hex;
    os.width(16);
    os.fill('0');
    os << h;
    return os.str();
}

nlohmann::json RunManifest::to_json() const {
    return {{"config_hash", config_hash},   {"config", config},   {"inputs", inputs},
            {"outputs", outputs},           {"tool_version", tool_version},
            {"started", started},           {"wall_clock_seconds", wall_clock_seconds},
            {"seed", seed}};
}

void write_manifest(const RunManifest& m, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw Error("unwritable_file", "cannot write '" + path.string() + "'");
    out << m.to_json().dump(2) << '\n';
}

void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn) {
    const auto workers = static_cast<std::size_t>(std::max(1, jobs));
    if (workers == 1 || n < 2) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::exception_ptr first;
    std::mutex mu;
    auto work = [&] {
        for (std::size_t i = next++; i < n && !failed; i = next++) {
            try {
                fn(i);
            } catch (...) {
                std::lock_guard lock(mu);
                if (!first) first = std::current_exception();
                failed = true;
            }
        }
    };
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < std::min(workers, n); ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
    if (first) std::rethrow_exception(first);
}

}  // namespace evscout
