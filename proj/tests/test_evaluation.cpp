#include "support.hpp"

#include <doctest.h>

#include <atomic>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

using namespace evscout;

namespace {

// Gaussian clusters, one per EV, in `d` dimensions.
FeatureTable fake_table(int n_evs, int rows, int d, double separation, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, 1.0);
    FeatureTable t;
    t.catalog = "toy";
    for (int j = 0; j < d; ++j) t.names.push_back("f" + std::to_string(j));
    t.values.resize(n_evs * rows, d);
    for (int e = 0; e < n_evs; ++e) {
        VectorXd center(d);
        for (int j = 0; j < d; ++j) center[j] = separation * g(rng);
        for (int r = 0; r < rows; ++r) {
            const int i = e * rows + r;
            for (int j = 0; j < d; ++j) t.values(i, j) = center[j] + g(rng);
            char ev[16], sid[32];
            std::snprintf(ev, sizeof ev, "ev%02d", e);
            std::snprintf(sid, sizeof sid, "ev%02d-s%03d", e, r);
            t.ev_ids.push_back(ev);
            t.session_ids.push_back(sid);
            t.connection_times.push_back(Instant{std::chrono::seconds{1'600'000'000 + 86'400 * r}});
        }
    }
    return t;
}

ExperimentConfig quick_config() {
    ExperimentConfig cfg;
    cfg.iterations = 3;
    cfg.nof = 5;
    cfg.seed = 42;
    return cfg;
}

}  // namespace

TEST_CASE("config defaults and validation") {
    CHECK(default_iterations(ModelKind::rf) == 25);
    CHECK(default_iterations(ModelKind::ada) == 25);
    CHECK(default_iterations(ModelKind::knn) == 100);
    ExperimentConfig cfg;
    CHECK(cfg.nof == 100);
    CHECK(cfg.train_fraction == 0.8);
    CHECK(cfg.effective_iterations() == 100);
    cfg.model = ModelKind::rf;
    CHECK(cfg.effective_iterations() == 25);
    CHECK_NOTHROW(cfg.validate());

    auto rejects = [](auto mutate) {
        ExperimentConfig c;
        mutate(c);
        try {
            c.validate();
            return false;
        } catch (const Error& e) {
            return e.code() == "bad_config";
        }
    };
    CHECK(rejects([](ExperimentConfig& c) { c.train_fraction = 1.0; }));
    CHECK(rejects([](ExperimentConfig& c) { c.train_fraction = 0.0; }));
    CHECK(rejects([](ExperimentConfig& c) { c.iterations = 0; }));
    CHECK(rejects([](ExperimentConfig& c) { c.q = {0.5}; }));
    CHECK(rejects([](ExperimentConfig& c) { c.q = {}; }));
}

TEST_CASE("assembly sizes follow q") {
    const FeatureTable t = fake_table(8, 20, 4, 1.0, 1);
    const LabeledDataset one = assemble("ev03", t, 1.0, 9);
    CHECK(one.positives() == 20);
    CHECK(one.negatives() == 20);
    CHECK(one.rows() == 40);
    const LabeledDataset five = assemble("ev03", t, 5.0, 9);
    CHECK(five.negatives() == 100);
    CHECK_NOTHROW(five.validate());
    for (Eigen::Index i = 0; i < five.rows(); ++i) {
        const bool own = five.ev_ids[static_cast<std::size_t>(i)] == "ev03";
        CHECK(own == (five.y[i] == 1));
    }
    std::set<std::string> ids(five.session_ids.begin(), five.session_ids.end());
    CHECK(ids.size() == 120);

    CHECK(assemble("ev03", t, 5.0, 9) == five);
    CHECK_FALSE(assemble("ev03", t, 5.0, 10) == five);

    try {
        assemble("ev03", t, 8.0, 1);
        FAIL("expected insufficient_pool");
    } catch (const Error& e) {
        CHECK(e.code() == "insufficient_pool");
        CHECK(std::string(e.what()).find("short by 20") != std::string::npos);
    }
    CHECK_THROWS_AS(assemble("nobody", t, 1.0, 1), Error);
}

TEST_CASE("larger draws extend smaller ones") {
    std::vector<Eigen::Index> pool(50);
    std::iota(pool.begin(), pool.end(), Eigen::Index{100});
    const auto small = sample_without_replacement(pool, 10, 3);
    const auto big = sample_without_replacement(pool, 30, 3);
    CHECK(std::equal(small.begin(), small.end(), big.begin()));
    std::set<Eigen::Index> uniq(big.begin(), big.end());
    CHECK(uniq.size() == 30);
    CHECK_THROWS_AS(sample_without_replacement(pool, 51, 3), Error);
}

TEST_CASE("stratified split preserves class counts") {
    for (int n_target : {5, 8, 20, 33}) {
        for (int q : {1, 3}) {
            LabelVector y(n_target * (1 + q));
            for (Eigen::Index i = 0; i < y.size(); ++i) y[i] = i < n_target ? 1 : 0;
            const TrainTestSplit s = stratified_split(y, 0.8, static_cast<std::uint64_t>(n_target * q));
            long train_pos = 0, test_pos = 0, train_neg = 0;
            for (auto i : s.train) (y[i] ? train_pos : train_neg)++;
            for (auto i : s.test) test_pos += y[i];
            CHECK(std::abs(train_pos - std::lround(0.8 * n_target)) <= 1);
            CHECK(test_pos >= 1);
            CHECK(train_neg >= 1);
            CHECK(s.train.size() + s.test.size() == static_cast<std::size_t>(y.size()));
            std::vector<Eigen::Index> all(s.train);
            all.insert(all.end(), s.test.begin(), s.test.end());
            std::sort(all.begin(), all.end());
            CHECK(std::adjacent_find(all.begin(), all.end()) == all.end());
        }
    }
    LabelVector tiny(3);
    tiny << 1, 0, 0;
    CHECK_THROWS_AS(stratified_split(tiny, 0.8, 0), Error);
}

TEST_CASE("test rows never influence the fitted pipeline") {
    const FeatureTable t = fake_table(5, 20, 6, 0.8, 2);
    const LabeledDataset ds = assemble("ev01", t, 2.0, 5);
    const TrainTestSplit s = stratified_split(ds.y, 0.8, 5);
    const LabeledDataset train = ds.subset(s.train);
    std::vector<Eigen::Index> reversed(s.test.rbegin(), s.test.rend());
    ExperimentConfig cfg = quick_config();
    const Confusion a = evaluate_split(train, ds.subset(s.test), cfg, 4, 8);
    const Confusion b = evaluate_split(train, ds.subset(reversed), cfg, 4, 8);
    CHECK(a.tp == b.tp);
    CHECK(a.fp == b.fp);
    CHECK(a.tn == b.tn);
    CHECK(a.fn == b.fn);
    // The selection depends on training rows alone.
    CHECK(fit_selection(train, 4).selected == fit_selection(ds.subset(s.train), 4).selected);
}

TEST_CASE("profiling report shape and ranges") {
    const FeatureTable t = fake_table(6, 16, 8, 1.5, 3);
    ExperimentConfig cfg = quick_config();
    cfg.q = {1.0, 2.0};
    const MetricsReport r = run_profiling(cfg, t);
    CHECK(r.select("f1", "fleet").size() == 2);
    CHECK(r.select("", "fleet").size() == 10);
    CHECK(r.select("", "ev").size() == 2 * 6 * 5);
    for (const auto& row : r.rows) {
        CHECK(row.mean >= 0.0);
        CHECK(row.mean <= 1.0);
        CHECK(row.std >= 0.0);
        CHECK(row.iterations == 3);
        CHECK(row.seed == 42);
        CHECK(row.model == "knn");
    }
    CHECK(r.select("f1", "fleet")[0]->n_evs == 6);
    CHECK(r.value("f1", 1.0) > 0.5);
    CHECK_THROWS_AS(r.value("f1", 3.0), Error);

    const MetricsReport f1 = run_profiling(cfg, t, true);
    CHECK(f1.rows.size() == 2);
    CHECK(f1.rows[0].axis == "q");
    CHECK(f1.rows[0].mean == r.value("f1", 1.0));
}

TEST_CASE("fleet aggregate is the mean of per-EV means") {
    const FeatureTable t = fake_table(5, 14, 6, 1.0, 4);
    const MetricsReport r = run_profiling(quick_config(), t);
    for (const char* metric : {"precision", "recall", "specificity", "f1", "g_mean"}) {
        const auto per_ev = r.select(metric, "ev");
        REQUIRE(per_ev.size() == 5);
        double m = 0.0;
        for (const auto* row : per_ev) m += row->mean;
        m /= 5.0;
        double ss = 0.0;
        for (const auto* row : per_ev) ss += (row->mean - m) * (row->mean - m);
        const auto* fleet = r.select(metric, "fleet").at(0);
        CHECK(fleet->mean == doctest::Approx(m).epsilon(1e-12));
        CHECK(fleet->std == doctest::Approx(std::sqrt(ss / 5.0)).epsilon(1e-12));
    }
}

TEST_CASE("reports are reproducible and independent of the job count") {
    const FeatureTable t = fake_table(6, 15, 6, 1.0, 5);
    ExperimentConfig cfg = quick_config();
    cfg.q = {1.0, 3.0};
    std::ostringstream a, b, c;
    persist(run_profiling(cfg, t), a);
    persist(run_profiling(cfg, t), b);
    cfg.jobs = 4;
    persist(run_profiling(cfg, t), c);
    CHECK(a.str() == b.str());
    CHECK(a.str() == c.str());
}

TEST_CASE("report round trip and header check") {
    MetricsReport r;
    r.warnings = {"nof 200 exceeds the catalog size; clamped to 128", "needs, quoting \"here\""};
    MetricRow row;
    row.model = "rf";
    row.q = 2.5;
    row.nof = 100;
    row.metric = "f1";
    row.mean = 1.0 / 3.0;
    row.std = 0.0123456789012345;
    row.n_evs = 7;
    row.iterations = 25;
    row.seed = 18446744073709551615ULL;
    row.axis = "window";
    row.axis_value = "0.3:mean";
    r.rows.push_back(row);
    std::stringstream ss;
    persist(r, ss);
    const std::string text = ss.str();
    CHECK(text.rfind("#evscout-report,1\n", 0) == 0);
    CHECK(load_report(ss) == r);

    std::stringstream bad("#evscout-report,2\nmodel,q\n");
    CHECK_THROWS_AS(load_report(bad), VersionMismatch);
}

TEST_CASE("nof sweep rows and clamping") {
    const FeatureTable t = fake_table(5, 14, 12, 1.0, 6);
    ExperimentConfig cfg = quick_config();
    cfg.q = {1.0, 2.0};
    const MetricsReport r = sweep_nof(cfg, t, {3, 6, 20});
    CHECK(r.rows.size() == 3 * 2);
    REQUIRE(!r.warnings.empty());
    CHECK(r.warnings[0].find("clamped to 12") != std::string::npos);
    for (const auto& row : r.rows) {
        CHECK(row.metric == "f1");
        CHECK(row.axis == "nof");
    }
    CHECK(r.select("f1", "nof", "12").size() == 2);
    CHECK(r.select("f1", "nof", "12")[0]->nof == 12);
}

TEST_CASE("train-size sweep") {
    CHECK(default_train_sizes().size() == 8);
    CHECK(default_train_sizes().front() == 7);
    CHECK(default_train_sizes().back() == 56);
    FeatureTable t = fake_table(6, 40, 6, 1.5, 7);
    ExperimentConfig cfg = quick_config();
    cfg.q = {1.0, 2.0};
    const MetricsReport r = sweep_train_size(cfg, t, {7, 14, 28}, 30);
    CHECK(r.rows.size() == 3 * 2);
    for (const auto& row : r.rows) {
        CHECK(row.axis == "train_size");
        CHECK(row.n_evs == 6);
    }
    // Nobody has 70 rows.
    const MetricsReport none = sweep_train_size(cfg, t, {7}, 70);
    CHECK(!none.warnings.empty());
}

TEST_CASE("degradation windows") {
    CHECK(degradation_window_count(0.3) == 14);
    CHECK(degradation_window_count(0.6) == 8);
    CHECK(degradation_window_count(0.6) < degradation_window_count(0.3));
    for (int count : {1, 3, 8, 14}) {
        const auto parts = partition_span(42, 160, count);
        REQUIRE(parts.size() == static_cast<std::size_t>(count));
        CHECK(parts.front().first == 42);
        CHECK(parts.back().second == 160);
        for (std::size_t i = 1; i < parts.size(); ++i) CHECK(parts[i].first == parts[i - 1].second);
    }

    const FeatureTable t = fake_table(4, 60, 6, 1.5, 8);
    ExperimentConfig cfg = quick_config();
    const MetricsReport r = sweep_degradation(cfg, t, {0.3, 0.6}, 0.05, 3, 50);
    CHECK(r.select("f1", "window", "0.3:0").size() == 1);
    CHECK(r.select("f1", "window", "0.3:13").size() == 1);
    CHECK(r.select("f1", "window", "0.6:7").size() == 1);
    CHECK(r.select("f1", "window", "0.6:mean").size() == 1);
    CHECK(r.rows.size() == 14 + 1 + 8 + 1);
    CHECK(r.select("f1", "window", "0.3:0")[0]->n_evs == 3);
}

TEST_CASE("degradation on a stationary synthetic fleet is flat") {
    const testing::Pipeline p = testing::build_pipeline(10, 160, 1.0, 31);
    REQUIRE(p.modern.rows() == 1600);
    ExperimentConfig cfg;
    cfg.iterations = 3;
    cfg.seed = 5;
    const MetricsReport r = sweep_degradation(cfg, p.modern, {0.3, 0.6});
    for (const char* frac : {"0.3", "0.6"}) {
        const double mean = r.select("f1", "window", std::string(frac) + ":mean").at(0)->mean;
        const int W = degradation_window_count(std::stod(frac));
        for (int w = 0; w < W; ++w) {
            const double v = r.select("f1", "window", std::string(frac) + ":" + std::to_string(w)).at(0)->mean;
            INFO(frac, " window ", w, " f1 ", v, " mean ", mean);
            CHECK(std::abs(v - mean) <= 0.05);
        }
    }
}

TEST_CASE("legacy comparison layout") {
    const testing::Pipeline p = testing::build_pipeline(4, 12, 1.0, 9);
    ExperimentConfig cfg = quick_config();
    cfg.q = {1.0, 2.0};
    cfg.nof = 50;
    const MetricsReport r = compare_legacy(cfg, p.modern, p.legacy);
    CHECK(r.rows.size() == 2 * 2);
    CHECK(r.select("f1", "arm", "modern").size() == 2);
    CHECK(r.select("f1", "arm", "legacy").size() == 2);
    CHECK(r.select("f1", "arm", "legacy")[0]->nof == 18);
    CHECK_THROWS_AS(compare_legacy(cfg, p.legacy, p.modern), Error);
    FeatureTable shuffled = p.legacy;
    std::swap(shuffled.session_ids[0], shuffled.session_ids[1]);
    CHECK_THROWS_AS(compare_legacy(cfg, p.modern, shuffled), Error);
}

TEST_CASE("failed EVs are skipped with a warning") {
    FeatureTable t = fake_table(4, 12, 5, 1.0, 10);
    // ev03 keeps a single row, too few to assemble.
    FeatureTable cut;
    cut.catalog = t.catalog;
    cut.names = t.names;
    std::vector<Eigen::Index> keep;
    for (Eigen::Index i = 0; i < t.rows(); ++i) {
        if (t.ev_ids[static_cast<std::size_t>(i)] != "ev03" || t.session_ids[static_cast<std::size_t>(i)] == "ev03-s000") {
            keep.push_back(i);
        }
    }
    cut.values.resize(static_cast<Eigen::Index>(keep.size()), t.values.cols());
    for (std::size_t k = 0; k < keep.size(); ++k) {
        cut.values.row(static_cast<Eigen::Index>(k)) = t.values.row(keep[k]);
        cut.ev_ids.push_back(t.ev_ids[static_cast<std::size_t>(keep[k])]);
        cut.session_ids.push_back(t.session_ids[static_cast<std::size_t>(keep[k])]);
        cut.connection_times.push_back(t.connection_times[static_cast<std::size_t>(keep[k])]);
    }
    const MetricsReport r = run_profiling(quick_config(), cut);
    CHECK(r.select("f1", "fleet").at(0)->n_evs == 3);
    CHECK(!r.warnings.empty());
}

TEST_CASE("config hash ignores field order") {
    const nlohmann::json a = nlohmann::json::parse(R"({"q":[1,5],"nof":100,"seed":3})");
    const nlohmann::json b = nlohmann::json::parse(R"({"seed":3,"nof":100,"q":[1,5]})");
    CHECK(config_hash(a) == config_hash(b));
    CHECK(config_hash(a).size() == 16);
    const nlohmann::json c = nlohmann::json::parse(R"({"seed":4,"nof":100,"q":[1,5]})");
    CHECK(config_hash(a) != config_hash(c));
    CHECK(config_hash(ExperimentConfig{}.to_json()) == config_hash(ExperimentConfig{}.to_json()));
}

TEST_CASE("manifest file") {
    testing::TempDir dir("manifest");
    RunManifest m;
    m.config = ExperimentConfig{}.to_json();
    m.config_hash = config_hash(m.config);
    m.inputs = {"a.csv"};
    m.outputs = {"b.csv"};
    m.tool_version = "test";
    m.seed = 3;
    write_manifest(m, dir / "m.json");
    std::ifstream in(dir / "m.json");
    const auto j = nlohmann::json::parse(in);
    CHECK(j["config_hash"] == m.config_hash);
    CHECK(j["seed"] == 3);
    CHECK(j["outputs"][0] == "b.csv");
}

TEST_CASE("parallel_for covers every index and rethrows") {
    std::vector<std::atomic<int>> hits(100);
    parallel_for(100, 4, [&](std::size_t i) { hits[i]++; });
    for (const auto& h : hits) CHECK(h.load() == 1);
    CHECK_THROWS_AS(parallel_for(50, 3,
                                 [](std::size_t i) {
                                     if (i == 17) throw Error("boom", "index 17");
                                 }),
                    Error);
}
