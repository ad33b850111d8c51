#include "oracles.hpp"
#include "support.hpp"

#include <doctest.h>

#include <numeric>
#include <sstream>

using namespace evscout;
using testing::to_eigen;

namespace {

std::size_t index_of(std::string_view name) {
    const auto& names = series_feature_names();
    const auto it = std::find(names.begin(), names.end(), name);
    REQUIRE(it != names.end());
    return static_cast<std::size_t>(it - names.begin());
}

double feat(const SeriesFeatures& f, std::string_view name) { return f.values[index_of(name)]; }

Tail tail_of(const std::vector<double>& c, std::vector<double> p = {}) {
    Tail t;
    t.current = to_eigen(c);
    t.pilot = p.empty() ? VectorXd::Constant(t.current.size(), 32.0) : to_eigen(p);
    t.length = t.current.size() - 1;
    t.t_start = t.length + 10;
    return t;
}

DeltaSeries delta_of(const std::vector<double>& d) {
    DeltaSeries s;
    s.values = to_eigen(d);
    return s;
}

LabeledDataset dataset(const MatrixXd& X, const std::vector<int>& y) {
    LabeledDataset ds;
    ds.catalog = "toy";
    for (Eigen::Index j = 0; j < X.cols(); ++j) ds.names.push_back("f" + std::to_string(j));
    ds.X = X;
    ds.y.resize(static_cast<Eigen::Index>(y.size()));
    for (std::size_t i = 0; i < y.size(); ++i) ds.y[static_cast<Eigen::Index>(i)] = y[i];
    ds.target_ev = "t";
    return ds;
}

void check_against_oracle(const std::vector<double>& x) {
    const SeriesFeatures got = series_features(to_eigen(x));
    const std::vector<double> ref = oracle::series_features(x);
    REQUIRE(ref.size() == kSeriesFeatureCount);
    for (std::size_t i = 0; i < kSeriesFeatureCount; ++i) {
        INFO("feature ", series_feature_names()[i], " n=", x.size());
        const bool undefined = !std::isfinite(ref[i]);
        CHECK(got.replaced[i] == undefined);
        const double expect = undefined ? 0.0 : ref[i];
        CHECK(std::abs(got.values[i] - expect) <= 1e-9 * std::max({1.0, std::abs(expect), std::abs(got.values[i])}));
    }
}

}  // namespace

TEST_CASE("catalog has 64 unique names per series and 128 overall") {
    const auto& names = series_feature_names();
    std::vector<std::string_view> sorted(names.begin(), names.end());
    std::sort(sorted.begin(), sorted.end());
    CHECK(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end());
    CHECK(modern_feature_names().size() == 128);
    CHECK(modern_feature_names()[0] == "tail__mean");
    CHECK(modern_feature_names()[64] == "delta__mean");
    CHECK(legacy_feature_names().size() == kLegacyFeatureCount);
}

TEST_CASE("constant series features") {
    const SeriesFeatures f = series_features(VectorXd::Constant(30, 7.3));
    CHECK(feat(f, "mean") == 7.3);
    CHECK(feat(f, "median") == 7.3);
    CHECK(feat(f, "minimum") == 7.3);
    CHECK(feat(f, "maximum") == 7.3);
    CHECK(feat(f, "std") == 0.0);
    CHECK(feat(f, "trend_slope") == 0.0);
    for (int lag = 1; lag <= 5; ++lag) {
        const std::string name = "autocorr_lag_" + std::to_string(lag);
        CHECK(feat(f, name) == 0.0);
        CHECK(f.replaced[index_of(name)]);
    }
    CHECK_FALSE(f.replaced[index_of("mean")]);
}

TEST_CASE("hand arithmetic on [1,2,3,4]") {
    const FeatureVector fv = featurize(tail_of({1, 2, 3, 4}), delta_of({0, 0}));
    REQUIRE(fv.values.size() == 128);
    CHECK(fv.values[static_cast<Eigen::Index>(index_of("trend_slope"))] == doctest::Approx(1.0));
    CHECK(fv.values[static_cast<Eigen::Index>(index_of("mean_abs_change"))] == 1.0);
    CHECK(fv.values[static_cast<Eigen::Index>(index_of("abs_energy"))] == 30.0);
    CHECK(fv.values[static_cast<Eigen::Index>(64 + index_of("mean"))] == 0.0);
    CHECK(fv.values.allFinite());
}

TEST_CASE("catalog equals the independent implementation") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) check_against_oracle(testing::random_series(200, seed, -3.0, 9.0));
    for (std::size_t n : {1u, 2u, 3u, 5u, 11u, 19u, 20u, 21u}) check_against_oracle(testing::random_series(n, 77 + n));
    check_against_oracle(std::vector<double>(17, 2.5));
    // Integer-valued series with many ties.
    std::vector<double> ties;
    for (int i = 0; i < 60; ++i) ties.push_back(static_cast<double>((i * 7) % 5));
    check_against_oracle(ties);
    // A real tail shape.
    std::vector<double> decay;
    for (int i = 0; i < 80; ++i) decay.push_back(25.0 * std::exp(-i / 20.0));
    check_against_oracle(decay);
}

TEST_CASE("scale covariance") {
    const auto x = testing::random_series(150, 3, 0.5, 10.0);
    std::vector<double> y(x);
    const double lambda = 3.5;
    for (double& v : y) v *= lambda;
    const SeriesFeatures a = series_features(to_eigen(x));
    const SeriesFeatures b = series_features(to_eigen(y));
    for (const char* name : {"mean", "std", "maximum", "minimum", "median", "quantile_0.05", "quantile_0.25",
                             "quantile_0.9", "range", "interquartile_range"}) {
        INFO(name);
        CHECK(feat(b, name) == doctest::Approx(lambda * feat(a, name)).epsilon(1e-12));
    }
    for (const char* name : {"count_above_mean", "count_below_mean", "longest_run_above_mean",
                             "longest_run_below_mean", "mean_crossings", "index_of_max", "index_of_min",
                             "local_maxima", "number_peaks_3"}) {
        INFO(name);
        CHECK(feat(b, name) == feat(a, name));
    }
}

TEST_CASE("featurize is deterministic and rejects short tails") {
    const Tail t = tail_of(testing::random_series(40, 1, 0.0, 5.0));
    const DeltaSeries d = delta_of(testing::random_series(90, 2));
    CHECK(same_values(featurize(t, d).values, featurize(t, d).values));
    CHECK_THROWS_AS(featurize(t, d, 100), Error);
    CHECK_THROWS_AS(series_features(VectorXd()), Error);
}

TEST_CASE("legacy vector") {
    TailRecord rec;
    rec.tail = tail_of({2, 2, 2}, {2, 2, 2});
    rec.kwh = 7.2;
    rec.connection_time = parse_instant("2021-01-01T00:00:00Z");
    rec.disconnection_time = rec.connection_time + std::chrono::seconds{3600};
    const FeatureVector fv = featurize_legacy(rec);
    REQUIRE(fv.values.size() == 18);
    CHECK(fv.values[1] == 2.0);
    CHECK(fv.values[9] == 2.0);
    CHECK(fv.values[16] == 7.2);
    CHECK(fv.values[17] == 3600.0);
    CHECK(fv.values[6] == 3.0);
    CHECK(fv.values[0] == 2.0);
    CHECK(fv.values[3] == 2.0);

    // Mode on 0.1 A bins: 5.04 and 4.96 both round to 5.0.
    rec.tail = tail_of({5.04, 4.96, 7.0, 5.01, 9.0}, {32, 32, 32, 32, 32});
    CHECK(featurize_legacy(rec).values[1] == 5.0);
}

TEST_CASE("chi2 matches a hand-computed contingency") {
    // Column 0: class-1 sum 2, class-0 sum 1, expected 1.5 each -> 2 * 0.25 / 1.5.
    MatrixXd X(6, 3);
    X << 1, 0.5, 0,
         0, 0.5, 0,
         1, 0.5, 0,
         0, 0.5, 0,
         0, 0.5, 0,
         1, 0.5, 0;
    LabelVector y(6);
    y << 1, 1, 1, 0, 0, 0;
    const VectorXd s = chi2_scores(X, y);
    CHECK(s[0] == doctest::Approx(1.0 / 3.0));
    CHECK(s[1] == 0.0);
    CHECK(s[2] == 0.0);
}

TEST_CASE("chi2 matches the oracle on a 20-feature toy matrix") {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    MatrixXd X(6, 20);
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        for (Eigen::Index j = 0; j < X.cols(); ++j) X(i, j) = u(rng);
    }
    const std::vector<int> yv{1, 0, 1, 1, 0, 0};
    const LabeledDataset ds = dataset(X, yv);
    const VectorXd s = chi2_scores(X, ds.y);
    for (Eigen::Index j = 0; j < X.cols(); ++j) {
        std::vector<double> col;
        for (Eigen::Index i = 0; i < X.rows(); ++i) col.push_back(X(i, j));
        CHECK(s[j] == doctest::Approx(oracle::chi2_column(col, yv)).epsilon(1e-12));
        CHECK(s[j] >= 0.0);
    }
}

TEST_CASE("selection ranks a label-identical column first and drops constants") {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    MatrixXd X(40, 10);
    std::vector<int> y;
    for (Eigen::Index i = 0; i < 40; ++i) {
        y.push_back(i % 2);
        for (Eigen::Index j = 0; j < 10; ++j) X(i, j) = u(rng);
        X(i, 6) = static_cast<double>(i % 2);
        X(i, 3) = 4.0;
    }
    const LabeledDataset ds = dataset(X, y);
    const SelectionModel m = fit_selection(ds, 1);
    REQUIRE(m.selected.size() == 1);
    CHECK(m.selected[0] == 6);

    const SelectionModel all = fit_selection(ds, 10);
    CHECK(all.selected.size() == 9);
    CHECK(std::find(all.selected.begin(), all.selected.end(), 3) == all.selected.end());
    CHECK(all.scores[3] == 0.0);
    CHECK((all.scores.array() >= 0.0).all());

    CHECK_THROWS_AS(fit_selection(ds, 0), Error);
    CHECK_THROWS_AS(fit_selection(ds, 11), Error);
    CHECK_THROWS_AS(fit_selection(dataset(X, std::vector<int>(40, 1)), 3), Error);
}

TEST_CASE("apply_selection scales, clamps and projects") {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    MatrixXd X(30, 8);
    std::vector<int> y;
    for (Eigen::Index i = 0; i < 30; ++i) {
        y.push_back(i < 12);
        for (Eigen::Index j = 0; j < 8; ++j) X(i, j) = u(rng) + (i < 12 ? 0.3 * static_cast<double>(j) : 0.0);
    }
    const LabeledDataset ds = dataset(X, y);
    const SelectionModel m = fit_selection(ds, 5);
    const MatrixXd train = apply_selection(m, X, ds.names);
    CHECK(train.cols() == 5);
    CHECK(train.allFinite());
    CHECK((train.array() >= 0.0).all());
    CHECK((train.array() <= 1.0).all());
    CHECK(std::is_sorted(m.selected.begin(), m.selected.end()));

    MatrixXd probe = X.topRows(1);
    probe.array() += 1000.0;
    CHECK((apply_selection(m, probe, ds.names).array() == 1.0).all());

    std::vector<std::string> wrong = ds.names;
    wrong[0] = "other";
    CHECK_THROWS_AS(apply_selection(m, X, wrong), Error);
}

TEST_CASE("selection is permutation equivariant") {
    std::mt19937_64 rng(12);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    MatrixXd X(50, 12);
    std::vector<int> y;
    for (Eigen::Index i = 0; i < 50; ++i) {
        y.push_back(i % 3 == 0);
        for (Eigen::Index j = 0; j < 12; ++j) X(i, j) = u(rng) + (i % 3 == 0 ? 0.1 * static_cast<double>(j % 4) : 0.0);
    }
    std::vector<Eigen::Index> perm(12);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    MatrixXd P(50, 12);
    for (Eigen::Index j = 0; j < 12; ++j) P.col(j) = X.col(perm[static_cast<std::size_t>(j)]);

    const SelectionModel a = fit_selection(dataset(X, y), 5);
    const SelectionModel b = fit_selection(dataset(P, y), 5);
    std::vector<Eigen::Index> mapped;
    for (Eigen::Index j : b.selected) mapped.push_back(perm[static_cast<std::size_t>(j)]);
    std::sort(mapped.begin(), mapped.end());
    CHECK(mapped == a.selected);
}

TEST_CASE("a duplicated discriminative column keeps a copy in the top-k") {
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int k = 1; k <= 6; ++k) {
        MatrixXd X(40, 12);
        std::vector<int> y;
        for (Eigen::Index i = 0; i < 40; ++i) {
            y.push_back(i % 2);
            for (Eigen::Index j = 0; j < 12; ++j) X(i, j) = u(rng);
            X(i, 4) = X(i, 9) = static_cast<double>(i % 2);
        }
        const SelectionModel m = fit_selection(dataset(X, y), k);
        const bool has = std::find(m.selected.begin(), m.selected.end(), 4) != m.selected.end() ||
                         std::find(m.selected.begin(), m.selected.end(), 9) != m.selected.end();
        CHECK(has);
    }
}

TEST_CASE("synthetic table: 100 of 128 features") {
    const testing::Pipeline p = testing::build_pipeline(3, 12, 1.0, 5);
    REQUIRE(p.modern.rows() == 36);
    CHECK(p.modern.values.cols() == 128);
    CHECK(p.legacy.values.cols() == 18);
    CHECK(p.modern.values.allFinite());
    const LabeledDataset ds = assemble("ev000", p.modern, 1.0, 1);
    const SelectionModel m = fit_selection(ds, 100);
    CHECK(apply_selection(m, ds.X, ds.names).cols() == 100);
}

TEST_CASE("tails round trip") {
    const testing::Pipeline p = testing::build_pipeline(2, 5, 1.0, 8);
    TailParams params;
    params.epsilon = 0.02;
    std::stringstream ss;
    persist(p.tails, params, ss);
    TailParams back_params;
    const auto back = load_tails(ss, &back_params);
    CHECK(back_params.epsilon == 0.02);
    REQUIRE(back.size() == p.tails.size());
    for (std::size_t i = 0; i < back.size(); ++i) {
        CHECK(back[i].session_id == p.tails[i].session_id);
        CHECK(back[i].ev_id == p.tails[i].ev_id);
        CHECK(back[i].connection_time == p.tails[i].connection_time);
        CHECK(back[i].disconnection_time == p.tails[i].disconnection_time);
        CHECK(back[i].kwh == p.tails[i].kwh);
        CHECK(back[i].tail.t_start == p.tails[i].tail.t_start);
        CHECK(back[i].tail.length == p.tails[i].tail.length);
        CHECK(same_values(back[i].tail.current, p.tails[i].tail.current));
        CHECK(same_values(back[i].tail.pilot, p.tails[i].tail.pilot));
        CHECK(same_values(back[i].delta.values, p.tails[i].delta.values));
    }
    std::stringstream bad("{\"format\":\"evscout-tails\",\"version\":7}\n");
    CHECK_THROWS_AS(load_tails(bad), VersionMismatch);
}

TEST_CASE("feature table and dataset round trips") {
    const testing::Pipeline p = testing::build_pipeline(3, 9, 1.0, 2);
    std::stringstream ss;
    persist(p.modern, ss);
    CHECK(load_feature_table(ss) == p.modern);

    testing::TempDir dir("table");
    persist(p.legacy, dir / "legacy.csv");
    CHECK(load_feature_table(dir / "legacy.csv") == p.legacy);

    const LabeledDataset ds = assemble("ev001", p.modern, 2.0, 4);
    std::stringstream ds_stream;
    persist(ds, ds_stream);
    CHECK(load_labeled_dataset(ds_stream) == ds);

    std::string text;
    {
        std::stringstream tmp;
        persist(p.modern, tmp);
        text = tmp.str();
    }
    const auto pos = text.find(",1");
    REQUIRE(pos != std::string::npos);
    text.replace(pos, 2, ",9");
    std::stringstream wrong(text);
    CHECK_THROWS_AS(load_feature_table(wrong), VersionMismatch);
}
