#include "oracles.hpp"
#include "support.hpp"

#include <doctest.h>

using namespace evscout;
using testing::make_session;
using testing::to_eigen;

namespace {

bool close_rel(double a, double b, double rel = 1e-9) {
    return std::abs(a - b) <= rel * std::max({1.0, std::abs(a), std::abs(b)});
}

}  // namespace

TEST_CASE("moving average examples") {
    VectorXd a(4);
    a << 5, 5, 5, 5;
    CHECK(same_values(moving_average(a, 3), a));
    VectorXd b(3);
    b << 2, 4, 6;
    VectorXd expect(3);
    expect << 2, 3, 5;
    CHECK(same_values(moving_average(b, 2), expect));
    CHECK_THROWS_AS(moving_average(VectorXd(), 3), Error);
    CHECK_THROWS_AS(moving_average(b, 0), Error);
}

TEST_CASE("moving average matches the windowed-mean oracle and stays inside its window") {
    for (int n_avg : {1, 2, 7, 25, 60}) {
        const auto x = testing::random_series(1000, 40 + static_cast<std::uint64_t>(n_avg), 0.0, 40.0);
        const VectorXd got = moving_average(to_eigen(x), n_avg);
        const auto ref = oracle::moving_average(x, n_avg);
        for (std::size_t t = 0; t < x.size(); ++t) {
            CHECK(close_rel(got[static_cast<Eigen::Index>(t)], ref[t]));
            const std::size_t lo = t + 1 >= static_cast<std::size_t>(n_avg) ? t + 1 - static_cast<std::size_t>(n_avg) : 0;
            const double wmin = *std::min_element(x.begin() + static_cast<std::ptrdiff_t>(lo), x.begin() + static_cast<std::ptrdiff_t>(t) + 1);
            const double wmax = *std::max_element(x.begin() + static_cast<std::ptrdiff_t>(lo), x.begin() + static_cast<std::ptrdiff_t>(t) + 1);
            CHECK(got[static_cast<Eigen::Index>(t)] >= wmin - 1e-12);
            CHECK(got[static_cast<Eigen::Index>(t)] <= wmax + 1e-12);
        }
    }
}

TEST_CASE("moving median examples") {
    VectorXd c = VectorXd::Constant(9, 4.5);
    for (Eigen::Index t = 0; t < 9; ++t) CHECK(moving_median(c, t, 5) == 4.5);
    VectorXd spike(3);
    spike << 1, 100, 2;
    CHECK(moving_median(spike, 1, 2) == 2.0);
    // Even count at the left edge: window [0, 2] of {1, 100, 2, 5}, n = 4 -> {1, 100, 2}.
    VectorXd even(4);
    even << 1, 100, 2, 5;
    CHECK(moving_median(even, 0, 4) == 2.0);
    // Full even window at t = 1: [0, 3] -> {1, 2, 5, 100} -> 3.5.
    CHECK(moving_median(even, 1, 4) == 3.5);
    CHECK_THROWS_AS(moving_median(even, 4, 4), Error);
}

TEST_CASE("moving median matches the sort oracle") {
    std::mt19937_64 rng(8);
    for (int n_avg : {1, 2, 3, 24, 25}) {
        const auto x = testing::random_series(500, 900 + static_cast<std::uint64_t>(n_avg));
        const VectorXd xe = to_eigen(x);
        std::uniform_int_distribution<std::size_t> pick(0, x.size() - 1);
        for (int i = 0; i < 100; ++i) {
            const std::size_t t = i < 3 ? static_cast<std::size_t>(i) : pick(rng);
            CHECK(moving_median(xe, static_cast<Eigen::Index>(t), n_avg) == oracle::moving_median(x, t, n_avg));
        }
    }
}

TEST_CASE("t_start detection") {
    VectorXd a(5);
    a << 3, 3, 0, 0, 0;
    REQUIRE(find_t_start(a, 0.1).has_value());
    CHECK(*find_t_start(a, 0.1) == 2);
    VectorXd b(5);
    b << 3, 3, 0, 0, 3;
    CHECK_FALSE(find_t_start(b, 0.1).has_value());
    VectorXd z = VectorXd::Zero(4);
    CHECK(*find_t_start(z, 0.1) == 0);
}

TEST_CASE("tail of a rise-plateau-decay-zeros series is the decay segment") {
    // Slowly rising plateau so that the backward walk stops at its end.
    std::vector<double> c;
    for (int i = 0; i < 10; ++i) c.push_back(3.0 * i);
    for (int i = 0; i < 100; ++i) c.push_back(27.0 + 0.05 * i);
    const int decay_start = static_cast<int>(c.size());
    const double top = c.back();
    for (int i = 0; i < 60; ++i) c.push_back(top * (1.0 - (i + 1) / 60.0));
    const int zero_start = static_cast<int>(c.size()) - 1;  // last decay sample is exactly 0
    for (int i = 0; i < 60; ++i) c.push_back(0.0);
    const ChargingSession s = make_session(c, std::vector<double>(c.size(), 32.0));

    const TailParams params;
    const auto tail = extract_tail(s, params);
    REQUIRE(tail.has_value());
    CHECK(std::abs(tail->begin() - decay_start) <= params.t_max);
    CHECK(tail->t_start >= zero_start);
    CHECK(tail->t_start <= zero_start + params.n_avg);
    CHECK(tail->current.size() == tail->length + 1);
    CHECK(tail->pilot.size() == tail->length + 1);
}

TEST_CASE("no trailing zeros means no tail") {
    const ChargingSession s = make_session(std::vector<double>(300, 30.0), std::vector<double>(300, 32.0));
    CHECK_FALSE(extract_tail(s, TailParams{}).has_value());
}

TEST_CASE("all-zero input has no tail") {
    const ChargingSession s = make_session(std::vector<double>(100, 0.0), std::vector<double>(100, 32.0));
    CHECK_FALSE(extract_tail(s, TailParams{}).has_value());
}

TEST_CASE("short dips inside the decay are absorbed") {
    std::vector<double> c;
    for (int i = 0; i < 10; ++i) c.push_back(3.0 * (i + 1));
    const int decay_start = static_cast<int>(c.size());
    for (int i = 0; i < 50; ++i) {
        double v = 30.0 - 0.4 * i;
        if (i >= 20 && i < 23) v -= 3.0;  // 3-sample dip
        c.push_back(v);
    }
    for (int i = 0; i < 30; ++i) c.push_back(0.0);
    const ChargingSession s = make_session(c, std::vector<double>(c.size(), 32.0));

    TailParams p;
    p.n_avg = 1;
    p.min_tail_len = 5;
    const auto tail = extract_tail(s, p);
    REQUIRE(tail.has_value());
    CHECK(tail->begin() <= decay_start);

    // A one-sample tolerance stops at the dip instead.
    p.t_max = 1;
    const auto cut = extract_tail(s, p);
    REQUIRE(cut.has_value());
    CHECK(cut->begin() > decay_start + 20);
}

TEST_CASE("tail parameters are validated") {
    const ChargingSession s = make_session(testing::cc_cv_current(), std::vector<double>(280, 32.0));
    TailParams p;
    p.n_avg = 0;
    CHECK_THROWS_AS(extract_tail(s, p), Error);
    p = {};
    p.epsilon = 0.0;
    CHECK_THROWS_AS(extract_tail(s, p), Error);
    p = {};
    p.t_max = 0;
    CHECK_THROWS_AS(extract_tail(s, p), Error);
    p = {};
    p.zero_threshold = -1.0;
    CHECK_THROWS_AS(extract_tail(s, p), Error);
    p = {};
    p.min_tail_len = 0;
    CHECK_THROWS_AS(extract_tail(s, p), Error);
}

TEST_CASE("delta of constant series") {
    const ChargingSession s = make_session(std::vector<double>(60, 30.0), std::vector<double>(60, 32.0));
    const DeltaSeries d = compute_delta(s, 40, 25);
    REQUIRE(d.values.size() == 40);
    CHECK((d.values.array() == 2.0).all());

    std::vector<double> spiky(60, 30.0);
    spiky[17] = 80.0;
    const DeltaSeries d2 = compute_delta(make_session(spiky, std::vector<double>(60, 32.0)), 40, 25);
    CHECK((d2.values.array() == 2.0).all());

    CHECK_THROWS_AS(compute_delta(s, 0, 25), Error);
}

TEST_CASE("tail and delta partition [0, t_start]") {
    const SyntheticFleet sf = generate_fleet(4, 10, 1.0, 21);
    const TailParams params;
    int checked = 0;
    for (const ChargingSession* s : sf.fleet.sessions()) {
        const auto tail = extract_tail(*s, params);
        if (!tail || tail->begin() < 1) continue;
        const DeltaSeries d = compute_delta(*s, tail->begin(), params.n_avg);
        CHECK(d.values.size() == tail->begin());
        CHECK(tail->begin() + tail->length == tail->t_start);
        CHECK(tail->current.size() == tail->length + 1);
        CHECK(tail->current.allFinite());
        CHECK((tail->current.array() >= 0.0).all());
        CHECK(d.values.allFinite());
        ++checked;
    }
    CHECK(checked == 40);
}

TEST_CASE("extract_tail agrees with the literal oracle on synthetic sessions") {
    FleetSpec spec;
    spec.n_evs = 10;
    spec.sessions_per_ev = 20;
    spec.seed = 1234;
    spec.untailed_fraction = 0.15;
    const SyntheticFleet sf = generate_fleet(spec);
    const TailParams p;
    int agree = 0, total = 0;
    for (const ChargingSession* s : sf.fleet.sessions()) {
        const std::vector<double> c(s->current.values.data(), s->current.values.data() + s->current.size());
        const auto ref = oracle::literal_tail_walk(c, p.n_avg, p.epsilon, p.t_max, p.zero_threshold, p.min_tail_len);
        const auto got = extract_tail(*s, p);
        ++total;
        if (ref.has_value() == got.has_value() && (!ref || (ref->t_start == got->t_start && ref->s == got->length))) {
            ++agree;
        }
    }
    CHECK(total == 200);
    CHECK(agree == total);
}

TEST_CASE("delta mean recovers the generator offset") {
    EVSignature sig;
    sig.noise_sigma = 0.1;
    sig.ripple_amp = 0.8;
    ScheduleSpec sched;
    sched.levels = {24.0};  // pilot below i_max, so the shortfall is d alone
    for (double d : {0.3, 1.0, 1.7}) {
        sig.delta_offset = d;
        const GeneratedSession g = generate_session(sig, sched, 0.2, 10.0, static_cast<std::uint64_t>(d * 100));
        const auto tail = extract_tail(g.session, TailParams{});
        REQUIRE(tail.has_value());
        const DeltaSeries z = compute_delta(g.session, tail->begin(), 25);
        CHECK(std::abs(z.values.mean() - d) <= 0.05);
    }
}
