#pragma once

#include "evscout/data_model.hpp"
#include "evscout/evaluation.hpp"
#include "evscout/features.hpp"
#include "evscout/synth.hpp"

#include <cmath>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

namespace testing {

using namespace evscout;

inline ChargingSession make_session(const std::vector<double>& current, const std::vector<double>& pilot,
                                    const std::string& ev = "ev", const std::string& id = "s0",
                                    std::int64_t start = 1'600'000'000) {
    ChargingSession s;
    s.ev_id = ev;
    s.session_id = id;
    s.connection_time = Instant{std::chrono::seconds{start}};
    s.disconnection_time = s.connection_time + std::chrono::seconds{10 * static_cast<long long>(current.size()) + 10};
    s.kwh = 1.5;
    const auto n = static_cast<Eigen::Index>(current.size());
    s.current.t = VectorXd::LinSpaced(n, 0.0, 10.0 * static_cast<double>(n - 1));
    s.current.values = Eigen::Map<const VectorXd>(current.data(), n);
    s.pilot.t = s.current.t;
    s.pilot.values = Eigen::Map<const VectorXd>(pilot.data(), n);
    s.current.nominal_period = s.pilot.nominal_period = 10.0;
    return s;
}

inline std::vector<double> random_series(std::size_t n, std::uint64_t seed, double lo = -5.0, double hi = 5.0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(lo, hi);
    std::vector<double> x(n);
    for (double& v : x) v = u(rng);
    return x;
}

inline VectorXd to_eigen(const std::vector<double>& x) {
    return Eigen::Map<const VectorXd>(x.data(), static_cast<Eigen::Index>(x.size()));
}

/// Synthetic fleet taken through filtering, extraction and featurization.
struct Pipeline {
    SyntheticFleet synthetic;
    Fleet eligible;
    std::vector<TailRecord> tails;
    FeatureTable modern;
    FeatureTable legacy;
};

inline Pipeline build_pipeline(int n_evs, int sessions, double spread, std::uint64_t seed) {
    Pipeline p;
    p.synthetic = generate_fleet(n_evs, sessions, spread, seed);
    const TailParams params;
    p.eligible = filter_eligible(p.synthetic.fleet, 8, params);
    p.tails = extract_tails(p.eligible, params);
    p.modern = featurize_all(p.tails, false, params.min_tail_len);
    p.legacy = featurize_all(p.tails, true, params.min_tail_len);
    return p;
}

/// Fresh directory under the system temp path, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() / ("evscout-" + tag + "-" + std::to_string(rd()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

}  // namespace testing

namespace testing {

/// Rippled plateau at `level`, exponential decay over `decay` samples, then
/// zeros. Without ripple the backward walk never stops on the plateau.
inline std::vector<double> cc_cv_current(int plateau = 120, int decay = 80, int zeros = 80, double level = 30.0,
                                         double tau = 15.0, double ripple = 1.0) {
    std::vector<double> c;
    for (int i = 0; i < plateau; ++i) c.push_back(level + ripple * std::sin(2.0 * 3.14159265358979 * i / 60.0));
    for (int i = 0; i < decay; ++i) c.push_back(level * std::exp(-static_cast<double>(i) / tau));
    for (int i = 0; i < zeros; ++i) c.push_back(0.0);
    return c;
}

}  // namespace testing
