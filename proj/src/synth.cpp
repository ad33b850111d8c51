#include "evscout/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

#include <json.hpp>

namespace evscout {

namespace {

constexpr std::size_t kParams = 8;

std::array<double, kParams> as_array(const EVSignature& s) {
    return {s.i_max, s.soc_switch, s.tau, s.delta_offset, s.ripple_amp, s.ripple_period, s.noise_sigma, s.capacity};
}

EVSignature from_array(const std::array<double, kParams>& a) {
    return {a[0], a[1], a[2], a[3], a[4], a[5], a[6], a[7]};
}

std::string padded(int v, int width) {
    std::string s = std::to_string(v);
    return std::string(static_cast<std::size_t>(std::max(0, width - static_cast<int>(s.size()))), '0') + s;
}

nlohmann::json optional_index(const std::optional<Eigen::Index>& i) {
    return i ? nlohmann::json(*i) : nlohmann::json(nullptr);
}

}  // namespace

void EVSignature::validate() const {
    const bool ok = std::isfinite(i_max) && i_max > 0.0 && soc_switch >= 0.6 && soc_switch <= 0.8 && tau > 0.0 &&
                    delta_offset >= 0.0 && ripple_amp >= 0.0 && ripple_period > 0.0 && noise_sigma >= 0.0 &&
                    capacity > 0.0;
    if (!ok) throw Error("bad_params", "EV signature violates its invariants");
}

void ScheduleSpec::validate() const {
    if (levels.empty() || change_points.size() + 1 != levels.size()) {
        throw Error("bad_params", "schedule needs one more level than change points");
    }
    for (double l : levels) {
        if (!(l >= 0.0) || !std::isfinite(l)) throw Error("bad_params", "schedule levels must be >= 0");
    }
    for (std::size_t i = 0; i < change_points.size(); ++i) {
        if (change_points[i] < 0 || (i > 0 && change_points[i] <= change_points[i - 1])) {
            throw Error("bad_params", "schedule change points must be increasing");
        }
    }
    if (max_samples < 1 || idle_length < 1 || trailing_zeros_min < 0 || trailing_zeros_max < trailing_zeros_min ||
        idle_probability < 0.0 || idle_probability > 1.0 || spike_probability < 0.0 || spike_probability > 1.0) {
        throw Error("bad_params", "schedule has an out-of-range setting");
    }
}

double ScheduleSpec::level_at(int k) const {
    std::size_t i = 0;
    while (i < change_points.size() && k >= change_points[i]) ++i;
    return levels[i];
}

GeneratedSession generate_session(const EVSignature& sig, const ScheduleSpec& sched, double soc0, double period,
                                  std::uint64_t seed, const std::string& ev_id, const std::string& session_id,
                                  Instant connection) {
    sig.validate();
    sched.validate();
    if (!(soc0 >= 0.0 && soc0 < 1.0)) throw Error("bad_params", "soc0 must be in [0, 1)");
    if (!(period > 0.0)) throw Error("bad_params", "period must be > 0");

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    auto noise = [&] { return sig.noise_sigma > 0.0 ? sig.noise_sigma * gauss(rng) : 0.0; };
    const double kwh_per_amp_sample = kChargeVoltage * period / 3.6e6;

    GeneratedSession g;
    g.truth.ev_id = ev_id;
    g.truth.session_id = session_id;
    g.truth.delta_offset = sig.delta_offset;
    std::vector<double> cur, pil;
    double soc = soc0, kwh = 0.0;
    auto push = [&](double c, double p) {
        cur.push_back(c);
        pil.push_back(p);
        kwh += c * kwh_per_amp_sample;
        soc += c * kwh_per_amp_sample / sig.capacity;
        g.soc.push_back(soc);
    };

    // Constant-current phase.
    int k = 0, idle_left = 0;
    bool switched = soc >= sig.soc_switch;
    while (!switched && k < sched.max_samples) {
        double p = sched.level_at(k);
        if (idle_left > 0) {
            --idle_left;
            p = 0.0;
        } else if (sched.idle_probability > 0.0 && unit(rng) < sched.idle_probability) {
            idle_left = sched.idle_length - 1;
            p = 0.0;
        }
        double c = 0.0;
        if (p > 0.0) {
            const double ripple = sig.ripple_amp * std::sin(2.0 * std::numbers::pi * k / sig.ripple_period);
            c = std::max(0.0, std::min(p, sig.i_max) - sig.delta_offset + ripple + noise());
            if (sched.spike_probability > 0.0 && unit(rng) < sched.spike_probability) c += sched.spike_magnitude;
        }
        push(c, p);
        ++k;
        switched = soc >= sig.soc_switch;
    }

    bool complete = false;
    if (switched && k < sched.max_samples) {
        // Constant-voltage phase; the pilot holds its scheduled level.
        g.truth.switch_index = k;
        const double c_sw = std::max(0.0, std::min(sched.level_at(k), sig.i_max) - sig.delta_offset);
        g.truth.c_switch = c_sw;
        const int k_sw = k;
        while (k < sched.max_samples) {
            const double det = c_sw * std::exp(-(k - k_sw) / sig.tau);
            if (det < kCvCutoff) {
                complete = true;
                break;
            }
            push(std::max(0.0, det + noise()), sched.level_at(k));
            ++k;
        }
    }
    if (complete) {
        std::uniform_int_distribution<int> zeros(sched.trailing_zeros_min, sched.trailing_zeros_max);
        const int n_zero = std::min(zeros(rng), sched.max_samples - k);
        if (n_zero > 0) {
            g.truth.zero_onset = k;
            g.truth.tailed = true;
        }
        for (int z = 0; z < n_zero; ++z, ++k) push(0.0, sched.level_at(k));
    }
    if (cur.empty()) push(0.0, sched.level_at(0));

    const auto n = static_cast<Eigen::Index>(cur.size());
    ChargingSession& s = g.session;
    s.session_id = session_id;
    s.ev_id = ev_id;
    s.connection_time = connection;
    s.disconnection_time = connection + std::chrono::seconds(static_cast<long long>(std::ceil(n * period)));
    s.kwh = kwh;
    s.current.t.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) s.current.t[i] = static_cast<double>(i) * period;
    s.current.values = Eigen::Map<const VectorXd>(cur.data(), n);
    s.current.nominal_period = period;
    s.pilot.t = s.current.t;
    s.pilot.values = Eigen::Map<const VectorXd>(pil.data(), n);
    s.pilot.nominal_period = period;
    return g;
}

void FleetSpec::validate() const {
    const bool ok = n_evs >= 1 && sessions_per_ev >= 1 && spread >= 0.0 && spread <= 1.0 && period > 0.0 &&
                    soc0_min >= 0.0 && soc0_max < 1.0 && soc0_min <= soc0_max && pilot > 0.0 &&
                    untailed_fraction >= 0.0 && untailed_fraction <= 1.0 && min_distance >= 0.0 &&
                    spike_probability >= 0.0 && spike_probability <= 1.0 && drift > -1.0 && session_jitter >= 0.0;
    if (!ok) throw Error("bad_params", "fleet spec has an out-of-range setting");
}

EVSignature signature_center() { return {28.0, 0.7, 60.0, 1.0, 0.8, 60.0, 0.08, 40.0}; }
EVSignature signature_half_range() { return {4.0, 0.1, 30.0, 0.8, 0.4, 20.0, 0.06, 20.0}; }

double signature_distance(const EVSignature& a, const EVSignature& b) {
    const auto x = as_array(a), y = as_array(b), h = as_array(signature_half_range());
    double d2 = 0.0;
    for (std::size_t i = 0; i < kParams; ++i) d2 += ((x[i] - y[i]) / h[i]) * ((x[i] - y[i]) / h[i]);
    return std::sqrt(d2);
}

std::vector<EVSignature> draw_signatures(int n, double spread, double min_distance, std::uint64_t seed) {
    const auto c = as_array(signature_center()), h = as_array(signature_half_range());
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const double floor = spread * min_distance;
    std::vector<EVSignature> out;
    constexpr int kAttempts = 100000;
    for (int i = 0; i < n; ++i) {
        bool placed = false;
        for (int a = 0; a < kAttempts && !placed; ++a) {
            std::array<double, kParams> v{};
            for (std::size_t j = 0; j < kParams; ++j) v[j] = c[j] + spread * u(rng) * h[j];
            EVSignature cand = from_array(v);
            placed = true;
            for (const auto& o : out) {
                if (signature_distance(cand, o) < floor) {
                    placed = false;
                    break;
                }
            }
            if (placed) out.push_back(cand);
        }
        if (!placed) {
            throw Error("bad_params", "cannot place " + std::to_string(n) + " signatures " +
                                          std::to_string(floor) + " apart");
        }
    }
    return out;
}

SyntheticFleet generate_fleet(const FleetSpec& spec) {
    spec.validate();
    SyntheticFleet out;
    out.fleet.provenance = Provenance::synthetic;
    out.signatures = draw_signatures(spec.n_evs, spec.spread, spec.min_distance, derive_seed(spec.seed, 0x5167));
    const Instant start = parse_instant("2021-01-01T00:00:00Z");
    for (int e = 0; e < spec.n_evs; ++e) {
        const std::string ev = "ev" + padded(e, 3);
        out.ev_ids.push_back(ev);
        std::mt19937_64 rng(derive_seed(spec.seed, e, 0x7157));
        std::uniform_real_distribution<double> gap_hours(12.0, 60.0), unit(0.0, 1.0);
        std::uniform_real_distribution<double> soc0(spec.soc0_min, spec.soc0_max);
        std::uniform_int_distribution<int> short_len(50, 149);
        Instant t = start + std::chrono::minutes(7 * e);
        for (int s = 0; s < spec.sessions_per_ev; ++s) {
            t += std::chrono::seconds(static_cast<long long>(gap_hours(rng) * 3600.0));
            EVSignature sig = out.signatures[static_cast<std::size_t>(e)];
            const double f = spec.sessions_per_ev > 1 ? static_cast<double>(s) / (spec.sessions_per_ev - 1) : 0.0;
            sig.i_max *= 1.0 + spec.drift * f;
            sig.tau *= 1.0 + spec.drift * f;
            if (spec.session_jitter > 0.0) {
                std::mt19937_64 jr(derive_seed(spec.seed, e, s, 0x717));
                std::normal_distribution<double> j(0.0, spec.session_jitter);
                const EVSignature h = signature_half_range();
                sig.i_max = std::max(1.0, sig.i_max + h.i_max * j(jr));
                sig.soc_switch = std::clamp(sig.soc_switch + h.soc_switch * j(jr), 0.6, 0.8);
                sig.tau = std::max(1.0, sig.tau + h.tau * j(jr));
                sig.delta_offset = std::max(0.0, sig.delta_offset + h.delta_offset * j(jr));
                sig.ripple_amp = std::max(0.0, sig.ripple_amp + h.ripple_amp * j(jr));
            }
            ScheduleSpec sched;
            sched.levels = {spec.pilot};
            sched.spike_probability = spec.spike_probability;
            sched.spike_magnitude = spec.spike_magnitude;
            if (unit(rng) < spec.untailed_fraction) sched.max_samples = short_len(rng);
            const double s0 = soc0(rng);
            auto g = generate_session(sig, sched, s0, spec.period, derive_seed(spec.seed, e, s), ev,
                                      ev + "-s" + padded(s, 4), t);
            out.truth.push_back(g.truth);
            out.fleet.add(std::move(g.session));
        }
    }
    return out;
}

SyntheticFleet generate_fleet(int n_evs, int sessions_per_ev, double spread, std::uint64_t seed) {
    FleetSpec spec;
    spec.n_evs = n_evs;
    spec.sessions_per_ev = sessions_per_ev;
    spec.spread = spread;
    spec.seed = seed;
    return generate_fleet(spec);
}

void write_truth(const SyntheticFleet& fleet, const std::filesystem::path& path) {
    nlohmann::json sigs = nlohmann::json::array();
    for (std::size_t i = 0; i < fleet.signatures.size(); ++i) {
        const auto& s = fleet.signatures[i];
        sigs.push_back({{"ev_id", fleet.ev_ids[i]},
                        {"i_max", s.i_max},
                        {"soc_switch", s.soc_switch},
                        {"tau", s.tau},
                        {"delta_offset", s.delta_offset},
                        {"ripple_amp", s.ripple_amp},
                        {"ripple_period", s.ripple_period},
                        {"noise_sigma", s.noise_sigma},
                        {"capacity", s.capacity}});
    }
    nlohmann::json sessions = nlohmann::json::array();
    for (const auto& t : fleet.truth) {
        sessions.push_back({{"session_id", t.session_id},
                            {"ev_id", t.ev_id},
                            {"tailed", t.tailed},
                            {"switch_index", optional_index(t.switch_index)},
                            {"zero_onset", optional_index(t.zero_onset)},
                            {"delta_offset", t.delta_offset},
                            {"c_switch", t.c_switch}});
    }
    std::ofstream out(path);
    if (!out) throw Error("unwritable_file", "cannot write '" + path.string() + "'");
    out << nlohmann::json{{"format", "evscout-truth"}, {"version", 1}, {"signatures", sigs}, {"sessions", sessions}}
               .dump(1)
        << '\n';
}

}  // namespace evscout
