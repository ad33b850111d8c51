#pragma once

#include "evscout/common.hpp"
#include "evscout/data_model.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace evscout {

/// Per-EV charging behaviour. Times are in samples.
struct EVSignature {
    double i_max = 28.0;         // battery-side current limit, A
    double soc_switch = 0.7;     // CC -> CV switch point
    double tau = 60.0;           // CV decay constant
    double delta_offset = 1.0;   // shortfall below min(pilot, i_max), A
    double ripple_amp = 0.8;     // A
    double ripple_period = 60.0;
    double noise_sigma = 0.08;   // A
    double capacity = 40.0;      // kWh

    /// Throws Error{"bad_params"}.
    void validate() const;
};

/// Pilot schedule of one session.
struct ScheduleSpec {
    std::vector<double> levels{32.0};
    std::vector<int> change_points;  // sample index where levels[i + 1] takes over
    int max_samples = 20000;         // the EV disconnects here at the latest
    double idle_probability = 0.0;   // per CC sample, chance that an idle gap starts
    int idle_length = 6;
    double spike_probability = 0.0;  // per CC sample
    double spike_magnitude = 0.0;    // A, added to the current
    int trailing_zeros_min = 50;
    int trailing_zeros_max = 200;

    void validate() const;
    double level_at(int k) const;
};

inline constexpr double kChargeVoltage = 240.0;
inline constexpr double kCvCutoff = 0.2;

struct SessionTruth {
    std::string session_id;
    std::string ev_id;
    bool tailed = false;                  // charge reached steady zero before disconnection
    std::optional<Eigen::Index> switch_index;
    std::optional<Eigen::Index> zero_onset;
    double delta_offset = 0.0;
    double c_switch = 0.0;                // current at the CC -> CV switch, noise-free
};

struct GeneratedSession {
    ChargingSession session;
    SessionTruth truth;
    std::vector<double> soc;  // after each sample
};

/// One CC/CV charging session. CC samples are
///   max(0, min(pilot, i_max) - d + a sin(2 pi k / P) + N(0, sigma)) (+ spike);
/// once the integrated state of charge reaches soc_switch the current decays
/// as c_sw exp(-(k - k_sw) / tau) + noise until the noise-free part drops
/// below kCvCutoff, then stays exactly zero until disconnection.
GeneratedSession generate_session(const EVSignature& sig, const ScheduleSpec& sched, double soc0, double period,
                                  std::uint64_t seed, const std::string& ev_id = "ev000",
                                  const std::string& session_id = "ev000-s0000", Instant connection = {});

struct FleetSpec {
    int n_evs = 20;
    int sessions_per_ev = 30;
    double spread = 1.0;  // 0 gives identical EVs
    std::uint64_t seed = 0;
    double period = 10.0;
    double soc0_min = 0.1;
    double soc0_max = 0.4;
    double pilot = 32.0;
    double spike_probability = 0.002;
    double spike_magnitude = 4.0;
    /// Share of sessions cut off before the CV phase.
    double untailed_fraction = 0.0;
    /// Relative change of i_max and tau from an EV's first to its last session.
    double drift = 0.0;
    /// Per-session variation of i_max, soc_switch, tau, d and ripple_amp,
    /// as a standard deviation in half-range units.
    double session_jitter = 0.2;
    /// Floor on the normalized pairwise signature distance, scaled by spread.
    double min_distance = 0.5;

    void validate() const;
};

struct SyntheticFleet {
    Fleet fleet;
    std::vector<std::string> ev_ids;
    std::vector<EVSignature> signatures;
    std::vector<SessionTruth> truth;
};

/// Signature center and half-range per parameter; spread s maps u in [-1, 1]
/// to center + s * u * half_range.
EVSignature signature_center();
EVSignature signature_half_range();

/// Euclidean distance between two signatures in half-range units.
double signature_distance(const EVSignature& a, const EVSignature& b);

/// Draws signatures by rejection until every pair is at least
/// spread * min_distance apart.
std::vector<EVSignature> draw_signatures(int n, double spread, double min_distance, std::uint64_t seed);

SyntheticFleet generate_fleet(const FleetSpec& spec);
SyntheticFleet generate_fleet(int n_evs, int sessions_per_ev, double spread, std::uint64_t seed);

/// Ground-truth side table: signatures per EV and onsets per session (JSON).
void write_truth(const SyntheticFleet& fleet, const std::filesystem::path& path);

}  // namespace evscout
