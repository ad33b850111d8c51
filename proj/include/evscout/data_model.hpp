#pragma once

#include "evscout/common.hpp"

#include <chrono>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace evscout {

struct TailParams;

using Instant = std::chrono::sys_seconds;

/// Parses ISO-8601 UTC ("2021-06-18T10:00:00Z", optional fractional seconds,
/// "Z" or "+00:00"), a bare date ("2021-06-18") or RFC 1123
/// ("Fri, 18 Jun 2021 10:00:00 GMT"). Throws Error{"bad_time"}.
Instant parse_instant(std::string_view text);
std::string format_instant(Instant t);

/// Sampled signal; timestamps are seconds since session start.
struct TimeSeries {
    VectorXd t;
    VectorXd values;
    double nominal_period = 0.0;  // metadata only, never used for resampling

    Eigen::Index size() const noexcept { return values.size(); }
    friend bool operator==(const TimeSeries& a, const TimeSeries& b) {
        return same_values(a.t, b.t) && same_values(a.values, b.values) &&
               a.nominal_period == b.nominal_period;
    }
};

struct ChargingSession {
    std::string session_id;
    std::string ev_id;
    Instant connection_time{};
    Instant disconnection_time{};
    double kwh = 0.0;
    TimeSeries current;
    TimeSeries pilot;

    double duration_seconds() const noexcept {
        return static_cast<double>((disconnection_time - connection_time).count());
    }
    friend bool operator==(const ChargingSession&, const ChargingSession&) = default;
};

/// Returns the reason code of the first violated session invariant, if any.
std::optional<std::string> check_session(const ChargingSession& s);

enum class Provenance { real, synthetic };

std::string_view to_string(Provenance p) noexcept;
Provenance provenance_from_string(std::string_view s);

struct Fleet {
    std::map<std::string, std::vector<ChargingSession>> by_ev;
    Provenance provenance = Provenance::real;
    std::optional<Instant> cutoff;

    void add(ChargingSession s);
    std::size_t session_count() const noexcept;
    std::size_t ev_count() const noexcept { return by_ev.size(); }
    /// Sessions in (ev_id, connection_time, session_id) order.
    std::vector<const ChargingSession*> sessions() const;

    friend bool operator==(const Fleet&, const Fleet&) = default;
};

struct IngestReport {
    std::size_t accepted = 0;
    std::size_t skipped = 0;
    std::map<std::string, std::size_t> reasons;

    void skip(const std::string& reason) {
        ++skipped;
        ++reasons[reason];
    }
};

/// Converts one canonical JSON record to a session. Accepts a shared `t`
/// array or separate `t_current` / `t_pilot` arrays; in the latter case the
/// two series are aligned on their common timestamps.
/// Throws Error with the skip reason as code.
ChargingSession session_from_record(const nlohmann::json& record);
nlohmann::json session_to_record(const ChargingSession& s);

/// Reads a line-delimited canonical session file. A leading fleet header line
/// is honoured (and version-checked) when present. Unreadable file -> Error.
Fleet ingest_canonical(const std::filesystem::path& path, IngestReport* report = nullptr);
Fleet ingest_canonical(std::istream& in, IngestReport* report = nullptr);

/// Maps an ACN-Data session document (either {"_items": [...]} or a bare
/// array) to canonical records. Sessions without a user id are dropped.
std::vector<nlohmann::json> adapt_acn_payload(const nlohmann::json& raw,
                                              IngestReport* report = nullptr);

/// Builds a fleet from ACN records, keeping sessions connected strictly before
/// `cutoff` when given.
Fleet fleet_from_acn(const nlohmann::json& raw, std::optional<Instant> cutoff,
                     IngestReport* report = nullptr);

/// Keeps EVs with at least `min_tailed_sessions` sessions that yield a tail
/// and a constant-current phase; drops their tail-less sessions.
Fleet filter_eligible(const Fleet& fleet, std::size_t min_tailed_sessions,
                      const TailParams& params);

inline constexpr int kFleetFormatVersion = 1;

void persist(const Fleet& fleet, const std::filesystem::path& path);
void persist(const Fleet& fleet, std::ostream& out);
Fleet load_fleet(const std::filesystem::path& path);
Fleet load_fleet(std::istream& in);

/// Intersects two strictly increasing timestamp arrays, returning index
/// pairs (i into a, j into b) of equal timestamps.
std::vector<std::pair<Eigen::Index, Eigen::Index>> intersect_timestamps(
    const VectorXd& a, const VectorXd& b);

}  // namespace evscout
