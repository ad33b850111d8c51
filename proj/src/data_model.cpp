#include "evscout/data_model.hpp"

#include "evscout/extraction.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace evscout {

namespace {

using nlohmann::json;
using namespace std::chrono;

constexpr std::string_view kFleetFormat = "evscout-fleet";

Instant make_instant(int y, unsigned mo, unsigned d, int hh, int mm, int ss) {
    const year_month_day ymd{year{y}, month{mo}, day{d}};
    if (!ymd.ok() || hh < 0 || hh > 23 || mm < 0 || mm > 59 || ss < 0 || ss > 60) {
        throw Error("bad_time", "invalid calendar time");
    }
    return sys_days{ymd} + hours{hh} + minutes{mm} + seconds{ss};
}

int month_from_abbrev(std::string_view m) {
    static constexpr std::array<std::string_view, 12> names = {
        "Jan", "Feb", "Mar", "Apr", "May", "Jun", "Jul", "Aug", "Sep", "Oct", "Nov", "Dec"};
    for (std::size_t i = 0; i < names.size(); ++i) {
        if (names[i] == m) return static_cast<int>(i) + 1;
    }
    return 0;
}

VectorXd to_vector(const json& arr, const char* field) {
    if (!arr.is_array()) throw Error("missing_samples", std::string("field '") + field + "' is not an array");
    VectorXd v(static_cast<Eigen::Index>(arr.size()));
    for (std::size_t i = 0; i < arr.size(); ++i) {
        if (!arr[i].is_number()) throw Error("nonfinite_sample", std::string("non-numeric entry in ") + field);
        v[static_cast<Eigen::Index>(i)] = arr[i].get<double>();
    }
    return v;
}

json to_array(const VectorXd& v) {
    json arr = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
    return arr;
}

const json& require(const json& record, const char* field, const char* reason) {
    auto it = record.find(field);
    if (it == record.end() || it->is_null()) {
        throw Error(reason, std::string("record lacks '") + field + "'");
    }
    return *it;
}

std::string require_string(const json& record, const char* field, const char* reason) {
    const json& v = require(record, field, reason);
    std::string s = v.is_string() ? v.get<std::string>() : v.dump();
    if (s.empty()) throw Error(reason, std::string("empty '") + field + "'");
    return s;
}

Instant instant_field(const json& record, const char* field) {
    const json& v = require(record, field, "missing_time");
    if (v.is_number()) return Instant{seconds{static_cast<std::int64_t>(std::floor(v.get<double>()))}};
    if (!v.is_string()) throw Error("bad_time", std::string("'") + field + "' is not a time");
    return parse_instant(v.get<std::string>());
}

json fleet_header(const Fleet& fleet) {
    json h;
    h["format"] = kFleetFormat;
    h["version"] = kFleetFormatVersion;
    h["provenance"] = to_string(fleet.provenance);
    h["cutoff"] = fleet.cutoff ? json(format_instant(*fleet.cutoff)) : json(nullptr);
    return h;
}

void apply_fleet_header(const json& h, Fleet& fleet) {
    if (h.value("format", std::string{}) != kFleetFormat) {
        throw VersionMismatch("not an evscout fleet file");
    }
    const int version = h.value("version", -1);
    if (version != kFleetFormatVersion) {
        throw VersionMismatch("fleet file version " + std::to_string(version) + ", expected " +
                              std::to_string(kFleetFormatVersion));
    }
    fleet.provenance = provenance_from_string(h.value("provenance", std::string{"real"}));
    if (h.contains("cutoff") && h["cutoff"].is_string()) {
        fleet.cutoff = parse_instant(h["cutoff"].get<std::string>());
    }
}

bool is_header(const json& j) { return j.is_object() && j.contains("format"); }

/// ACN time series block: {"timestamps": [...], "<key>": [...]}.
std::pair<VectorXd, VectorXd> acn_series(const json& doc, const char* block, const char* key,
                                         Instant origin) {
    auto it = doc.find(block);
    if (it == doc.end() || !it->is_object()) {
        throw Error("missing_samples", std::string("session lacks '") + block + "'");
    }
    const json& ts = (*it)["timestamps"];
    const json& vals = (*it)[key];
    if (!ts.is_array() || !vals.is_array() || ts.size() != vals.size()) {
        throw Error("missing_samples", std::string("malformed '") + block + "'");
    }
    VectorXd t(static_cast<Eigen::Index>(ts.size()));
    VectorXd v(static_cast<Eigen::Index>(vals.size()));
    for (std::size_t i = 0; i < ts.size(); ++i) {
        const auto k = static_cast<Eigen::Index>(i);
        if (ts[i].is_number()) {
            t[k] = ts[i].get<double>() - static_cast<double>(origin.time_since_epoch().count());
        } else if (ts[i].is_string()) {
            t[k] = static_cast<double>((parse_instant(ts[i].get<std::string>()) - origin).count());
        } else {
            throw Error("bad_time", "timestamp entry is neither number nor string");
        }
        if (!vals[i].is_number()) throw Error("nonfinite_sample", std::string("null sample in ") + block);
        v[k] = vals[i].get<double>();
    }
    return {std::move(t), std::move(v)};
}

}  // namespace

Instant parse_instant(std::string_view text) {
    const std::string s(text);
    int y = 0, mo = 0, d = 0, hh = 0, mm = 0, ss = 0;
    char mon[4] = {};
    char tail[16] = {};
    int consumed = 0;
    if (std::sscanf(s.c_str(), "%d-%d-%dT%d:%d:%d%n", &y, &mo, &d, &hh, &mm, &ss, &consumed) == 6) {
        std::string_view rest = std::string_view(s).substr(static_cast<std::size_t>(consumed));
        if (!rest.empty() && rest.front() == '.') {
            std::size_t i = 1;
            while (i < rest.size() && std::isdigit(static_cast<unsigned char>(rest[i]))) ++i;
            rest.remove_prefix(i);
        }
        if (!(rest.empty() || rest == "Z" || rest == "+00:00" || rest == "+0000")) {
            throw Error("bad_time", "non-UTC offset in '" + s + "'");
        }
        return make_instant(y, static_cast<unsigned>(mo), static_cast<unsigned>(d), hh, mm, ss);
    }
    if (std::sscanf(s.c_str(), "%d-%d-%d%n", &y, &mo, &d, &consumed) == 3 &&
        static_cast<std::size_t>(consumed) == s.size()) {
        return make_instant(y, static_cast<unsigned>(mo), static_cast<unsigned>(d), 0, 0, 0);
    }
    if (std::sscanf(s.c_str(), "%*3s, %d %3s %d %d:%d:%d %15s", &d, mon, &y, &hh, &mm, &ss, tail) >= 6) {
        const int m = month_from_abbrev(mon);
        if (m == 0 || !(tail[0] == 0 || std::strcmp(tail, "GMT") == 0 || std::strcmp(tail, "UTC") == 0)) {
            throw Error("bad_time", "unparseable time '" + s + "'");
        }
        return make_instant(y, static_cast<unsigned>(m), static_cast<unsigned>(d), hh, mm, ss);
    }
    throw Error("bad_time", "unparseable time '" + s + "'");
}

std::string format_instant(Instant t) {
    const auto day_point = floor<days>(t);
    const year_month_day ymd{day_point};
    const hh_mm_ss hms{t - day_point};
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02dZ", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                  static_cast<int>(hms.hours().count()), static_cast<int>(hms.minutes().count()),
                  static_cast<int>(hms.seconds().count()));
    return buf;
}

std::optional<std::string> check_session(const ChargingSession& s) {
    if (s.ev_id.empty()) return "missing_ev_id";
    if (s.session_id.empty()) return "missing_session_id";
    if (!(s.connection_time < s.disconnection_time)) return "bad_interval";
    if (!std::isfinite(s.kwh) || s.kwh < 0.0) return "bad_kwh";
    for (const TimeSeries* ts : {&s.current, &s.pilot}) {
        if (ts->values.size() < 1) return "empty_series";
        if (ts->t.size() != ts->values.size()) return "length_mismatch";
        if (!ts->values.allFinite() || !ts->t.allFinite()) return "nonfinite_sample";
        if ((ts->values.array() < 0.0).any()) return "negative_sample";
        for (Eigen::Index i = 1; i < ts->t.size(); ++i) {
            if (!(ts->t[i] > ts->t[i - 1])) return "non_monotonic_time";
        }
    }
    if (!same_values(s.current.t, s.pilot.t)) return "unaligned_series";
    return std::nullopt;
}

std::string_view to_string(Provenance p) noexcept {
    return p == Provenance::synthetic ? "synthetic" : "real";
}

Provenance provenance_from_string(std::string_view s) {
    if (s == "real") return Provenance::real;
    if (s == "synthetic") return Provenance::synthetic;
    throw Error("bad_header", "unknown provenance '" + std::string(s) + "'");
}

void Fleet::add(ChargingSession s) {
    auto& group = by_ev[s.ev_id];
    const auto pos = std::upper_bound(group.begin(), group.end(), s, [](const auto& a, const auto& b) {
        if (a.connection_time != b.connection_time) return a.connection_time < b.connection_time;
        return a.session_id < b.session_id;
    });
    group.insert(pos, std::move(s));
}

std::size_t Fleet::session_count() const noexcept {
    std::size_t n = 0;
    for (const auto& [ev, group] : by_ev) n += group.size();
    return n;
}

std::vector<const ChargingSession*> Fleet::sessions() const {
    std::vector<const ChargingSession*> out;
    out.reserve(session_count());
    for (const auto& [ev, group] : by_ev) {
        for (const auto& s : group) out.push_back(&s);
    }
    return out;
}

std::vector<std::pair<Eigen::Index, Eigen::Index>> intersect_timestamps(const VectorXd& a,
                                                                        const VectorXd& b) {
    std::vector<std::pair<Eigen::Index, Eigen::Index>> out;
    Eigen::Index i = 0, j = 0;
    while (i < a.size() && j < b.size()) {
        if (a[i] < b[j]) {
            ++i;
        } else if (b[j] < a[i]) {
            ++j;
        } else {
            out.emplace_back(i++, j++);
        }
    }
    return out;
}

ChargingSession session_from_record(const json& record) {
    if (!record.is_object()) throw Error("malformed_record", "record is not an object");
    ChargingSession s;
    s.ev_id = require_string(record, "ev_id", "missing_ev_id");
    s.session_id = require_string(record, "session_id", "missing_session_id");
    s.connection_time = instant_field(record, "connection_time");
    s.disconnection_time = instant_field(record, "disconnection_time");
    const json& kwh = require(record, "kwh", "bad_kwh");
    if (!kwh.is_number()) throw Error("bad_kwh", "kwh is not a number");
    s.kwh = kwh.get<double>();

    VectorXd current = to_vector(require(record, "current_a", "missing_samples"), "current_a");
    VectorXd pilot = to_vector(require(record, "pilot_a", "missing_samples"), "pilot_a");
    VectorXd t_cur, t_pil;
    if (record.contains("t")) {
        t_cur = t_pil = to_vector(record["t"], "t");
    } else {
        t_cur = to_vector(require(record, "t_current", "missing_samples"), "t_current");
        t_pil = to_vector(require(record, "t_pilot", "missing_samples"), "t_pilot");
    }
    if (t_cur.size() != current.size() || t_pil.size() != pilot.size()) {
        throw Error("length_mismatch", "timestamp and sample arrays differ in length");
    }
    for (const VectorXd* t : {&t_cur, &t_pil}) {
        for (Eigen::Index i = 1; i < t->size(); ++i) {
            if (!((*t)[i] > (*t)[i - 1])) throw Error("non_monotonic_time", "timestamps not increasing");
        }
    }
    const auto pairs = intersect_timestamps(t_cur, t_pil);
    const auto n = static_cast<Eigen::Index>(pairs.size());
    s.current.t.resize(n);
    s.current.values.resize(n);
    s.pilot.values.resize(n);
    for (Eigen::Index k = 0; k < n; ++k) {
        s.current.t[k] = t_cur[pairs[static_cast<std::size_t>(k)].first];
        s.current.values[k] = current[pairs[static_cast<std::size_t>(k)].first];
        s.pilot.values[k] = pilot[pairs[static_cast<std::size_t>(k)].second];
    }
    s.pilot.t = s.current.t;
    const double period = record.value("nominal_period", 0.0);
    s.current.nominal_period = s.pilot.nominal_period = period;

    if (auto reason = check_session(s)) throw Error(*reason, "session '" + s.session_id + "' rejected");
    return s;
}

json session_to_record(const ChargingSession& s) {
    json r;
    r["session_id"] = s.session_id;
    r["ev_id"] = s.ev_id;
    r["connection_time"] = format_instant(s.connection_time);
    r["disconnection_time"] = format_instant(s.disconnection_time);
    r["kwh"] = s.kwh;
    r["nominal_period"] = s.current.nominal_period;
    r["t"] = to_array(s.current.t);
    r["current_a"] = to_array(s.current.values);
    r["pilot_a"] = to_array(s.pilot.values);
    return r;
}

Fleet ingest_canonical(std::istream& in, IngestReport* report) {
    IngestReport local;
    IngestReport& rep = report ? *report : local;
    Fleet fleet;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded()) {
            rep.skip("malformed_json");
            first = false;
            continue;
        }
        if (first && is_header(j)) {
            apply_fleet_header(j, fleet);
            first = false;
            continue;
        }
        first = false;
        try {
            fleet.add(session_from_record(j));
            ++rep.accepted;
        } catch (const Error& e) {
            rep.skip(e.code());
        }
    }
    return fleet;
}

Fleet ingest_canonical(const std::filesystem::path& path, IngestReport* report) {
    std::ifstream in(path);
    if (!in) throw Error("unreadable_file", "cannot open '" + path.string() + "'");
    return ingest_canonical(in, report);
}

std::vector<json> adapt_acn_payload(const json& raw, IngestReport* report) {
    IngestReport local;
    IngestReport& rep = report ? *report : local;
    const json* items = &raw;
    if (raw.is_object() && raw.contains("_items")) items = &raw["_items"];
    if (!items->is_array()) throw Error("malformed_payload", "ACN payload has no session array");

    std::vector<json> out;
    for (const json& doc : *items) {
        try {
            if (!doc.is_object()) throw Error("malformed_record", "session document is not an object");
            auto uid = doc.find("userID");
            if (uid == doc.end() || uid->is_null() ||
                (uid->is_string() && uid->get<std::string>().empty())) {
                throw Error("missing_ev_id", "anonymous session");
            }
            const Instant conn = instant_field(doc, "connectionTime");
            auto [t_cur, current] = acn_series(doc, "chargingCurrent", "current", conn);
            auto [t_pil, pilot] = acn_series(doc, "pilotSignal", "pilot", conn);

            json r;
            r["session_id"] = require_string(doc, "sessionID", "missing_session_id");
            r["ev_id"] = uid->is_string() ? uid->get<std::string>() : uid->dump();
            r["connection_time"] = format_instant(conn);
            r["disconnection_time"] = format_instant(instant_field(doc, "disconnectTime"));
            r["kwh"] = require(doc, "kWhDelivered", "bad_kwh");
            r["t_current"] = to_array(t_cur);
            r["current_a"] = to_array(current);
            r["t_pilot"] = to_array(t_pil);
            r["pilot_a"] = to_array(pilot);
            out.push_back(std::move(r));
        } catch (const Error& e) {
            rep.skip(e.code());
        }
    }
    return out;
}

Fleet fleet_from_acn(const json& raw, std::optional<Instant> cutoff, IngestReport* report) {
    IngestReport local;
    IngestReport& rep = report ? *report : local;
    Fleet fleet;
    fleet.provenance = Provenance::real;
    fleet.cutoff = cutoff;
    for (const json& r : adapt_acn_payload(raw, &rep)) {
        try {
            ChargingSession s = session_from_record(r);
            if (cutoff && !(s.connection_time < *cutoff)) {
                rep.skip("after_cutoff");
                continue;
            }
            fleet.add(std::move(s));
            ++rep.accepted;
        } catch (const Error& e) {
            rep.skip(e.code());
        }
    }
    return fleet;
}

Fleet filter_eligible(const Fleet& fleet, std::size_t min_tailed_sessions, const TailParams& params) {
    Fleet out;
    out.provenance = fleet.provenance;
    out.cutoff = fleet.cutoff;
    for (const auto& [ev, group] : fleet.by_ev) {
        std::vector<ChargingSession> kept;
        for (const auto& s : group) {
            const auto tail = extract_tail(s, params);
            if (tail && tail->begin() >= 1) kept.push_back(s);
        }
        if (!kept.empty() && kept.size() >= min_tailed_sessions) out.by_ev.emplace(ev, std::move(kept));
    }
    return out;
}

void persist(const Fleet& fleet, std::ostream& out) {
    out << fleet_header(fleet).dump() << '\n';
    for (const ChargingSession* s : fleet.sessions()) out << session_to_record(*s).dump() << '\n';
}

void persist(const Fleet& fleet, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw Error("unwritable_file", "cannot write '" + path.string() + "'");
    persist(fleet, out);
}

Fleet load_fleet(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw VersionMismatch("fleet file has no header");
    const json h = json::parse(line, nullptr, false);
    if (h.is_discarded() || !is_header(h)) throw VersionMismatch("fleet file has no header");
    Fleet fleet;
    apply_fleet_header(h, fleet);
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const json j = json::parse(line, nullptr, false);
        if (j.is_discarded()) throw Error("malformed_record", "line " + std::to_string(lineno) + " is not JSON");
        fleet.add(session_from_record(j));
    }
    return fleet;
}

Fleet load_fleet(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("unreadable_file", "cannot open '" + path.string() + "'");
    return load_fleet(in);
}

}  // namespace evscout
