#include "evscout/features.hpp"

#include "text_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>

namespace evscout {

namespace {

using detail::csv_field;
using detail::format_double;
using detail::parse_double;
using detail::split_csv;

constexpr std::string_view kTailsFormat = "evscout-tails";
constexpr std::string_view kTableFormat = "evscout-features";
constexpr std::string_view kDatasetFormat = "evscout-dataset";

double lag1_autocorrelation(const VectorXd& x) {
    const Eigen::Index n = x.size();
    if (n < 2) return 0.0;
    const VectorXd c = x.array() - x.mean();
    const double var = c.squaredNorm() / static_cast<double>(n);
    if (var <= 0.0) return 0.0;
    return c.head(n - 1).dot(c.tail(n - 1)) / (static_cast<double>(n - 1) * var);
}

double trend_slope(const VectorXd& x) {
    const Eigen::Index n = x.size();
    if (n < 2) return 0.0;
    const VectorXd idx = VectorXd::LinSpaced(n, 0.0, static_cast<double>(n - 1));
    const VectorXd ic = idx.array() - idx.mean();
    return ic.dot(x) / ic.squaredNorm();
}

/// Most frequent value after rounding to 0.1 A; ties go to the smaller value.
double rounded_mode(const VectorXd& x) {
    std::map<long long, int> counts;
    for (Eigen::Index i = 0; i < x.size(); ++i) ++counts[std::llround(x[i] * 10.0)];
    long long best = 0;
    int best_count = -1;
    for (const auto& [key, count] : counts) {
        if (count > best_count) {
            best = key;
            best_count = count;
        }
    }
    return static_cast<double>(best) / 10.0;
}

double median_of(const VectorXd& x) {
    std::vector<double> v(x.data(), x.data() + x.size());
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

void append_legacy_tail(const VectorXd& tail, std::vector<double>& out) {
    const double mean = tail.mean();
    out.push_back(mean);
    out.push_back(rounded_mode(tail));
    out.push_back(median_of(tail));
    out.push_back(tail.maxCoeff());
    out.push_back(std::sqrt((tail.array() - mean).square().mean()));
    out.push_back(lag1_autocorrelation(tail));
    out.push_back(static_cast<double>(tail.size()));
    out.push_back(trend_slope(tail));
}

void write_vector(std::ostream& out, const VectorXd& v) {
    out << '[';
    for (Eigen::Index i = 0; i < v.size(); ++i) out << (i ? "," : "") << format_double(v[i]);
    out << ']';
}

VectorXd read_vector(const nlohmann::json& arr) {
    VectorXd v(static_cast<Eigen::Index>(arr.size()));
    for (std::size_t i = 0; i < arr.size(); ++i) v[static_cast<Eigen::Index>(i)] = arr[i].get<double>();
    return v;
}

void check_names(const std::vector<std::string>& expected, const std::vector<std::string>& got) {
    if (expected != got) throw Error("name_mismatch", "feature names differ from the fitted catalog");
}

}  // namespace

const std::vector<std::string>& modern_feature_names() {
    static const std::vector<std::string> names = [] {
        std::vector<std::string> out;
        for (const char* prefix : {"tail__", "delta__"}) {
            for (auto n : series_feature_names()) out.push_back(prefix + std::string(n));
        }
        return out;
    }();
    return names;
}

const std::vector<std::string>& legacy_feature_names() {
    static const std::vector<std::string> names = [] {
        std::vector<std::string> out;
        for (const char* prefix : {"current_tail__", "pilot_tail__"}) {
            for (const char* n : {"mean", "mode", "median", "max", "std", "autocorr_lag_1", "length",
                                  "slope"}) {
                out.push_back(prefix + std::string(n));
            }
        }
        out.push_back("kwh_delivered");
        out.push_back("duration_s");
        return out;
    }();
    return names;
}

std::size_t FeatureVector::replaced_count() const {
    return static_cast<std::size_t>(std::count(replaced.begin(), replaced.end(), true));
}

std::optional<TailRecord> make_tail_record(const ChargingSession& s, const TailParams& params) {
    auto tail = extract_tail(s, params);
    if (!tail || tail->begin() < 1) return std::nullopt;
    TailRecord rec;
    rec.session_id = s.session_id;
    rec.ev_id = s.ev_id;
    rec.connection_time = s.connection_time;
    rec.disconnection_time = s.disconnection_time;
    rec.kwh = s.kwh;
    rec.delta = compute_delta(s, tail->begin(), params.n_avg);
    rec.tail = std::move(*tail);
    return rec;
}

std::vector<TailRecord> extract_tails(const Fleet& fleet, const TailParams& params) {
    std::vector<TailRecord> out;
    for (const ChargingSession* s : fleet.sessions()) {
        if (auto rec = make_tail_record(*s, params)) out.push_back(std::move(*rec));
    }
    return out;
}

FeatureVector featurize(const Tail& tail, const DeltaSeries& delta, int min_tail_len) {
    if (tail.length < min_tail_len || tail.current.size() == 0) {
        throw Error("short_tail", "tail shorter than the minimum tail length");
    }
    if (delta.values.size() == 0) throw Error("empty_delta", "delta series is empty");
    const SeriesFeatures a = series_features(tail.current);
    const SeriesFeatures b = series_features(delta.values);
    FeatureVector fv;
    fv.names = &modern_feature_names();
    fv.values.resize(2 * static_cast<Eigen::Index>(kSeriesFeatureCount));
    fv.replaced.resize(2 * kSeriesFeatureCount);
    for (std::size_t i = 0; i < kSeriesFeatureCount; ++i) {
        fv.values[static_cast<Eigen::Index>(i)] = a.values[i];
        fv.values[static_cast<Eigen::Index>(i + kSeriesFeatureCount)] = b.values[i];
        fv.replaced[i] = a.replaced[i];
        fv.replaced[i + kSeriesFeatureCount] = b.replaced[i];
    }
    return fv;
}

FeatureVector featurize(const TailRecord& rec, int min_tail_len) {
    FeatureVector fv = featurize(rec.tail, rec.delta, min_tail_len);
    fv.ev_id = rec.ev_id;
    fv.session_id = rec.session_id;
    return fv;
}

FeatureVector featurize_legacy(const TailRecord& rec) {
    if (rec.tail.current.size() == 0 || rec.tail.pilot.size() == 0) {
        throw Error("short_tail", "legacy features need both current and pilot tails");
    }
    std::vector<double> v;
    v.reserve(kLegacyFeatureCount);
    append_legacy_tail(rec.tail.current, v);
    append_legacy_tail(rec.tail.pilot, v);
    v.push_back(rec.kwh);
    v.push_back(rec.duration_seconds());

    FeatureVector fv;
    fv.names = &legacy_feature_names();
    fv.values = Eigen::Map<const VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
    fv.replaced.assign(v.size(), false);
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (!std::isfinite(v[i])) {
            fv.values[static_cast<Eigen::Index>(i)] = 0.0;
            fv.replaced[i] = true;
        }
    }
    fv.ev_id = rec.ev_id;
    fv.session_id = rec.session_id;
    return fv;
}

std::vector<std::string> FeatureTable::evs() const {
    std::vector<std::string> out = ev_ids;
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

std::vector<Eigen::Index> FeatureTable::rows_of(const std::string& ev) const {
    std::vector<Eigen::Index> out;
    for (std::size_t i = 0; i < ev_ids.size(); ++i) {
        if (ev_ids[i] == ev) out.push_back(static_cast<Eigen::Index>(i));
    }
    std::stable_sort(out.begin(), out.end(), [this](Eigen::Index a, Eigen::Index b) {
        return connection_times[static_cast<std::size_t>(a)] < connection_times[static_cast<std::size_t>(b)];
    });
    return out;
}

FeatureTable featurize_all(const std::vector<TailRecord>& records, bool legacy, int min_tail_len) {
    FeatureTable table;
    table.catalog = std::string(legacy ? kLegacyCatalog : kModernCatalog);
    table.names = legacy ? legacy_feature_names() : modern_feature_names();
    table.values.resize(static_cast<Eigen::Index>(records.size()),
                        static_cast<Eigen::Index>(table.names.size()));
    for (std::size_t i = 0; i < records.size(); ++i) {
        const FeatureVector fv = legacy ? featurize_legacy(records[i]) : featurize(records[i], min_tail_len);
        table.values.row(static_cast<Eigen::Index>(i)) = fv.values.transpose();
        table.ev_ids.push_back(records[i].ev_id);
        table.session_ids.push_back(records[i].session_id);
        table.connection_times.push_back(records[i].connection_time);
    }
    return table;
}

LabeledDataset LabeledDataset::subset(const std::vector<Eigen::Index>& rows) const {
    LabeledDataset out;
    out.catalog = catalog;
    out.names = names;
    out.target_ev = target_ev;
    out.X.resize(static_cast<Eigen::Index>(rows.size()), X.cols());
    out.y.resize(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto r = rows[i];
        out.X.row(static_cast<Eigen::Index>(i)) = X.row(r);
        out.y[static_cast<Eigen::Index>(i)] = y[r];
        if (!ev_ids.empty()) out.ev_ids.push_back(ev_ids[static_cast<std::size_t>(r)]);
        if (!session_ids.empty()) out.session_ids.push_back(session_ids[static_cast<std::size_t>(r)]);
    }
    return out;
}

void LabeledDataset::validate() const {
    if (X.rows() != y.size()) throw Error("bad_dataset", "row count and label count differ");
    if (X.cols() != static_cast<Eigen::Index>(names.size())) {
        throw Error("bad_dataset", "column count and name count differ");
    }
    if (!X.allFinite()) throw Error("bad_dataset", "non-finite feature value");
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        if (y[i] != 0 && y[i] != 1) throw Error("bad_dataset", "labels must be 0 or 1");
        if (y[i] == 1 && !ev_ids.empty() && ev_ids[static_cast<std::size_t>(i)] != target_ev) {
            throw Error("bad_dataset", "positive row does not belong to the target EV");
        }
    }
}

VectorXd chi2_scores(const MatrixXd& X, const LabelVector& y) {
    if (X.rows() != y.size()) throw Error("bad_dataset", "row count and label count differ");
    const double n = static_cast<double>(y.size());
    const double prior1 = static_cast<double>(y.count()) / n;
    const double prior0 = 1.0 - prior1;
    VectorXd scores = VectorXd::Zero(X.cols());
    for (Eigen::Index j = 0; j < X.cols(); ++j) {
        double obs1 = 0.0, total = 0.0;
        for (Eigen::Index i = 0; i < X.rows(); ++i) {
            total += X(i, j);
            if (y[i] == 1) obs1 += X(i, j);
        }
        if (total <= 0.0) continue;
        const double obs0 = total - obs1;
        const double exp1 = total * prior1, exp0 = total * prior0;
        double chi2 = 0.0;
        if (exp1 > 0.0) chi2 += (obs1 - exp1) * (obs1 - exp1) / exp1;
        if (exp0 > 0.0) chi2 += (obs0 - exp0) * (obs0 - exp0) / exp0;
        scores[j] = chi2;
    }
    return scores;
}

MatrixXd scale_columns(const SelectionModel& model, const MatrixXd& X) {
    MatrixXd out(X.rows(), X.cols());
    for (Eigen::Index j = 0; j < X.cols(); ++j) {
        const double lo = model.train_min[j], span = model.train_max[j] - lo;
        if (span > 0.0) {
            out.col(j) = ((X.col(j).array() - lo) / span).cwiseMax(0.0).cwiseMin(1.0);
        } else {
            out.col(j).setZero();
        }
    }
    return out;
}

namespace {

SelectionModel fit_scaler(const LabeledDataset& train) {
    if (train.rows() == 0) throw Error("bad_dataset", "empty training set");
    if (train.positives() == 0 || train.negatives() == 0) {
        throw Error("single_class", "selection needs both classes in the training set");
    }
    SelectionModel m;
    m.catalog = train.catalog;
    m.names = train.names;
    m.train_min = train.X.colwise().minCoeff().transpose();
    m.train_max = train.X.colwise().maxCoeff().transpose();
    return m;
}

}  // namespace

SelectionModel fit_selection(const LabeledDataset& train, int k) {
    SelectionModel m = fit_scaler(train);
    const Eigen::Index d = train.X.cols();
    if (k < 1 || k > d) throw Error("bad_params", "k must be in [1, feature count]");
    m.scores = chi2_scores(scale_columns(m, train.X), train.y);

    std::vector<Eigen::Index> candidates;
    for (Eigen::Index j = 0; j < d; ++j) {
        if (m.train_max[j] > m.train_min[j]) {
            candidates.push_back(j);
        } else {
            m.scores[j] = 0.0;
        }
    }
    std::stable_sort(candidates.begin(), candidates.end(),
                     [&](Eigen::Index a, Eigen::Index b) { return m.scores[a] > m.scores[b]; });
    candidates.resize(std::min<std::size_t>(candidates.size(), static_cast<std::size_t>(k)));
    std::sort(candidates.begin(), candidates.end());
    m.selected = std::move(candidates);
    return m;
}

SelectionModel fit_scaling(const LabeledDataset& train) {
    SelectionModel m = fit_scaler(train);
    m.scores = VectorXd::Zero(train.X.cols());
    for (Eigen::Index j = 0; j < train.X.cols(); ++j) {
        if (m.train_max[j] > m.train_min[j]) m.selected.push_back(j);
    }
    return m;
}

MatrixXd apply_selection(const SelectionModel& model, const MatrixXd& X,
                         const std::vector<std::string>& names) {
    check_names(model.names, names);
    if (X.cols() != static_cast<Eigen::Index>(names.size())) {
        throw Error("name_mismatch", "column count differs from the fitted catalog");
    }
    const MatrixXd scaled = scale_columns(model, X);
    MatrixXd out(X.rows(), static_cast<Eigen::Index>(model.selected.size()));
    for (std::size_t c = 0; c < model.selected.size(); ++c) {
        out.col(static_cast<Eigen::Index>(c)) = scaled.col(model.selected[c]);
    }
    return out;
}

// ---- persistence ----------------------------------------------------------

void persist(const std::vector<TailRecord>& tails, const TailParams& params, std::ostream& out) {
    nlohmann::json h;
    h["format"] = kTailsFormat;
    h["version"] = kTailsFormatVersion;
    h["params"] = {{"n_avg", params.n_avg},
                   {"epsilon", params.epsilon},
                   {"t_max", params.t_max},
                   {"zero_threshold", params.zero_threshold},
                   {"min_tail_len", params.min_tail_len}};
    out << h.dump() << '\n';
    for (const auto& r : tails) {
        nlohmann::json meta;
        meta["session_id"] = r.session_id;
        meta["ev_id"] = r.ev_id;
        meta["connection_time"] = format_instant(r.connection_time);
        meta["disconnection_time"] = format_instant(r.disconnection_time);
        meta["kwh"] = r.kwh;
        meta["t_start"] = r.tail.t_start;
        meta["length"] = r.tail.length;
        meta["window"] = r.delta.window;
        std::string m = meta.dump();
        m.pop_back();
        out << m << ",\"tail_current\":";
        write_vector(out, r.tail.current);
        out << ",\"tail_pilot\":";
        write_vector(out, r.tail.pilot);
        out << ",\"delta\":";
        write_vector(out, r.delta.values);
        out << "}\n";
    }
}

void persist(const std::vector<TailRecord>& tails, const TailParams& params,
             const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw Error("unwritable_file", "cannot write '" + path.string() + "'");
    persist(tails, params, out);
}

std::vector<TailRecord> load_tails(std::istream& in, TailParams* params) {
    std::string line;
    if (!std::getline(in, line)) throw VersionMismatch("tails file has no header");
    const auto h = nlohmann::json::parse(line, nullptr, false);
    if (h.is_discarded() || h.value("format", std::string{}) != kTailsFormat) {
        throw VersionMismatch("not an evscout tails file");
    }
    if (h.value("version", -1) != kTailsFormatVersion) {
        throw VersionMismatch("tails file version " + std::to_string(h.value("version", -1)) +
                              ", expected " + std::to_string(kTailsFormatVersion));
    }
    if (params) {
        const auto& p = h.at("params");
        params->n_avg = p.at("n_avg").get<int>();
        params->epsilon = p.at("epsilon").get<double>();
        params->t_max = p.at("t_max").get<int>();
        params->zero_threshold = p.at("zero_threshold").get<double>();
        params->min_tail_len = p.at("min_tail_len").get<int>();
    }
    std::vector<TailRecord> out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded()) throw Error("malformed_record", "tails record is not JSON");
        TailRecord r;
        r.session_id = j.at("session_id").get<std::string>();
        r.ev_id = j.at("ev_id").get<std::string>();
        r.connection_time = parse_instant(j.at("connection_time").get<std::string>());
        r.disconnection_time = parse_instant(j.at("disconnection_time").get<std::string>());
        r.kwh = j.at("kwh").get<double>();
        r.tail.t_start = j.at("t_start").get<Eigen::Index>();
        r.tail.length = j.at("length").get<Eigen::Index>();
        r.tail.current = read_vector(j.at("tail_current"));
        r.tail.pilot = read_vector(j.at("tail_pilot"));
        r.delta.window = j.at("window").get<int>();
        r.delta.values = read_vector(j.at("delta"));
        out.push_back(std::move(r));
    }
    return out;
}

std::vector<TailRecord> load_tails(const std::filesystem::path& path, TailParams* params) {
    std::ifstream in(path);
    if (!in) throw Error("unreadable_file", "cannot open '" + path.string() + "'");
    return load_tails(in, params);
}

void dump_tails_csv(const std::vector<TailRecord>& tails, std::ostream& out) {
    out << "session_id,ev_id,series,index,value\n";
    for (const auto& r : tails) {
        auto emit = [&](const char* series, const VectorXd& v, Eigen::Index offset) {
            for (Eigen::Index i = 0; i < v.size(); ++i) {
                out << csv_field(r.session_id) << ',' << csv_field(r.ev_id) << ',' << series << ','
                    << offset + i << ',' << format_double(v[i]) << '\n';
            }
        };
        emit("tail_current", r.tail.current, r.tail.begin());
        emit("tail_pilot", r.tail.pilot, r.tail.begin());
        emit("delta", r.delta.values, 0);
    }
}

void persist(const FeatureTable& table, std::ostream& out) {
    out << '#' << kTableFormat << ',' << kTableFormatVersion << ',' << table.catalog << '\n';
    out << "ev_id,session_id,connection_time";
    for (const auto& n : table.names) out << ',' << csv_field(n);
    out << '\n';
    for (Eigen::Index i = 0; i < table.rows(); ++i) {
        const auto r = static_cast<std::size_t>(i);
        out << csv_field(table.ev_ids[r]) << ',' << csv_field(table.session_ids[r]) << ','
            << format_instant(table.connection_times[r]);
        for (Eigen::Index j = 0; j < table.values.cols(); ++j) out << ',' << format_double(table.values(i, j));
        out << '\n';
    }
}

void persist(const FeatureTable& table, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw Error("unwritable_file", "cannot write '" + path.string() + "'");
    persist(table, out);
}

FeatureTable load_feature_table(std::istream& in) {
    const auto header = detail::read_artifact_header(in, kTableFormat, kTableFormatVersion);
    FeatureTable t;
    t.catalog = header.size() > 2 ? header[2] : "";
    std::string line;
    if (!std::getline(in, line)) throw Error("malformed_table", "feature table lacks a column row");
    auto cols = split_csv(line);
    if (cols.size() < 3) throw Error("malformed_table", "feature table lacks id columns");
    t.names.assign(cols.begin() + 3, cols.end());
    std::vector<std::vector<double>> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto f = split_csv(line);
        if (f.size() != cols.size()) throw Error("malformed_table", "ragged feature table row");
        t.ev_ids.push_back(f[0]);
        t.session_ids.push_back(f[1]);
        t.connection_times.push_back(parse_instant(f[2]));
        std::vector<double> v;
        for (std::size_t j = 3; j < f.size(); ++j) v.push_back(parse_double(f[j]));
        rows.push_back(std::move(v));
    }
    t.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(t.names.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t j = 0; j < rows[i].size(); ++j) {
            t.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
        }
    }
    return t;
}

FeatureTable load_feature_table(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("unreadable_file", "cannot open '" + path.string() + "'");
    return load_feature_table(in);
}

void persist(const LabeledDataset& ds, std::ostream& out) {
    out << '#' << kDatasetFormat << ',' << kTableFormatVersion << ',' << ds.catalog << ','
        << csv_field(ds.target_ev) << '\n';
    out << "label,ev_id,session_id";
    for (const auto& n : ds.names) out << ',' << csv_field(n);
    out << '\n';
    for (Eigen::Index i = 0; i < ds.rows(); ++i) {
        const auto r = static_cast<std::size_t>(i);
        out << ds.y[i] << ',' << csv_field(ds.ev_ids.empty() ? "" : ds.ev_ids[r]) << ','
            << csv_field(ds.session_ids.empty() ? "" : ds.session_ids[r]);
        for (Eigen::Index j = 0; j < ds.X.cols(); ++j) out << ',' << format_double(ds.X(i, j));
        out << '\n';
    }
}

void persist(const LabeledDataset& ds, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw Error("unwritable_file", "cannot write '" + path.string() + "'");
    persist(ds, out);
}

LabeledDataset load_labeled_dataset(std::istream& in) {
    const auto header = detail::read_artifact_header(in, kDatasetFormat, kTableFormatVersion);
    LabeledDataset ds;
    ds.catalog = header.size() > 2 ? header[2] : "";
    ds.target_ev = header.size() > 3 ? header[3] : "";
    std::string line;
    if (!std::getline(in, line)) throw Error("malformed_table", "dataset lacks a column row");
    auto cols = split_csv(line);
    if (cols.size() < 3) throw Error("malformed_table", "dataset lacks id columns");
    ds.names.assign(cols.begin() + 3, cols.end());
    std::vector<int> labels;
    std::vector<std::vector<double>> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto f = split_csv(line);
        if (f.size() != cols.size()) throw Error("malformed_table", "ragged dataset row");
        labels.push_back(std::stoi(f[0]));
        ds.ev_ids.push_back(f[1]);
        ds.session_ids.push_back(f[2]);
        std::vector<double> v;
        for (std::size_t j = 3; j < f.size(); ++j) v.push_back(parse_double(f[j]));
        rows.push_back(std::move(v));
    }
    ds.X.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(ds.names.size()));
    ds.y.resize(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        ds.y[static_cast<Eigen::Index>(i)] = labels[i];
        for (std::size_t j = 0; j < rows[i].size(); ++j) {
            ds.X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
        }
    }
    return ds;
}

LabeledDataset load_labeled_dataset(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("unreadable_file", "cannot open '" + path.string() + "'");
    return load_labeled_dataset(in);
}

}  // namespace evscout
