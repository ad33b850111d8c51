#pragma once

#include "evscout/common.hpp"
#include "evscout/data_model.hpp"
#include "evscout/extraction.hpp"

#include <array>
#include <bitset>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace evscout {

/// Per-series catalog. Entries are listed in feature_catalog.cpp; the order
/// is part of the artifact format.
inline constexpr std::size_t kSeriesFeatureCount = 64;
inline constexpr std::size_t kLegacyFeatureCount = 18;
inline constexpr std::string_view kModernCatalog = "modern-128-v1";
inline constexpr std::string_view kLegacyCatalog = "legacy-18-v1";

struct SeriesFeatures {
    std::array<double, kSeriesFeatureCount> values{};
    /// Entries that were undefined or non-finite and were replaced by 0.
    std::bitset<kSeriesFeatureCount> replaced;
};

const std::array<std::string_view, kSeriesFeatureCount>& series_feature_names();

/// Applies the 64-entry catalog to one series. Empty input -> Error.
SeriesFeatures series_features(const Eigen::Ref<const VectorXd>& x);

/// "tail__<name>" for the 64 entries, then "delta__<name>".
const std::vector<std::string>& modern_feature_names();
const std::vector<std::string>& legacy_feature_names();

struct FeatureVector {
    VectorXd values;
    const std::vector<std::string>* names = nullptr;
    std::string ev_id;
    std::string session_id;
    std::vector<bool> replaced;

    std::size_t replaced_count() const;
};

/// Extraction output for one session: the metadata featurization needs plus
/// the derived series.
struct TailRecord {
    std::string session_id;
    std::string ev_id;
    Instant connection_time{};
    Instant disconnection_time{};
    double kwh = 0.0;
    Tail tail;
    DeltaSeries delta;

    double duration_seconds() const noexcept {
        return static_cast<double>((disconnection_time - connection_time).count());
    }
};

/// Runs tail extraction and delta computation; absent when the session has no
/// usable tail or no constant-current phase.
std::optional<TailRecord> make_tail_record(const ChargingSession& s, const TailParams& params);

/// make_tail_record over every session of the fleet, in Fleet::sessions()
/// order; sessions without a record are left out.
std::vector<TailRecord> extract_tails(const Fleet& fleet, const TailParams& params);

/// Modern catalog over (current tail, delta). Tails shorter than
/// min_tail_len are rejected with Error{"short_tail"}.
FeatureVector featurize(const Tail& tail, const DeltaSeries& delta, int min_tail_len = 1);
FeatureVector featurize(const TailRecord& rec, int min_tail_len = 1);

/// 18-entry legacy vector: {mean, mode, median, max, std, lag-1
/// autocorrelation, length, slope} for the current tail then the pilot
/// tail, followed by kWh and session duration in seconds.
FeatureVector featurize_legacy(const TailRecord& rec);

/// Feature vectors of a fleet, one row per session.
struct FeatureTable {
    std::string catalog;
    std::vector<std::string> names;
    MatrixXd values;
    std::vector<std::string> ev_ids;
    std::vector<std::string> session_ids;
    std::vector<Instant> connection_times;

    Eigen::Index rows() const noexcept { return values.rows(); }
    /// EV ids in sorted order.
    std::vector<std::string> evs() const;
    /// Row indices of one EV, chronological.
    std::vector<Eigen::Index> rows_of(const std::string& ev) const;

    friend bool operator==(const FeatureTable& a, const FeatureTable& b) {
        return a.catalog == b.catalog && a.names == b.names && same_values(a.values, b.values) &&
               a.ev_ids == b.ev_ids && a.session_ids == b.session_ids &&
               a.connection_times == b.connection_times;
    }
};

FeatureTable featurize_all(const std::vector<TailRecord>& records, bool legacy, int min_tail_len = 1);

struct LabeledDataset {
    std::string catalog;
    std::vector<std::string> names;
    MatrixXd X;
    LabelVector y;  // 1 = target EV, 0 = other
    std::string target_ev;
    std::vector<std::string> ev_ids;
    std::vector<std::string> session_ids;

    Eigen::Index rows() const noexcept { return X.rows(); }
    Eigen::Index positives() const noexcept { return y.count(); }
    Eigen::Index negatives() const noexcept { return y.size() - y.count(); }
    /// Row subset, keeping the given order.
    LabeledDataset subset(const std::vector<Eigen::Index>& rows) const;
    /// Throws Error{"bad_dataset"} on shape or label inconsistencies.
    void validate() const;

    friend bool operator==(const LabeledDataset& a, const LabeledDataset& b) {
        return a.catalog == b.catalog && a.names == b.names && same_values(a.X, b.X) &&
               same_values(a.y, b.y) && a.target_ev == b.target_ev && a.ev_ids == b.ev_ids &&
               a.session_ids == b.session_ids;
    }
};

/// Min-max scaler plus chi-squared top-k projection, fitted on training rows.
struct SelectionModel {
    std::string catalog;
    std::vector<std::string> names;
    std::vector<Eigen::Index> selected;
    VectorXd scores;
    VectorXd train_min;
    VectorXd train_max;
};

/// Chi-squared statistic of each non-negative feature column against binary
/// labels: observed per-class column sums versus total sum times class prior.
/// Columns whose sum is zero score 0.
VectorXd chi2_scores(const MatrixXd& X, const LabelVector& y);

/// Scales with training extremes, drops constant columns, keeps the k highest
/// chi2 scores (ties to lower index). Fewer than k columns are returned when
/// fewer than k columns vary.
SelectionModel fit_selection(const LabeledDataset& train, int k);

/// Scaling only: every varying column is kept in catalog order.
SelectionModel fit_scaling(const LabeledDataset& train);

/// Scales, clamps to [0, 1] and projects. Name mismatch -> Error.
MatrixXd apply_selection(const SelectionModel& model, const MatrixXd& X,
                         const std::vector<std::string>& names);
MatrixXd scale_columns(const SelectionModel& model, const MatrixXd& X);

inline constexpr int kTailsFormatVersion = 1;
inline constexpr int kTableFormatVersion = 1;

void persist(const std::vector<TailRecord>& tails, const TailParams& params, std::ostream& out);
void persist(const std::vector<TailRecord>& tails, const TailParams& params,
             const std::filesystem::path& path);
std::vector<TailRecord> load_tails(std::istream& in, TailParams* params = nullptr);
std::vector<TailRecord> load_tails(const std::filesystem::path& path, TailParams* params = nullptr);
/// Long-format inspection dump: session_id,ev_id,series,index,value.
void dump_tails_csv(const std::vector<TailRecord>& tails, std::ostream& out);

void persist(const FeatureTable& table, std::ostream& out);
void persist(const FeatureTable& table, const std::filesystem::path& path);
FeatureTable load_feature_table(std::istream& in);
FeatureTable load_feature_table(const std::filesystem::path& path);

void persist(const LabeledDataset& ds, std::ostream& out);
void persist(const LabeledDataset& ds, const std::filesystem::path& path);
LabeledDataset load_labeled_dataset(std::istream& in);
LabeledDataset load_labeled_dataset(const std::filesystem::path& path);

}  // namespace evscout
