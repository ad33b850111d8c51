#pragma once

#include "evscout/classifiers.hpp"
#include "evscout/common.hpp"
#include "evscout/features.hpp"
#include "evscout/metrics.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace evscout {

/// 100 repetitions, 25 for the ensemble models.
int default_iterations(ModelKind kind) noexcept;

struct ExperimentConfig {
    ModelKind model = ModelKind::knn;
    std::vector<double> q{1.0};
    int nof = 100;
    double train_fraction = 0.8;
    std::optional<int> iterations;  // default_iterations(model) when unset
    std::uint64_t seed = 0;
    int folds = 3;
    int jobs = 1;
    HyperParamGrid grid;

    int effective_iterations() const noexcept {
        return iterations ? *iterations : default_iterations(model);
    }
    /// Throws Error{"bad_config"}.
    void validate() const;
    nlohmann::json to_json() const;
};

/// One line of a report table. `axis` names the swept quantity ("fleet" for
/// plain aggregates, "ev" for per-EV means) and `axis_value` its value.
struct MetricRow {
    std::string model;
    double q = 1.0;
    int nof = 0;
    std::string metric;
    double mean = 0.0;
    double std = 0.0;
    int n_evs = 0;
    int iterations = 0;
    std::uint64_t seed = 0;
    std::string axis = "fleet";
    std::string axis_value;

    friend bool operator==(const MetricRow&, const MetricRow&) = default;
};

struct MetricsReport {
    std::vector<MetricRow> rows;
    std::vector<std::string> warnings;

    /// Rows matching all given keys; empty strings match anything.
    std::vector<const MetricRow*> select(std::string_view metric, std::string_view axis = {},
                                         std::string_view axis_value = {}) const;
    /// Mean of the single row matching (metric, q, axis, axis_value). Missing -> Error.
    double value(std::string_view metric, double q, std::string_view axis = "fleet",
                 std::string_view axis_value = {}) const;

    friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

inline constexpr int kReportFormatVersion = 1;

void persist(const MetricsReport& r, std::ostream& out);
void persist(const MetricsReport& r, const std::filesystem::path& path);
MetricsReport load_report(std::istream& in);
MetricsReport load_report(const std::filesystem::path& path);

// ---- dataset assembly -------------------------------------------------------

/// All rows of `target` labelled 1 plus round(q * n_target) rows drawn
/// without replacement from every other EV, labelled 0. Positives come first
/// in chronological order, negatives in draw order.
/// Errors: "too_few_rows" (< 2 target rows), "insufficient_pool".
LabeledDataset assemble(const std::string& target, const FeatureTable& table, double q,
                        std::uint64_t seed);

/// Draws `count` distinct entries of `pool` (seeded partial Fisher-Yates).
std::vector<Eigen::Index> sample_without_replacement(const std::vector<Eigen::Index>& pool,
                                                     std::size_t count, std::uint64_t seed);

struct TrainTestSplit {
    std::vector<Eigen::Index> train;
    std::vector<Eigen::Index> test;
};

/// Per class, round(train_fraction * n_c) rows go to train, clamped so that
/// both sides keep at least one row of each class. Each class needs >= 2 rows.
TrainTestSplit stratified_split(const LabelVector& y, double train_fraction, std::uint64_t seed);

/// Fits selection (or scaling only for the legacy catalog) on `train`, grid
/// searches the model and tallies its predictions on `test`.
Confusion evaluate_split(const LabeledDataset& train, const LabeledDataset& test,
                         const ExperimentConfig& config, int nof, std::uint64_t seed);

// ---- experiments ------------------------------------------------------------

/// Per-EV binary profiling at every q of the config. Emits all five metrics
/// as fleet aggregates (mean and population std over EVs of the per-EV mean
/// over iterations) plus per-EV rows. With `f1_only` only F1 rows are
/// emitted and per-EV rows are omitted.
MetricsReport run_profiling(const ExperimentConfig& config, const FeatureTable& table,
                            bool f1_only = false);

/// F1 against the number of selected features, for every q of the config.
/// Values above the catalog size are clamped with a warning.
MetricsReport sweep_nof(const ExperimentConfig& config, const FeatureTable& table,
                        std::vector<int> nof_list = {10, 25, 50, 100, 150, 200});

std::vector<int> default_train_sizes();  // 7, 14, ..., 56

/// F1 against the number of target training vectors. Only EVs with at least
/// `min_sessions` rows take part. Every EV is split chronologically: its last
/// (1 - train_fraction) rows are test rows and training uses its earliest
/// `size` rows.
MetricsReport sweep_train_size(const ExperimentConfig& config, const FeatureTable& table,
                               std::vector<int> sizes = default_train_sizes(),
                               std::size_t min_sessions = 70);

/// Number of consecutive test windows when each window spans `window` of an
/// EV's sessions and training takes the first `train_fraction`.
int degradation_window_count(double train_fraction, double window = 0.05);

/// Splits [begin, end) into `count` consecutive near-equal pieces.
std::vector<std::pair<Eigen::Index, Eigen::Index>> partition_span(Eigen::Index begin, Eigen::Index end,
                                                                  int count);

/// F1 per consecutive test window after a chronological training prefix, for
/// the `top_n` EVs with the most rows (at least `min_sessions`). Rows use
/// axis "window" with value "<frac>:<index>" and "<frac>:mean".
MetricsReport sweep_degradation(const ExperimentConfig& config, const FeatureTable& table,
                                std::vector<double> train_fractions = {0.3, 0.6}, double window = 0.05,
                                std::size_t top_n = 10, std::size_t min_sessions = 150);

/// Runs the modern catalog with selection and the legacy catalog with scaling
/// only on identical seeds and session draws. The two tables must hold the
/// same sessions in the same order. Rows use axis "arm".
MetricsReport compare_legacy(const ExperimentConfig& config, const FeatureTable& modern,
                             const FeatureTable& legacy);

// ---- run manifest -----------------------------------------------------------

/// FNV-1a over the key-sorted serialization, so field order does not matter.
std::string config_hash(const nlohmann::json& config);

struct RunManifest {
    std::string config_hash;
    nlohmann::json config;
    std::vector<std::string> inputs;
    std::vector<std::string> outputs;
    std::string tool_version;
    std::string started;
    double wall_clock_seconds = 0.0;
    std::uint64_t seed = 0;

    nlohmann::json to_json() const;
};

void write_manifest(const RunManifest& m, const std::filesystem::path& path);

/// Runs fn(i) for i in [0, n) on up to `jobs` threads. The first exception
/// thrown by any call is rethrown after all workers stop.
void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn);

}  // namespace evscout
