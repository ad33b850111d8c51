#pragma once

#include "evscout/common.hpp"
#include "evscout/features.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

namespace evscout {

enum class ModelKind { svm, knn, dt, lr, rf, ada };

std::string_view to_string(ModelKind k) noexcept;
ModelKind model_kind_from_string(std::string_view s);

enum class KnnWeights { uniform, distance };
enum class KnnMetric { euclidean, manhattan };
enum class SplitCriterion { gini, entropy };

struct SvmParams {
    double c = 1.0;
    double gamma = 1e-3;
    double tolerance = 1e-3;
};

struct KnnParams {
    int n_neighbors = 5;
    KnnWeights weights = KnnWeights::uniform;
    KnnMetric metric = KnnMetric::euclidean;
};

struct TreeParams {
    SplitCriterion criterion = SplitCriterion::gini;
    std::optional<int> max_depth;  // nullopt = grow until pure
};

struct LogisticParams {
    int max_iter = 5000;
    double c = 1.0;
    double tolerance = 1e-6;
};

struct ForestParams {
    int n_estimators = 100;
    std::optional<int> max_depth;
};

struct BoostParams {
    int n_estimators = 50;
};

using HyperParams =
    std::variant<SvmParams, KnnParams, TreeParams, LogisticParams, ForestParams, BoostParams>;

ModelKind kind_of(const HyperParams& p) noexcept;
std::string describe(const HyperParams& p);

/// Parameter lists searched per model kind. Default-constructed values are
/// the published grid; enumeration nests parameters in declaration order.
struct HyperParamGrid {
    std::vector<double> svm_c{1.0, 10.0, 100.0, 1000.0};
    std::vector<double> svm_gamma{1e-4, 1e-3};
    std::vector<int> knn_neighbors{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
    std::vector<KnnWeights> knn_weights{KnnWeights::uniform, KnnWeights::distance};
    std::vector<KnnMetric> knn_metric{KnnMetric::euclidean, KnnMetric::manhattan};
    std::vector<SplitCriterion> dt_criterion{SplitCriterion::gini, SplitCriterion::entropy};
    std::vector<std::optional<int>> dt_max_depth{8, 10, 14, 30, 70, 110};
    std::vector<int> lr_max_iter{5000};
    std::vector<double> lr_c{1e-2, 1.0, 1e2};
    std::vector<int> rf_n_estimators{50, 200, 1000};
    std::vector<std::optional<int>> rf_max_depth{10, 100, std::nullopt};
    std::vector<int> ada_n_estimators{10, 100, 500, 1000, 5000};

    std::vector<HyperParams> enumerate(ModelKind kind) const;
    /// Throws Error{"bad_grid"} on empty lists or non-positive values.
    void validate() const;
};

// ---- fitted states --------------------------------------------------------

struct KnnState {
    MatrixXd X;
    LabelVector y;
};

/// Flat binary tree; leaves have feature == -1.
struct TreeState {
    struct Node {
        int feature = -1;
        double threshold = 0.0;
        int left = -1;
        int right = -1;
        int label = 0;
    };
    std::vector<Node> nodes;

    int predict_row(const Eigen::Ref<const VectorXd>& x) const;
    int depth() const;
};

struct LogisticState {
    VectorXd w;
    double b = 0.0;
    int iterations = 0;
    /// Objective value after each iteration (not persisted).
    std::vector<double> loss_history;
};

struct SvmState {
    MatrixXd support;
    VectorXd coef;  // alpha_i * s_i with s in {-1, +1}
    double rho = 0.0;
    double gamma = 1e-3;
    int iterations = 0;
};

struct ForestState {
    std::vector<TreeState> trees;
};

struct BoostState {
    std::vector<TreeState> stumps;
    std::vector<double> alphas;
    /// Weighted training error of each stump when it was added.
    std::vector<double> errors;
    int fallback_label = 0;  // used when no stump beat chance
};

using ModelState = std::variant<KnnState, TreeState, LogisticState, SvmState, ForestState, BoostState>;

struct TrainedModel {
    HyperParams params;
    ModelState state;
    std::uint64_t seed = 0;
    Eigen::Index n_features = 0;

    ModelKind kind() const noexcept { return kind_of(params); }
};

// ---- single-configuration fit / predict -----------------------------------

/// Fits one configuration on [0,1]-scaled features. Single-class input -> Error.
TrainedModel fit_raw(const HyperParams& params, const MatrixXd& X, const LabelVector& y,
                     std::uint64_t seed);

/// Dimension mismatch -> Error.
LabelVector predict(const TrainedModel& model, const MatrixXd& X);

/// kNN decision from a precomputed query-by-train distance matrix. Distance
/// ties go to the lower training index; a zero distance outweighs all
/// non-zero ones under distance weighting; vote ties give 0.
LabelVector knn_predict_from_distances(const MatrixXd& distances, const LabelVector& train_y,
                                       const KnnParams& p);
MatrixXd pairwise_distances(const MatrixXd& queries, const MatrixXd& train, KnnMetric metric);

/// CART growth with optional per-sample weights and per-split feature
/// subsampling (max_features <= 0 means all features).
TreeState grow_tree(const MatrixXd& X, const LabelVector& y, const VectorXd& weights,
                    const TreeParams& params, int max_features, std::uint64_t seed);

/// Depth-1 weighted gini tree using presorted feature orders.
TreeState fit_stump(const MatrixXd& X, const LabelVector& y, const VectorXd& weights,
                    const std::vector<std::vector<Eigen::Index>>& order);

/// Regularized logistic objective at (w, b): mean log-loss + |w|^2 / (2 c n).
double logistic_objective(const MatrixXd& X, const LabelVector& y, const VectorXd& w, double b,
                          double c);

// ---- grid search ----------------------------------------------------------

struct GridSearchInfo {
    std::vector<double> cv_f1;  // per grid point, enumeration order
    std::size_t best_index = 0;
    int folds_used = 0;
    std::vector<std::string> warnings;
};

/// Stratified fold assignment: each class is shuffled with `seed` and dealt
/// round-robin. Returns the fold index of every row.
std::vector<int> stratified_folds(const LabelVector& y, int folds, std::uint64_t seed);

/// Grid search with stratified cross-validation scored by positive-class F1,
/// then refit of the best point on all rows. Ties keep the earlier grid
/// point. Folds are reduced when the minority class is smaller than `folds`.
TrainedModel fit(ModelKind kind, const HyperParamGrid& grid, const MatrixXd& X, const LabelVector& y,
                 int folds, std::uint64_t seed, GridSearchInfo* info = nullptr);
TrainedModel fit(ModelKind kind, const HyperParamGrid& grid, const LabeledDataset& train, int folds,
                 std::uint64_t seed, GridSearchInfo* info = nullptr);

// ---- persistence ----------------------------------------------------------

inline constexpr int kModelFormatVersion = 1;

nlohmann::json to_json(const TrainedModel& m);
TrainedModel model_from_json(const nlohmann::json& j);
void persist(const TrainedModel& m, const std::filesystem::path& path);
TrainedModel load_model(const std::filesystem::path& path);

}  // namespace evscout
