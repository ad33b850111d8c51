#include "evscout/classifiers.hpp"

#include "evscout/metrics.hpp"
#include "models.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

namespace evscout {

namespace {

template <class... Fs>
struct overloaded : Fs... {
    using Fs::operator()...;
};
template <class... Fs>
overloaded(Fs...) -> overloaded<Fs...>;

constexpr std::string_view kModelFormat = "evscout-model";

std::string depth_str(const std::optional<int>& d) { return d ? std::to_string(*d) : "none"; }

void require_two_classes(const LabelVector& y) {
    const Eigen::Index ones = y.count();
    if (ones == 0 || ones == y.size()) throw Error("single_class", "training data must contain both classes");
}

double f1_of(const LabelVector& truth, const LabelVector& pred) {
    return compute_metrics(tally(truth, pred)).f1;
}

MatrixXd rows_of(const MatrixXd& X, const std::vector<Eigen::Index>& idx) {
    MatrixXd out(static_cast<Eigen::Index>(idx.size()), X.cols());
    for (std::size_t r = 0; r < idx.size(); ++r) out.row(static_cast<Eigen::Index>(r)) = X.row(idx[r]);
    return out;
}

LabelVector rows_of(const LabelVector& y, const std::vector<Eigen::Index>& idx) {
    LabelVector out(static_cast<Eigen::Index>(idx.size()));
    for (std::size_t r = 0; r < idx.size(); ++r) out[static_cast<Eigen::Index>(r)] = y[idx[r]];
    return out;
}

// ---- json helpers -----------------------------------------------------------

nlohmann::json matrix_json(const MatrixXd& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        nlohmann::json r = nlohmann::json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) r.push_back(m(i, j));
        rows.push_back(std::move(r));
    }
    return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(rows)}};
}

MatrixXd matrix_from(const nlohmann::json& j) {
    MatrixXd m(j.at("rows").get<Eigen::Index>(), j.at("cols").get<Eigen::Index>());
    const auto& data = j.at("data");
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index k = 0; k < m.cols(); ++k) {
            m(i, k) = data.at(static_cast<std::size_t>(i)).at(static_cast<std::size_t>(k)).get<double>();
        }
    }
    return m;
}

template <class V>
nlohmann::json vector_json(const V& v) {
    nlohmann::json a = nlohmann::json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
    return a;
}

template <class V>
V vector_from(const nlohmann::json& a) {
    V v(static_cast<Eigen::Index>(a.size()));
    for (std::size_t i = 0; i < a.size(); ++i) v[static_cast<Eigen::Index>(i)] = a[i].get<typename V::Scalar>();
    return v;
}

nlohmann::json tree_json(const TreeState& t) {
    nlohmann::json nodes = nlohmann::json::array();
    for (const auto& n : t.nodes) nodes.push_back({n.feature, n.threshold, n.left, n.right, n.label});
    return nodes;
}

TreeState tree_from(const nlohmann::json& j) {
    TreeState t;
    for (const auto& n : j) {
        t.nodes.push_back({n.at(0).get<int>(), n.at(1).get<double>(), n.at(2).get<int>(), n.at(3).get<int>(),
                           n.at(4).get<int>()});
    }
    return t;
}

nlohmann::json depth_json(const std::optional<int>& d) { return d ? nlohmann::json(*d) : nlohmann::json(nullptr); }
std::optional<int> depth_from(const nlohmann::json& j) {
    return j.is_null() ? std::nullopt : std::optional<int>(j.get<int>());
}

nlohmann::json params_json(const HyperParams& p) {
    return std::visit(
        overloaded{
            [](const SvmParams& q) -> nlohmann::json {
                return {{"c", q.c}, {"gamma", q.gamma}, {"tolerance", q.tolerance}};
            },
            [](const KnnParams& q) -> nlohmann::json {
                return {{"n_neighbors", q.n_neighbors},
                        {"weights", q.weights == KnnWeights::uniform ? "uniform" : "distance"},
                        {"metric", q.metric == KnnMetric::euclidean ? "euclidean" : "manhattan"}};
            },
            [](const TreeParams& q) -> nlohmann::json {
                return {{"criterion", q.criterion == SplitCriterion::gini ? "gini" : "entropy"},
                        {"max_depth", depth_json(q.max_depth)}};
            },
            [](const LogisticParams& q) -> nlohmann::json {
                return {{"max_iter", q.max_iter}, {"c", q.c}, {"tolerance", q.tolerance}};
            },
            [](const ForestParams& q) -> nlohmann::json {
                return {{"n_estimators", q.n_estimators}, {"max_depth", depth_json(q.max_depth)}};
            },
            [](const BoostParams& q) -> nlohmann::json { return {{"n_estimators", q.n_estimators}}; },
        },
        p);
}

HyperParams params_from(ModelKind kind, const nlohmann::json& j) {
    switch (kind) {
        case ModelKind::svm:
            return SvmParams{j.at("c").get<double>(), j.at("gamma").get<double>(), j.at("tolerance").get<double>()};
        case ModelKind::knn:
            return KnnParams{j.at("n_neighbors").get<int>(),
                             j.at("weights") == "uniform" ? KnnWeights::uniform : KnnWeights::distance,
                             j.at("metric") == "euclidean" ? KnnMetric::euclidean : KnnMetric::manhattan};
        case ModelKind::dt:
            return TreeParams{j.at("criterion") == "gini" ? SplitCriterion::gini : SplitCriterion::entropy,
                              depth_from(j.at("max_depth"))};
        case ModelKind::lr:
            return LogisticParams{j.at("max_iter").get<int>(), j.at("c").get<double>(),
                                  j.at("tolerance").get<double>()};
        case ModelKind::rf:
            return ForestParams{j.at("n_estimators").get<int>(), depth_from(j.at("max_depth"))};
        case ModelKind::ada:
            return BoostParams{j.at("n_estimators").get<int>()};
    }
    throw Error("bad_model", "unknown model kind");
}

}  // namespace

std::string_view to_string(ModelKind k) noexcept {
    switch (k) {
        case ModelKind::svm: return "svm";
        case ModelKind::knn: return "knn";
        case ModelKind::dt: return "dt";
        case ModelKind::lr: return "lr";
        case ModelKind::rf: return "rf";
        case ModelKind::ada: return "ada";
    }
    return "?";
}

ModelKind model_kind_from_string(std::string_view s) {
    for (ModelKind k : {ModelKind::svm, ModelKind::knn, ModelKind::dt, ModelKind::lr, ModelKind::rf, ModelKind::ada}) {
        if (to_string(k) == s) return k;
    }
    throw Error("bad_model", "unknown model kind '" + std::string(s) + "'");
}

ModelKind kind_of(const HyperParams& p) noexcept {
    return std::visit(overloaded{
                          [](const SvmParams&) { return ModelKind::svm; },
                          [](const KnnParams&) { return ModelKind::knn; },
                          [](const TreeParams&) { return ModelKind::dt; },
                          [](const LogisticParams&) { return ModelKind::lr; },
                          [](const ForestParams&) { return ModelKind::rf; },
                          [](const BoostParams&) { return ModelKind::ada; },
                      },
                      p);
}

std::string describe(const HyperParams& p) {
    std::ostringstream os;
    os << to_string(kind_of(p));
    std::visit(overloaded{
                   [&](const SvmParams& q) { os << " c=" << q.c << " gamma=" << q.gamma; },
                   [&](const KnnParams& q) {
                       os << " n_neighbors=" << q.n_neighbors
                          << " weights=" << (q.weights == KnnWeights::uniform ? "uniform" : "distance")
                          << " metric=" << (q.metric == KnnMetric::euclidean ? "euclidean" : "manhattan");
                   },
                   [&](const TreeParams& q) {
                       os << " criterion=" << (q.criterion == SplitCriterion::gini ? "gini" : "entropy")
                          << " max_depth=" << depth_str(q.max_depth);
                   },
                   [&](const LogisticParams& q) { os << " max_iter=" << q.max_iter << " c=" << q.c; },
                   [&](const ForestParams& q) {
                       os << " n_estimators=" << q.n_estimators << " max_depth=" << depth_str(q.max_depth);
                   },
                   [&](const BoostParams& q) { os << " n_estimators=" << q.n_estimators; },
               },
               p);
    return os.str();
}

std::vector<HyperParams> HyperParamGrid::enumerate(ModelKind kind) const {
    std::vector<HyperParams> out;
    switch (kind) {
        case ModelKind::svm:
            for (double c : svm_c)
                for (double g : svm_gamma) out.push_back(SvmParams{c, g});
            break;
        case ModelKind::knn:
            for (int k : knn_neighbors)
                for (auto w : knn_weights)
                    for (auto m : knn_metric) out.push_back(KnnParams{k, w, m});
            break;
        case ModelKind::dt:
            for (auto c : dt_criterion)
                for (auto d : dt_max_depth) out.push_back(TreeParams{c, d});
            break;
        case ModelKind::lr:
            for (int it : lr_max_iter)
                for (double c : lr_c) out.push_back(LogisticParams{it, c});
            break;
        case ModelKind::rf:
            for (int n : rf_n_estimators)
                for (auto d : rf_max_depth) out.push_back(ForestParams{n, d});
            break;
        case ModelKind::ada:
            for (int n : ada_n_estimators) out.push_back(BoostParams{n});
            break;
    }
    return out;
}

void HyperParamGrid::validate() const {
    auto positive = [](const auto& v) {
        return !v.empty() && std::all_of(v.begin(), v.end(), [](auto x) { return x > 0; });
    };
    auto depths = [](const std::vector<std::optional<int>>& v) {
        return !v.empty() && std::all_of(v.begin(), v.end(), [](const auto& d) { return !d || *d > 0; });
    };
    if (!positive(svm_c) || !positive(svm_gamma) || !positive(knn_neighbors) || knn_weights.empty() ||
        knn_metric.empty() || dt_criterion.empty() || !depths(dt_max_depth) || !positive(lr_max_iter) ||
        !positive(lr_c) || !positive(rf_n_estimators) || !depths(rf_max_depth) || !positive(ada_n_estimators)) {
        throw Error("bad_grid", "hyper-parameter grid has an empty list or a non-positive value");
    }
}

TrainedModel fit_raw(const HyperParams& params, const MatrixXd& X, const LabelVector& y, std::uint64_t seed) {
    if (X.rows() != y.size() || X.rows() == 0) throw Error("bad_dataset", "empty or misaligned training data");
    require_two_classes(y);
    TrainedModel m;
    m.params = params;
    m.seed = seed;
    m.n_features = X.cols();
    std::visit(overloaded{
                   [&](const SvmParams& p) { m.state = detail::fit_svm(X, y, p); },
                   [&](const KnnParams&) { m.state = detail::fit_knn(X, y); },
                   [&](const TreeParams& p) { m.state = detail::fit_tree(X, y, p); },
                   [&](const LogisticParams& p) { m.state = detail::fit_logistic(X, y, p); },
                   [&](const ForestParams& p) { m.state = detail::fit_forest(X, y, p, seed); },
                   [&](const BoostParams& p) { m.state = detail::fit_boost(X, y, p); },
               },
               params);
    return m;
}

LabelVector predict(const TrainedModel& model, const MatrixXd& X) {
    if (X.cols() != model.n_features) {
        throw Error("dimension_mismatch", "model expects " + std::to_string(model.n_features) + " features, got " +
                                              std::to_string(X.cols()));
    }
    return std::visit(overloaded{
                          [&](const KnnState& s) { return detail::predict_knn(s, std::get<KnnParams>(model.params), X); },
                          [&](const TreeState& s) { return detail::predict_tree(s, X); },
                          [&](const LogisticState& s) { return detail::predict_logistic(s, X); },
                          [&](const SvmState& s) { return detail::predict_svm(s, X); },
                          [&](const ForestState& s) { return detail::predict_forest(s, X); },
                          [&](const BoostState& s) { return detail::predict_boost(s, X); },
                      },
                      model.state);
}

std::vector<int> stratified_folds(const LabelVector& y, int folds, std::uint64_t seed) {
    if (folds < 1) throw Error("bad_params", "folds must be >= 1");
    std::vector<int> fold(static_cast<std::size_t>(y.size()), 0);
    for (int cls : {0, 1}) {
        std::vector<Eigen::Index> idx;
        for (Eigen::Index i = 0; i < y.size(); ++i) {
            if (y[i] == cls) idx.push_back(i);
        }
        std::mt19937_64 rng(derive_seed(seed, cls));
        std::shuffle(idx.begin(), idx.end(), rng);
        for (std::size_t r = 0; r < idx.size(); ++r) fold[static_cast<std::size_t>(idx[r])] = static_cast<int>(r % folds);
    }
    return fold;
}

TrainedModel fit(ModelKind kind, const HyperParamGrid& grid, const MatrixXd& X, const LabelVector& y, int folds,
                 std::uint64_t seed, GridSearchInfo* info) {
    if (X.rows() != y.size() || X.rows() == 0) throw Error("bad_dataset", "empty or misaligned training data");
    require_two_classes(y);
    if (folds < 2) throw Error("bad_params", "cross-validation needs at least 2 folds");
    grid.validate();
    const auto points = grid.enumerate(kind);

    GridSearchInfo local;
    GridSearchInfo& gi = info ? *info : local;
    gi = {};
    const auto minority = static_cast<int>(std::min(y.count(), y.size() - y.count()));
    int k = folds;
    if (minority < folds) {
        k = minority;
        gi.warnings.push_back("minority class has " + std::to_string(minority) + " rows; folds reduced to " +
                              std::to_string(k));
    }
    gi.folds_used = k;
    gi.cv_f1.assign(points.size(), 0.0);

    if (k >= 2 && points.size() > 1) {
        const auto fold = stratified_folds(y, k, derive_seed(seed, 0xF01D));
        for (int f = 0; f < k; ++f) {
            std::vector<Eigen::Index> tr, va;
            for (Eigen::Index i = 0; i < y.size(); ++i) (fold[static_cast<std::size_t>(i)] == f ? va : tr).push_back(i);
            const MatrixXd Xtr = rows_of(X, tr), Xva = rows_of(X, va);
            const LabelVector ytr = rows_of(y, tr), yva = rows_of(y, va);
            std::map<KnnMetric, MatrixXd> dist_cache;
            for (std::size_t g = 0; g < points.size(); ++g) {
                LabelVector pred;
                if (const auto* kp = std::get_if<KnnParams>(&points[g])) {
                    auto it = dist_cache.find(kp->metric);
                    if (it == dist_cache.end()) {
                        it = dist_cache.emplace(kp->metric, pairwise_distances(Xva, Xtr, kp->metric)).first;
                    }
                    pred = knn_predict_from_distances(it->second, ytr, *kp);
                } else {
                    pred = predict(fit_raw(points[g], Xtr, ytr, derive_seed(seed, g, f)), Xva);
                }
                gi.cv_f1[g] += f1_of(yva, pred) / k;
            }
        }
    } else if (k < 2) {
        gi.warnings.push_back("too few minority rows for cross-validation; using the first grid point");
    }

    std::size_t best = 0;
    for (std::size_t g = 1; g < points.size(); ++g) {
        if (gi.cv_f1[g] > gi.cv_f1[best]) best = g;
    }
    gi.best_index = best;
    return fit_raw(points[best], X, y, seed);
}

TrainedModel fit(ModelKind kind, const HyperParamGrid& grid, const LabeledDataset& train, int folds,
                 std::uint64_t seed, GridSearchInfo* info) {
    return fit(kind, grid, train.X, train.y, folds, seed, info);
}

nlohmann::json to_json(const TrainedModel& m) {
    nlohmann::json j;
    j["format"] = kModelFormat;
    j["version"] = kModelFormatVersion;
    j["kind"] = to_string(m.kind());
    j["params"] = params_json(m.params);
    j["seed"] = m.seed;
    j["n_features"] = m.n_features;
    j["state"] = std::visit(
        overloaded{
            [](const KnnState& s) -> nlohmann::json { return {{"X", matrix_json(s.X)}, {"y", vector_json(s.y)}}; },
            [](const TreeState& s) -> nlohmann::json { return {{"nodes", tree_json(s)}}; },
            [](const LogisticState& s) -> nlohmann::json {
                return {{"w", vector_json(s.w)}, {"b", s.b}, {"iterations", s.iterations}};
            },
            [](const SvmState& s) -> nlohmann::json {
                return {{"support", matrix_json(s.support)}, {"coef", vector_json(s.coef)},
                        {"rho", s.rho},          {"gamma", s.gamma},
                        {"iterations", s.iterations}};
            },
            [](const ForestState& s) -> nlohmann::json {
                nlohmann::json trees = nlohmann::json::array();
                for (const auto& t : s.trees) trees.push_back(tree_json(t));
                return {{"trees", std::move(trees)}};
            },
            [](const BoostState& s) -> nlohmann::json {
                nlohmann::json stumps = nlohmann::json::array();
                for (const auto& t : s.stumps) stumps.push_back(tree_json(t));
                return {{"stumps", std::move(stumps)},
                        {"alphas", s.alphas},
                        {"errors", s.errors},
                        {"fallback_label", s.fallback_label}};
            },
        },
        m.state);
    return j;
}

TrainedModel model_from_json(const nlohmann::json& j) {
    if (j.value("format", std::string{}) != kModelFormat) throw VersionMismatch("not an evscout model");
    if (j.value("version", -1) != kModelFormatVersion) {
        throw VersionMismatch("model version " + std::to_string(j.value("version", -1)) + ", expected " +
                              std::to_string(kModelFormatVersion));
    }
    TrainedModel m;
    const ModelKind kind = model_kind_from_string(j.at("kind").get<std::string>());
    m.params = params_from(kind, j.at("params"));
    m.seed = j.at("seed").get<std::uint64_t>();
    m.n_features = j.at("n_features").get<Eigen::Index>();
    const auto& s = j.at("state");
    switch (kind) {
        case ModelKind::knn:
            m.state = KnnState{matrix_from(s.at("X")), vector_from<LabelVector>(s.at("y"))};
            break;
        case ModelKind::dt:
            m.state = tree_from(s.at("nodes"));
            break;
        case ModelKind::lr: {
            LogisticState st;
            st.w = vector_from<VectorXd>(s.at("w"));
            st.b = s.at("b").get<double>();
            st.iterations = s.at("iterations").get<int>();
            m.state = std::move(st);
            break;
        }
        case ModelKind::svm: {
            SvmState st;
            st.support = matrix_from(s.at("support"));
            st.coef = vector_from<VectorXd>(s.at("coef"));
            st.rho = s.at("rho").get<double>();
            st.gamma = s.at("gamma").get<double>();
            st.iterations = s.at("iterations").get<int>();
            m.state = std::move(st);
            break;
        }
        case ModelKind::rf: {
            ForestState st;
            for (const auto& t : s.at("trees")) st.trees.push_back(tree_from(t));
            m.state = std::move(st);
            break;
        }
        case ModelKind::ada: {
            BoostState st;
            for (const auto& t : s.at("stumps")) st.stumps.push_back(tree_from(t));
            st.alphas = s.at("alphas").get<std::vector<double>>();
            st.errors = s.at("errors").get<std::vector<double>>();
            st.fallback_label = s.at("fallback_label").get<int>();
            m.state = std::move(st);
            break;
        }
    }
    return m;
}

void persist(const TrainedModel& m, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw Error("unwritable_file", "cannot write '" + path.string() + "'");
    out << to_json(m).dump() << '\n';
}

TrainedModel load_model(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("unreadable_file", "cannot open '" + path.string() + "'");
    const auto j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded()) throw VersionMismatch("model file is not JSON");
    return model_from_json(j);
}

}  // namespace evscout
