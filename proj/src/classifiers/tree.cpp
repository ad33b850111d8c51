#include "models.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace evscout {

namespace {

double impurity(double w0, double w1, SplitCriterion c) {
    const double w = w0 + w1;
    if (w <= 0.0) return 0.0;
    const double p0 = w0 / w, p1 = w1 / w;
    if (c == SplitCriterion::gini) return 1.0 - p0 * p0 - p1 * p1;
    double h = 0.0;
    if (p0 > 0.0) h -= p0 * std::log2(p0);
    if (p1 > 0.0) h -= p1 * std::log2(p1);
    return h;
}

double split_threshold(double a, double b) {
    const double mid = a + (b - a) / 2.0;
    return mid < b ? mid : a;
}

struct Split {
    int feature = -1;
    double threshold = 0.0;
    double gain = -1.0;
};

/// Scans one feature's samples in ascending value order for the best split.
template <class Seq>
void scan_feature(const MatrixXd& X, const LabelVector& y, const VectorXd& w, const Seq& sorted, int f,
                  double w0, double w1, double parent, SplitCriterion crit, Split& best) {
    double l0 = 0.0, l1 = 0.0;
    const double total = w0 + w1;
    for (std::size_t r = 0; r + 1 < sorted.size(); ++r) {
        const Eigen::Index i = sorted[r];
        (y[i] == 1 ? l1 : l0) += w[i];
        const double a = X(i, f), b = X(sorted[r + 1], f);
        if (!(a < b)) continue;
        const double lw = l0 + l1, rw = total - lw;
        const double child = (lw * impurity(l0, l1, crit) + rw * impurity(w0 - l0, w1 - l1, crit)) / total;
        const double gain = parent - child;
        if (gain > best.gain) best = {f, split_threshold(a, b), gain};
    }
}

class Grower {
public:
    Grower(const MatrixXd& X, const LabelVector& y, const VectorXd& w, const TreeParams& p,
           int max_features, std::uint64_t seed)
        : X_(X), y_(y), w_(w), p_(p), max_features_(max_features), rng_(seed) {}

    TreeState grow() {
        std::vector<Eigen::Index> idx;
        for (Eigen::Index i = 0; i < X_.rows(); ++i) {
            if (w_[i] > 0.0) idx.push_back(i);
        }
        build(idx, 0);
        return std::move(tree_);
    }

private:
    int build(std::vector<Eigen::Index>& idx, int depth) {
        double w0 = 0.0, w1 = 0.0;
        for (Eigen::Index i : idx) (y_[i] == 1 ? w1 : w0) += w_[i];
        const int node = static_cast<int>(tree_.nodes.size());
        tree_.nodes.push_back({});
        tree_.nodes[static_cast<std::size_t>(node)].label = w1 > w0 ? 1 : 0;

        const bool depth_done = p_.max_depth && depth >= *p_.max_depth;
        if (w0 == 0.0 || w1 == 0.0 || idx.size() < 2 || depth_done) return node;

        const double parent = impurity(w0, w1, p_.criterion);
        Split best;
        std::vector<Eigen::Index> sorted(idx);
        for (int f : candidate_features()) {
            std::stable_sort(sorted.begin(), sorted.end(),
                             [&](Eigen::Index a, Eigen::Index b) { return X_(a, f) < X_(b, f); });
            scan_feature(X_, y_, w_, sorted, f, w0, w1, parent, p_.criterion, best);
        }
        if (best.feature < 0) return node;

        std::vector<Eigen::Index> left, right;
        for (Eigen::Index i : idx) (X_(i, best.feature) <= best.threshold ? left : right).push_back(i);
        idx.clear();
        idx.shrink_to_fit();
        const int l = build(left, depth + 1);
        const int r = build(right, depth + 1);
        auto& n = tree_.nodes[static_cast<std::size_t>(node)];
        n.feature = best.feature;
        n.threshold = best.threshold;
        n.left = l;
        n.right = r;
        return node;
    }

    std::vector<int> candidate_features() {
        const int d = static_cast<int>(X_.cols());
        std::vector<int> f(static_cast<std::size_t>(d));
        std::iota(f.begin(), f.end(), 0);
        if (max_features_ > 0 && max_features_ < d) {
            std::shuffle(f.begin(), f.end(), rng_);
            f.resize(static_cast<std::size_t>(max_features_));
            std::sort(f.begin(), f.end());
        }
        return f;
    }

    const MatrixXd& X_;
    const LabelVector& y_;
    const VectorXd& w_;
    TreeParams p_;
    int max_features_;
    std::mt19937_64 rng_;
    TreeState tree_;
};

void require_fit_input(const MatrixXd& X, const LabelVector& y) {
    if (X.rows() != y.size() || X.rows() == 0) throw Error("bad_dataset", "empty or misaligned training data");
}

}  // namespace

int TreeState::predict_row(const Eigen::Ref<const VectorXd>& x) const {
    int i = 0;
    while (nodes[static_cast<std::size_t>(i)].feature >= 0) {
        const Node& n = nodes[static_cast<std::size_t>(i)];
        i = x[n.feature] <= n.threshold ? n.left : n.right;
    }
    return nodes[static_cast<std::size_t>(i)].label;
}

int TreeState::depth() const {
    std::vector<int> depth(nodes.size(), 0);
    int best = 0;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        const Node& n = nodes[i];
        if (n.feature < 0) continue;
        depth[static_cast<std::size_t>(n.left)] = depth[static_cast<std::size_t>(n.right)] = depth[i] + 1;
        best = std::max(best, depth[i] + 1);
    }
    return best;
}

TreeState grow_tree(const MatrixXd& X, const LabelVector& y, const VectorXd& weights, const TreeParams& params,
                    int max_features, std::uint64_t seed) {
    require_fit_input(X, y);
    if (weights.size() != y.size()) throw Error("bad_dataset", "weight count differs from row count");
    return Grower(X, y, weights, params, max_features, seed).grow();
}

TreeState fit_stump(const MatrixXd& X, const LabelVector& y, const VectorXd& weights,
                    const std::vector<std::vector<Eigen::Index>>& order) {
    double w0 = 0.0, w1 = 0.0;
    for (Eigen::Index i = 0; i < y.size(); ++i) (y[i] == 1 ? w1 : w0) += weights[i];
    TreeState t;
    t.nodes.push_back({});
    t.nodes[0].label = w1 > w0 ? 1 : 0;
    if (w0 == 0.0 || w1 == 0.0 || y.size() < 2) return t;

    const double parent = impurity(w0, w1, SplitCriterion::gini);
    Split best;
    for (int f = 0; f < static_cast<int>(X.cols()); ++f) {
        scan_feature(X, y, weights, order[static_cast<std::size_t>(f)], f, w0, w1, parent,
                     SplitCriterion::gini, best);
    }
    if (best.feature < 0) return t;

    double l0 = 0.0, l1 = 0.0, r0 = 0.0, r1 = 0.0;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        const bool left = X(i, best.feature) <= best.threshold;
        (y[i] == 1 ? (left ? l1 : r1) : (left ? l0 : r0)) += weights[i];
    }
    t.nodes[0].feature = best.feature;
    t.nodes[0].threshold = best.threshold;
    t.nodes[0].left = 1;
    t.nodes[0].right = 2;
    TreeState::Node left, right;
    left.label = l1 > l0 ? 1 : 0;
    right.label = r1 > r0 ? 1 : 0;
    t.nodes.push_back(left);
    t.nodes.push_back(right);
    return t;
}

namespace detail {

TreeState fit_tree(const MatrixXd& X, const LabelVector& y, const TreeParams& p) {
    return grow_tree(X, y, VectorXd::Ones(y.size()), p, 0, 0);
}

LabelVector predict_tree(const TreeState& s, const MatrixXd& X) {
    LabelVector out(X.rows());
    for (Eigen::Index i = 0; i < X.rows(); ++i) out[i] = s.predict_row(X.row(i).transpose());
    return out;
}

ForestState fit_forest(const MatrixXd& X, const LabelVector& y, const ForestParams& p, std::uint64_t seed) {
    require_fit_input(X, y);
    const Eigen::Index n = X.rows();
    const int max_features = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(X.cols()))));
    ForestState forest;
    forest.trees.reserve(static_cast<std::size_t>(p.n_estimators));
    for (int t = 0; t < p.n_estimators; ++t) {
        std::mt19937_64 rng(derive_seed(seed, t, 0));
        std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
        VectorXd counts = VectorXd::Zero(n);
        for (Eigen::Index k = 0; k < n; ++k) counts[pick(rng)] += 1.0;
        forest.trees.push_back(grow_tree(X, y, counts, TreeParams{SplitCriterion::gini, p.max_depth},
                                         max_features, derive_seed(seed, t, 1)));
    }
    return forest;
}

LabelVector predict_forest(const ForestState& s, const MatrixXd& X) {
    LabelVector out(X.rows());
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        const VectorXd row = X.row(i).transpose();
        std::size_t ones = 0;
        for (const auto& t : s.trees) ones += static_cast<std::size_t>(t.predict_row(row));
        out[i] = 2 * ones > s.trees.size() ? 1 : 0;
    }
    return out;
}

BoostState fit_boost(const MatrixXd& X, const LabelVector& y, const BoostParams& p) {
    require_fit_input(X, y);
    const Eigen::Index n = X.rows();
    std::vector<std::vector<Eigen::Index>> order(static_cast<std::size_t>(X.cols()));
    for (Eigen::Index f = 0; f < X.cols(); ++f) {
        auto& o = order[static_cast<std::size_t>(f)];
        o.resize(static_cast<std::size_t>(n));
        std::iota(o.begin(), o.end(), Eigen::Index{0});
        std::stable_sort(o.begin(), o.end(), [&](Eigen::Index a, Eigen::Index b) { return X(a, f) < X(b, f); });
    }

    BoostState s;
    s.fallback_label = 2 * y.count() > n ? 1 : 0;
    VectorXd w = VectorXd::Constant(n, 1.0 / static_cast<double>(n));
    for (int round = 0; round < p.n_estimators; ++round) {
        TreeState stump = fit_stump(X, y, w, order);
        const LabelVector h = predict_tree(stump, X);
        double err = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            if (h[i] != y[i]) err += w[i];
        }
        err /= w.sum();
        if (err >= 0.5) break;
        if (err <= 0.0) {
            s.stumps.push_back(std::move(stump));
            s.alphas.push_back(1.0);
            s.errors.push_back(0.0);
            break;
        }
        const double alpha = 0.5 * std::log((1.0 - err) / err);
        for (Eigen::Index i = 0; i < n; ++i) w[i] *= std::exp(h[i] != y[i] ? alpha : -alpha);
        w /= w.sum();
        s.stumps.push_back(std::move(stump));
        s.alphas.push_back(alpha);
        s.errors.push_back(err);
    }
    return s;
}

LabelVector predict_boost(const BoostState& s, const MatrixXd& X) {
    LabelVector out(X.rows());
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        if (s.stumps.empty()) {
            out[i] = s.fallback_label;
            continue;
        }
        const VectorXd row = X.row(i).transpose();
        double score = 0.0;
        for (std::size_t k = 0; k < s.stumps.size(); ++k) {
            score += s.alphas[k] * (s.stumps[k].predict_row(row) == 1 ? 1.0 : -1.0);
        }
        out[i] = score > 0.0 ? 1 : 0;
    }
    return out;
}

}  // namespace detail
}  // namespace evscout
