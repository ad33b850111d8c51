#include "models.hpp"

#include <algorithm>
#include <numeric>

namespace evscout {

MatrixXd pairwise_distances(const MatrixXd& queries, const MatrixXd& train, KnnMetric metric) {
    if (queries.cols() != train.cols()) throw Error("dimension_mismatch", "query and train widths differ");
    MatrixXd d(queries.rows(), train.rows());
    for (Eigen::Index i = 0; i < queries.rows(); ++i) {
        if (metric == KnnMetric::euclidean) {
            d.row(i) = (train.rowwise() - queries.row(i)).rowwise().norm().transpose();
        } else {
            d.row(i) = (train.rowwise() - queries.row(i)).cwiseAbs().rowwise().sum().transpose();
        }
    }
    return d;
}

LabelVector knn_predict_from_distances(const MatrixXd& distances, const LabelVector& train_y,
                                       const KnnParams& p) {
    const Eigen::Index n_train = distances.cols();
    if (n_train != train_y.size()) throw Error("dimension_mismatch", "distance matrix and labels differ");
    if (n_train == 0) throw Error("empty_model", "kNN has no training points");
    const auto k = static_cast<std::size_t>(std::clamp<Eigen::Index>(p.n_neighbors, 1, n_train));

    LabelVector out(distances.rows());
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n_train));
    for (Eigen::Index q = 0; q < distances.rows(); ++q) {
        std::iota(order.begin(), order.end(), Eigen::Index{0});
        std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                          [&](Eigen::Index a, Eigen::Index b) {
                              const double da = distances(q, a), db = distances(q, b);
                              return da < db || (da == db && a < b);
                          });
        double votes[2] = {0.0, 0.0};
        const bool exact = p.weights == KnnWeights::distance && distances(q, order[0]) == 0.0;
        for (std::size_t r = 0; r < k; ++r) {
            const Eigen::Index i = order[r];
            const double d = distances(q, i);
            double w = 1.0;
            if (p.weights == KnnWeights::distance) {
                if (exact) {
                    w = d == 0.0 ? 1.0 : 0.0;
                } else {
                    w = 1.0 / d;
                }
            }
            votes[train_y[i] == 1 ? 1 : 0] += w;
        }
        out[q] = votes[1] > votes[0] ? 1 : 0;
    }
    return out;
}

namespace detail {

KnnState fit_knn(const MatrixXd& X, const LabelVector& y) { return KnnState{X, y}; }

LabelVector predict_knn(const KnnState& s, const KnnParams& p, const MatrixXd& X) {
    return knn_predict_from_distances(pairwise_distances(X, s.X, p.metric), s.y, p);
}

}  // namespace detail
}  // namespace evscout
