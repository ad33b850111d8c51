#include "models.hpp"

#include <cmath>

namespace evscout {

namespace {

// log(1 + exp(-m)) without overflow.
double log_loss_margin(double m) { return std::max(-m, 0.0) + std::log1p(std::exp(-std::abs(m))); }

double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

}  // namespace

double logistic_objective(const MatrixXd& X, const LabelVector& y, const VectorXd& w, double b, double c) {
    const double n = static_cast<double>(X.rows());
    const VectorXd z = (X * w).array() + b;
    double loss = 0.0;
    for (Eigen::Index i = 0; i < z.size(); ++i) loss += log_loss_margin(y[i] == 1 ? z[i] : -z[i]);
    return loss / n + w.squaredNorm() / (2.0 * c * n);
}

namespace detail {

// Full-batch gradient descent with step 1/L, where L bounds the gradient's
// Lipschitz constant: 0.25 * lambda_max([X 1]^T [X 1]) / n + 1 / (c n).
LogisticState fit_logistic(const MatrixXd& X, const LabelVector& y, const LogisticParams& p) {
    if (X.rows() != y.size() || X.rows() == 0) throw Error("bad_dataset", "empty or misaligned training data");
    if (!(p.c > 0.0) || p.max_iter < 1) throw Error("bad_params", "logistic regression needs c > 0, max_iter >= 1");
    const Eigen::Index n = X.rows(), d = X.cols();
    const double nd = static_cast<double>(n);

    Eigen::MatrixXd Xa(n, d + 1);
    Xa.leftCols(d) = X;
    Xa.col(d).setOnes();
    const Eigen::MatrixXd gram = Xa.transpose() * Xa;
    const double lambda_max = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(gram, Eigen::EigenvaluesOnly)
                                  .eigenvalues()
                                  .maxCoeff();
    const double lipschitz = 0.25 * lambda_max / nd + 1.0 / (p.c * nd);
    const double step = 1.0 / lipschitz;
    const Eigen::VectorXd target = y.cast<double>();

    LogisticState s;
    s.w = VectorXd::Zero(d);
    double prev = logistic_objective(X, y, s.w, s.b, p.c);
    for (int it = 0; it < p.max_iter; ++it) {
        const VectorXd z = (X * s.w).array() + s.b;
        Eigen::VectorXd residual(n);
        for (Eigen::Index i = 0; i < n; ++i) residual[i] = sigmoid(z[i]) - target[i];
        const Eigen::VectorXd grad_w = X.transpose() * residual / nd + s.w / (p.c * nd);
        const double grad_b = residual.sum() / nd;
        s.w -= step * grad_w;
        s.b -= step * grad_b;
        s.iterations = it + 1;
        const double cur = logistic_objective(X, y, s.w, s.b, p.c);
        s.loss_history.push_back(cur);
        if (std::abs(prev - cur) < p.tolerance) break;
        prev = cur;
    }
    return s;
}

LabelVector predict_logistic(const LogisticState& s, const MatrixXd& X) {
    const VectorXd z = (X * s.w).array() + s.b;
    return (z.array() > 0.0).cast<int>();
}

}  // namespace detail
}  // namespace evscout
