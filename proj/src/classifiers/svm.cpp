#include "models.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace evscout {
namespace detail {

namespace {

constexpr double kTau = 1e-12;

Eigen::MatrixXd rbf_kernel(const MatrixXd& A, const MatrixXd& B, double gamma) {
    Eigen::MatrixXd K(A.rows(), B.rows());
    for (Eigen::Index i = 0; i < A.rows(); ++i) {
        K.row(i) = (-gamma * (B.rowwise() - A.row(i)).rowwise().squaredNorm()).array().exp().transpose();
    }
    return K;
}

}  // namespace

// Soft-margin dual solved by maximal-violating-pair SMO:
//   min 0.5 a^T Q a - e^T a,  0 <= a <= C,  s^T a = 0,  Q_ij = s_i s_j K_ij.
SvmState fit_svm(const MatrixXd& X, const LabelVector& y, const SvmParams& p) {
    if (X.rows() != y.size() || X.rows() == 0) throw Error("bad_dataset", "empty or misaligned training data");
    if (!(p.c > 0.0) || !(p.gamma > 0.0)) throw Error("bad_params", "SVM needs c > 0 and gamma > 0");
    const Eigen::Index n = X.rows();
    const double C = p.c;
    Eigen::VectorXd s(n);
    for (Eigen::Index i = 0; i < n; ++i) s[i] = y[i] == 1 ? 1.0 : -1.0;
    const Eigen::MatrixXd K = rbf_kernel(X, X, p.gamma);
    const Eigen::MatrixXd Q = (s * s.transpose()).cwiseProduct(K);

    Eigen::VectorXd alpha = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd G = Eigen::VectorXd::Constant(n, -1.0);
    auto is_upper = [&](Eigen::Index t) { return alpha[t] >= C; };
    auto is_lower = [&](Eigen::Index t) { return alpha[t] <= 0.0; };

    const long max_iter = std::max<long>(10'000'000L, 100L * n);
    SvmState state;
    state.gamma = p.gamma;
    for (long iter = 0; iter < max_iter; ++iter) {
        double gmax = -std::numeric_limits<double>::infinity();
        double gmax2 = -std::numeric_limits<double>::infinity();
        Eigen::Index i = -1, j = -1;
        for (Eigen::Index t = 0; t < n; ++t) {
            if (s[t] > 0) {
                if (!is_upper(t) && -G[t] > gmax) gmax = -G[t], i = t;
                if (!is_lower(t) && G[t] > gmax2) gmax2 = G[t], j = t;
            } else {
                if (!is_lower(t) && G[t] > gmax) gmax = G[t], i = t;
                if (!is_upper(t) && -G[t] > gmax2) gmax2 = -G[t], j = t;
            }
        }
        state.iterations = static_cast<int>(iter);
        if (i < 0 || j < 0 || gmax + gmax2 < p.tolerance) break;

        const double ai = alpha[i], aj = alpha[j];
        if (s[i] != s[j]) {
            double quad = Q(i, i) + Q(j, j) + 2.0 * Q(i, j);
            if (quad <= 0.0) quad = kTau;
            const double delta = (-G[i] - G[j]) / quad;
            const double diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if (diff > 0.0) {
                if (alpha[j] < 0.0) alpha[j] = 0.0, alpha[i] = diff;
            } else {
                if (alpha[i] < 0.0) alpha[i] = 0.0, alpha[j] = -diff;
            }
            if (diff > 0.0) {
                if (alpha[i] > C) alpha[i] = C, alpha[j] = C - diff;
            } else {
                if (alpha[j] > C) alpha[j] = C, alpha[i] = C + diff;
            }
        } else {
            double quad = Q(i, i) + Q(j, j) - 2.0 * Q(i, j);
            if (quad <= 0.0) quad = kTau;
            const double delta = (G[i] - G[j]) / quad;
            const double sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if (sum > C) {
                if (alpha[i] > C) alpha[i] = C, alpha[j] = sum - C;
            } else {
                if (alpha[j] < 0.0) alpha[j] = 0.0, alpha[i] = sum;
            }
            if (sum > C) {
                if (alpha[j] > C) alpha[j] = C, alpha[i] = sum - C;
            } else {
                if (alpha[i] < 0.0) alpha[i] = 0.0, alpha[j] = sum;
            }
        }
        const double di = alpha[i] - ai, dj = alpha[j] - aj;
        G += Q.col(i) * di + Q.col(j) * dj;
    }

    // Offset from free vectors, or the midpoint of the feasible interval.
    double ub = std::numeric_limits<double>::infinity(), lb = -ub, sum_free = 0.0;
    int n_free = 0;
    for (Eigen::Index t = 0; t < n; ++t) {
        const double yg = s[t] * G[t];
        if (is_upper(t)) {
            if (s[t] < 0) ub = std::min(ub, yg); else lb = std::max(lb, yg);
        } else if (is_lower(t)) {
            if (s[t] > 0) ub = std::min(ub, yg); else lb = std::max(lb, yg);
        } else {
            ++n_free;
            sum_free += yg;
        }
    }
    state.rho = n_free > 0 ? sum_free / n_free : (ub + lb) / 2.0;

    Eigen::Index n_sv = 0;
    for (Eigen::Index t = 0; t < n; ++t) n_sv += alpha[t] > 0.0;
    state.support.resize(n_sv, X.cols());
    state.coef.resize(n_sv);
    for (Eigen::Index t = 0, k = 0; t < n; ++t) {
        if (alpha[t] <= 0.0) continue;
        state.support.row(k) = X.row(t);
        state.coef[k++] = alpha[t] * s[t];
    }
    return state;
}

VectorXd svm_decision(const SvmState& s, const MatrixXd& X) {
    if (s.support.rows() == 0) return VectorXd::Constant(X.rows(), -s.rho);
    return (rbf_kernel(X, s.support, s.gamma) * s.coef).array() - s.rho;
}

LabelVector predict_svm(const SvmState& s, const MatrixXd& X) {
    return (svm_decision(s, X).array() > 0.0).cast<int>();
}

}  // namespace detail
}  // namespace evscout
