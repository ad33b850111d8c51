#pragma once

// Per-kind fit/predict pairs behind the dispatch in classifiers.cpp.

#include "evscout/classifiers.hpp"

namespace evscout::detail {

KnnState fit_knn(const MatrixXd& X, const LabelVector& y);
LabelVector predict_knn(const KnnState& s, const KnnParams& p, const MatrixXd& X);

TreeState fit_tree(const MatrixXd& X, const LabelVector& y, const TreeParams& p);
LabelVector predict_tree(const TreeState& s, const MatrixXd& X);

ForestState fit_forest(const MatrixXd& X, const LabelVector& y, const ForestParams& p, std::uint64_t seed);
LabelVector predict_forest(const ForestState& s, const MatrixXd& X);

BoostState fit_boost(const MatrixXd& X, const LabelVector& y, const BoostParams& p);
LabelVector predict_boost(const BoostState& s, const MatrixXd& X);

LogisticState fit_logistic(const MatrixXd& X, const LabelVector& y, const LogisticParams& p);
LabelVector predict_logistic(const LogisticState& s, const MatrixXd& X);

SvmState fit_svm(const MatrixXd& X, const LabelVector& y, const SvmParams& p);
LabelVector predict_svm(const SvmState& s, const MatrixXd& X);
VectorXd svm_decision(const SvmState& s, const MatrixXd& X);

}  // namespace evscout::detail
