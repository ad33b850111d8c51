#pragma once

#include "evscout/common.hpp"

#include <cstdint>

namespace evscout {

struct Confusion {
    std::int64_t tp = 0, tn = 0, fp = 0, fn = 0;

    std::int64_t total() const noexcept { return tp + tn + fp + fn; }
    Confusion& operator+=(const Confusion& o) noexcept {
        tp += o.tp;
        tn += o.tn;
        fp += o.fp;
        fn += o.fn;
        return *this;
    }
};

/// Tallies predictions against truth; both hold 0/1 labels.
Confusion tally(const LabelVector& truth, const LabelVector& predicted);

/// Metrics of one confusion matrix. Zero denominators give 0 (precision,
/// recall, specificity, F1) by convention.
struct Metrics {
    double precision = 0.0;
    double recall = 0.0;
    double specificity = 0.0;
    double f1 = 0.0;
    double g_mean = 0.0;
};

/// All-zero counts or negative counts -> Error.
Metrics compute_metrics(const Confusion& c);

}  // namespace evscout
