#include "evscout/metrics.hpp"

#include <cmath>

namespace evscout {

namespace {

double ratio(std::int64_t num, std::int64_t den) {
    return den > 0 ? static_cast<double>(num) / static_cast<double>(den) : 0.0;
}

}  // namespace

Confusion tally(const LabelVector& truth, const LabelVector& predicted) {
    if (truth.size() != predicted.size()) throw Error("size_mismatch", "truth and prediction lengths differ");
    Confusion c;
    for (Eigen::Index i = 0; i < truth.size(); ++i) {
        const bool t = truth[i] == 1, p = predicted[i] == 1;
        if (t && p) ++c.tp;
        else if (!t && !p) ++c.tn;
        else if (p) ++c.fp;
        else ++c.fn;
    }
    return c;
}

Metrics compute_metrics(const Confusion& c) {
    if (c.tp < 0 || c.tn < 0 || c.fp < 0 || c.fn < 0) throw Error("bad_counts", "negative confusion count");
    if (c.total() == 0) throw Error("bad_counts", "all confusion counts are zero");
    Metrics m;
    m.precision = ratio(c.tp, c.tp + c.fp);
    m.recall = ratio(c.tp, c.tp + c.fn);
    m.specificity = ratio(c.tn, c.fp + c.tn);
    // 2PR / (P + R) in count form; zero when P + R = 0.
    m.f1 = ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn);
    m.g_mean = std::sqrt(m.specificity * m.recall);
    return m;
}

}  // namespace evscout
