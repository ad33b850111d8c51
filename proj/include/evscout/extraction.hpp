#pragma once

#include "evscout/common.hpp"
#include "evscout/data_model.hpp"

#include <algorithm>
#include <optional>
#include <vector>

namespace evscout {

struct TailParams {
    int n_avg = 25;
    double epsilon = 0.01;       // backward-ascending slack, amperes
    int t_max = 10;              // consecutive descending samples tolerated
    double zero_threshold = 0.1; // filtered values below this count as zero
    int min_tail_len = 25;

    /// Throws Error{"bad_params"} when an invariant is violated.
    void validate() const;
};

/// Constant-voltage tail cut from the filtered series, indices
/// [t_start - length, t_start] inclusive.
struct Tail {
    VectorXd current;
    VectorXd pilot;
    Eigen::Index t_start = 0;
    Eigen::Index length = 0;

    Eigen::Index begin() const noexcept { return t_start - length; }
};

/// Pilot minus moving-median current over the constant-current phase.
struct DeltaSeries {
    VectorXd values;
    int window = 25;
};

/// Trailing moving average. Output index t averages the samples in
/// [t - n_avg + 1, t]; the first n_avg - 1 outputs average what is available.
template <class Derived>
Vec<typename Derived::Scalar> moving_average(const Eigen::MatrixBase<Derived>& ts, int n_avg) {
    using Scalar = typename Derived::Scalar;
    if (ts.size() == 0) throw Error("empty_input", "moving_average: empty input");
    if (n_avg < 1) throw Error("bad_params", "moving_average: n_avg must be >= 1");
    const Eigen::Index n = ts.size();
    Vec<Scalar> out(n);
    for (Eigen::Index t = 0; t < n; ++t) {
        const Eigen::Index lo = std::max<Eigen::Index>(0, t - n_avg + 1);
        out[t] = ts.derived().segment(lo, t - lo + 1).mean();
    }
    return out;
}

/// Median of ts over [t - floor(n/2), t + ceil(n/2)], clipped to the array.
/// An even count yields the mean of the two middle values.
template <class Derived>
typename Derived::Scalar moving_median(const Eigen::MatrixBase<Derived>& ts, Eigen::Index t,
                                       int n_avg) {
    using Scalar = typename Derived::Scalar;
    const Eigen::Index n = ts.size();
    if (t < 0 || t >= n) throw Error("bad_index", "moving_median: index out of range");
    const Eigen::Index lo = std::max<Eigen::Index>(0, t - n_avg / 2);
    const Eigen::Index hi = std::min<Eigen::Index>(n - 1, t + (n_avg + 1) / 2);
    std::vector<Scalar> window(static_cast<std::size_t>(hi - lo + 1));
    for (Eigen::Index i = lo; i <= hi; ++i) window[static_cast<std::size_t>(i - lo)] = ts[i];
    const auto mid = window.begin() + static_cast<std::ptrdiff_t>(window.size() / 2);
    std::nth_element(window.begin(), mid, window.end());
    if (window.size() % 2 == 1) return *mid;
    const Scalar upper = *mid;
    const Scalar lower = *std::max_element(window.begin(), mid);
    return (lower + upper) / Scalar(2);
}

/// First index of the trailing run of values below zero_threshold, if that
/// run reaches the end of the series.
template <class Derived>
std::optional<Eigen::Index> find_t_start(const Eigen::MatrixBase<Derived>& filtered,
                                         double zero_threshold) {
    const Eigen::Index n = filtered.size();
    if (n == 0) return std::nullopt;
    Eigen::Index i = n;
    while (i > 0 && filtered[i - 1] < zero_threshold) --i;
    if (i == n) return std::nullopt;
    return i;
}

/// Backward walk from t_start; returns the tail length s.
Eigen::Index tail_length(const VectorXd& filtered_current, Eigen::Index t_start,
                         const TailParams& params);

std::optional<Tail> extract_tail(const ChargingSession& session, const TailParams& params);

/// Delta values for every index in [0, tail_begin). tail_begin == 0 -> Error.
DeltaSeries compute_delta(const ChargingSession& session, Eigen::Index tail_begin, int n_avg);

}  // namespace evscout
