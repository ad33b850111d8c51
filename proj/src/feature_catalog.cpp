#include "evscout/features.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

namespace evscout {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Linear interpolation between order statistics at q * (n - 1).
double quantile_sorted(const std::vector<double>& sorted, double q) {
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

double median_sorted(const std::vector<double>& sorted) { return quantile_sorted(sorted, 0.5); }

template <class Pred>
Eigen::Index longest_run(const Eigen::Ref<const VectorXd>& x, Pred pred) {
    Eigen::Index best = 0, cur = 0;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        cur = pred(x[i]) ? cur + 1 : 0;
        best = std::max(best, cur);
    }
    return best;
}

}  // namespace

const std::array<std::string_view, kSeriesFeatureCount>& series_feature_names() {
    static const std::array<std::string_view, kSeriesFeatureCount> names = {
        "mean", "median", "std", "variance", "minimum", "maximum", "range", "sum",
        "root_mean_square", "abs_energy", "mean_abs_change", "mean_change",
        "trend_slope", "trend_intercept", "trend_rvalue",
        "autocorr_lag_1", "autocorr_lag_2", "autocorr_lag_3", "autocorr_lag_4", "autocorr_lag_5",
        "quantile_0.05", "quantile_0.1", "quantile_0.25", "quantile_0.75", "quantile_0.9",
        "quantile_0.95", "skewness", "kurtosis",
        "count_above_mean", "count_below_mean", "longest_run_above_mean", "longest_run_below_mean",
        "local_maxima", "local_minima", "mean_crossings",
        "first_value", "last_value", "length", "index_of_max", "index_of_min",
        "mean_first_decile", "mean_last_decile", "histogram_entropy",
        "fft_abs_1", "fft_abs_2", "fft_abs_3", "fft_abs_4", "fft_abs_5",
        "fft_abs_6", "fft_abs_7", "fft_abs_8", "fft_abs_9", "fft_abs_10",
        "abs_second_diff_sum",
        "cid_ce", "ratio_beyond_1_sigma", "ratio_beyond_2_sigma", "c3_lag_1",
        "time_reversal_asymmetry_lag_1", "median_abs_deviation", "interquartile_range",
        "coefficient_of_variation", "mean_second_derivative_central", "number_peaks_3",
    };
    return names;
}

SeriesFeatures series_features(const Eigen::Ref<const VectorXd>& x) {
    const Eigen::Index n = x.size();
    if (n == 0) throw Error("empty_input", "cannot featurize an empty series");
    const double nd = static_cast<double>(n);

    std::array<double, kSeriesFeatureCount> f{};
    std::size_t k = 0;
    auto put = [&](double v) { f[k++] = v; };

    std::vector<double> sorted(x.data(), x.data() + n);
    std::sort(sorted.begin(), sorted.end());

    const double lo = sorted.front(), hi = sorted.back();
    // A constant series gets its exact value as mean so that every centred
    // statistic is exactly zero rather than rounding noise.
    const double mean = lo == hi ? lo : x.mean();
    const VectorXd centered = x.array() - mean;
    const double var = centered.squaredNorm() / nd;
    const double sd = std::sqrt(var);
    const VectorXd diff = n > 1 ? VectorXd(x.tail(n - 1) - x.head(n - 1)) : VectorXd();
    const VectorXd diff2 = n > 2 ? VectorXd(diff.tail(n - 2) - diff.head(n - 2)) : VectorXd();

    put(mean);
    put(median_sorted(sorted));
    put(sd);
    put(var);
    put(lo);
    put(hi);
    put(hi - lo);
    put(x.sum());
    put(std::sqrt(x.squaredNorm() / nd));
    put(x.squaredNorm());
    put(n > 1 ? diff.cwiseAbs().mean() : kNaN);
    put(n > 1 ? diff.mean() : kNaN);

    // Least squares against the sample index.
    if (n > 1) {
        const VectorXd idx = VectorXd::LinSpaced(n, 0.0, nd - 1.0);
        const VectorXd idx_c = idx.array() - idx.mean();
        const double sxx = idx_c.squaredNorm();
        const double sxy = idx_c.dot(centered);
        const double slope = sxy / sxx;
        put(slope);
        put(mean - slope * idx.mean());
        put(var > 0.0 ? sxy / std::sqrt(sxx * centered.squaredNorm()) : kNaN);
    } else {
        put(kNaN);
        put(kNaN);
        put(kNaN);
    }

    for (Eigen::Index lag = 1; lag <= 5; ++lag) {
        if (n <= lag || var <= 0.0) {
            put(kNaN);
            continue;
        }
        const double acc = centered.head(n - lag).dot(centered.tail(n - lag));
        put(acc / (static_cast<double>(n - lag) * var));
    }

    for (double q : {0.05, 0.1, 0.25, 0.75, 0.9, 0.95}) put(quantile_sorted(sorted, q));

    if (var > 0.0) {
        put(centered.array().cube().mean() / std::pow(var, 1.5));
        put(centered.array().square().square().mean() / (var * var) - 3.0);
    } else {
        put(kNaN);
        put(kNaN);
    }

    put(static_cast<double>((x.array() > mean).count()));
    put(static_cast<double>((x.array() < mean).count()));
    put(static_cast<double>(longest_run(x, [mean](double v) { return v > mean; })));
    put(static_cast<double>(longest_run(x, [mean](double v) { return v < mean; })));

    Eigen::Index maxima = 0, minima = 0, crossings = 0;
    for (Eigen::Index i = 1; i + 1 < n; ++i) {
        maxima += (x[i] > x[i - 1] && x[i] > x[i + 1]);
        minima += (x[i] < x[i - 1] && x[i] < x[i + 1]);
    }
    for (Eigen::Index i = 1; i < n; ++i) crossings += ((x[i - 1] > mean) != (x[i] > mean));
    put(static_cast<double>(maxima));
    put(static_cast<double>(minima));
    put(static_cast<double>(crossings));

    put(x[0]);
    put(x[n - 1]);
    put(nd);
    Eigen::Index imax = 0, imin = 0;
    x.maxCoeff(&imax);
    x.minCoeff(&imin);
    put(static_cast<double>(imax));
    put(static_cast<double>(imin));

    const Eigen::Index decile = std::max<Eigen::Index>(1, (n + 9) / 10);
    put(x.head(decile).mean());
    put(x.tail(decile).mean());

    double entropy = 0.0;
    if (hi > lo) {
        std::array<Eigen::Index, 10> bins{};
        for (Eigen::Index i = 0; i < n; ++i) {
            auto b = static_cast<std::size_t>(std::floor((x[i] - lo) / (hi - lo) * 10.0));
            ++bins[std::min<std::size_t>(b, 9)];
        }
        for (Eigen::Index c : bins) {
            if (c == 0) continue;
            const double p = static_cast<double>(c) / nd;
            entropy -= p * std::log(p);
        }
    }
    put(entropy);

    for (Eigen::Index freq = 1; freq <= 10; ++freq) {
        if (freq > n / 2) {
            put(0.0);
            continue;
        }
        double re = 0.0, im = 0.0;
        for (Eigen::Index t = 0; t < n; ++t) {
            const double angle = 2.0 * std::numbers::pi * static_cast<double>(freq * t) / nd;
            re += x[t] * std::cos(angle);
            im -= x[t] * std::sin(angle);
        }
        put(std::hypot(re, im));
    }

    put(n > 2 ? diff2.cwiseAbs().sum() : 0.0);

    put(n > 1 ? diff.norm() : 0.0);
    put(sd > 0.0 ? static_cast<double>((centered.array().abs() > sd).count()) / nd : 0.0);
    put(sd > 0.0 ? static_cast<double>((centered.array().abs() > 2.0 * sd).count()) / nd : 0.0);
    if (n > 2) {
        const auto a = x.head(n - 2).array();
        const auto b = x.segment(1, n - 2).array();
        const auto c = x.tail(n - 2).array();
        put((c * b * a).mean());
        put((c.square() * b - b * a.square()).mean());
    } else {
        put(kNaN);
        put(kNaN);
    }
    {
        std::vector<double> dev(sorted.size());
        const double med = median_sorted(sorted);
        std::transform(sorted.begin(), sorted.end(), dev.begin(),
                       [med](double v) { return std::abs(v - med); });
        std::sort(dev.begin(), dev.end());
        put(median_sorted(dev));
    }
    put(quantile_sorted(sorted, 0.75) - quantile_sorted(sorted, 0.25));
    put(mean != 0.0 ? sd / mean : kNaN);
    put(n > 2 ? 0.5 * diff2.mean() : kNaN);

    constexpr Eigen::Index support = 3;
    Eigen::Index peaks = 0;
    for (Eigen::Index i = support; i + support < n; ++i) {
        bool peak = true;
        for (Eigen::Index j = 1; j <= support && peak; ++j) {
            peak = x[i] > x[i - j] && x[i] > x[i + j];
        }
        peaks += peak;
    }
    put(static_cast<double>(peaks));

    assert(k == kSeriesFeatureCount);
    SeriesFeatures out;
    for (std::size_t i = 0; i < kSeriesFeatureCount; ++i) {
        if (!std::isfinite(f[i])) {
            out.values[i] = 0.0;
            out.replaced.set(i);
        } else {
            out.values[i] = f[i];
        }
    }
    return out;
}

}  // namespace evscout
