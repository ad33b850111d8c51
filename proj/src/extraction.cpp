#include "evscout/extraction.hpp"

namespace evscout {

void TailParams::validate() const {
    if (n_avg < 1) throw Error("bad_params", "n_avg must be >= 1");
    if (!(epsilon > 0.0)) throw Error("bad_params", "epsilon must be > 0");
    if (t_max < 1) throw Error("bad_params", "t_max must be >= 1");
    if (!(zero_threshold >= 0.0)) throw Error("bad_params", "zero threshold must be >= 0");
    if (min_tail_len < 1) throw Error("bad_params", "min_tail_len must be >= 1");
}

Eigen::Index tail_length(const VectorXd& filtered, Eigen::Index t_start, const TailParams& params) {
    Eigen::Index s = 0;
    int descending = 0;
    for (Eigen::Index t = t_start; t >= 1; --t) {
        if (filtered[t] - filtered[t - 1] > params.epsilon) {
            ++descending;
        } else {
            descending = 0;
            ++s;
        }
        if (descending == params.t_max) break;
    }
    return s;
}

std::optional<Tail> extract_tail(const ChargingSession& session, const TailParams& params) {
    params.validate();
    const VectorXd current = moving_average(session.current.values, params.n_avg);
    const auto t_start = find_t_start(current, params.zero_threshold);
    if (!t_start) return std::nullopt;

    const Eigen::Index s = tail_length(current, *t_start, params);
    if (s < params.min_tail_len) return std::nullopt;

    const VectorXd pilot = moving_average(session.pilot.values, params.n_avg);
    Tail tail;
    tail.t_start = *t_start;
    tail.length = s;
    tail.current = current.segment(*t_start - s, s + 1);
    tail.pilot = pilot.segment(*t_start - s, s + 1);
    return tail;
}

DeltaSeries compute_delta(const ChargingSession& session, Eigen::Index tail_begin, int n_avg) {
    if (tail_begin <= 0) throw Error("no_cc_phase", "tail starts at index 0; no constant-current phase");
    if (tail_begin > session.current.size()) throw Error("bad_index", "tail begin beyond series end");
    if (n_avg < 1) throw Error("bad_params", "n_avg must be >= 1");
    DeltaSeries delta;
    delta.window = n_avg;
    delta.values.resize(tail_begin);
    for (Eigen::Index t = 0; t < tail_begin; ++t) {
        delta.values[t] = session.pilot.values[t] - moving_median(session.current.values, t, n_avg);
    }
    return delta;
}

}  // namespace evscout
