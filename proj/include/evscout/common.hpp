#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace evscout {

template <class T>
using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;

template <class T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using VectorXd = Vec<double>;
using MatrixXd = Mat<double>;
using LabelVector = Eigen::VectorXi;

/// Size-checked exact equality; Eigen's operator== asserts on size mismatch.
template <class A, class B>
bool same_values(const Eigen::DenseBase<A>& a, const Eigen::DenseBase<B>& b) {
    return a.rows() == b.rows() && a.cols() == b.cols() &&
           (a.size() == 0 || (a.derived().array() == b.derived().array()).all());
}

/// Base error for anything the pipeline rejects. `code()` is a short
/// machine-readable tag that the CLI prints verbatim.
class Error : public std::runtime_error {
public:
    Error(std::string code, const std::string& message)
        : std::runtime_error(message), code_(std::move(code)) {}

    const std::string& code() const noexcept { return code_; }

private:
    std::string code_;
};

/// Artifact header carries an unexpected format or version.
class VersionMismatch : public Error {
public:
    explicit VersionMismatch(const std::string& message)
        : Error("version_mismatch", message) {}
};

/// Derives independent stream seeds from a master seed and a counter tuple.
/// splitmix64 finalizer applied to each component in turn.
inline std::uint64_t mix_seed(std::uint64_t state, std::uint64_t value) noexcept {
    std::uint64_t z = state ^ (value + 0x9e3779b97f4a7c15ULL + (state << 6) + (state >> 2));
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

template <class... Ts>
std::uint64_t derive_seed(std::uint64_t master, Ts... counters) noexcept {
    std::uint64_t s = mix_seed(master, 0x45565363ULL);
    ((s = mix_seed(s, static_cast<std::uint64_t>(counters))), ...);
    return s;
}

}  // namespace evscout
