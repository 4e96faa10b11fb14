#pragma once

// Singular value decompositions of the likelihood-ratio operator
//     L(x, y) = sum_{k>=0} lambda_k phi_k(x) psi_k(y),   lambda_0 = 1, phi_0 = psi_0 = 1,
// for the Gaussian (Mehler), Bernoulli and finite-alphabet models.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <memory>
#include <numeric>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "broken_sample/errors.hpp"
#include "broken_sample/points.hpp"

namespace broken_sample {

/// Normalized probabilists' Hermite polynomial He_k(x) / sqrt(k!).
///
/// Uses the normalized three-term recurrence, so no factorial is ever formed.
/// Finite for k <= 200 and |x| <= 20.
inline double hermite_normalized(unsigned k, double x) noexcept {
    double prev = 0.0;
    double cur = 1.0;
    for (unsigned j = 0; j < k; ++j) {
        const double next = (x * cur - std::sqrt(static_cast<double>(j)) * prev) / std::sqrt(static_cast<double>(j + 1));
        prev = cur;
        cur = next;
    }
    return cur;
}

/// Fills out[j] = He_j(x)/sqrt(j!) for j = 0..out.size()-1.
inline void hermite_normalized_all(double x, std::span<double> out) noexcept {
    if (out.empty()) return;
    out[0] = 1.0;
    if (out.size() == 1) return;
    out[1] = x;
    for (std::size_t j = 1; j + 1 < out.size(); ++j) {
        out[j + 1] = (x * out[j] - std::sqrt(static_cast<double>(j)) * out[j - 1]) / std::sqrt(static_cast<double>(j + 1));
    }
}

/// Bivariate standard Gaussian likelihood ratio with correlation rho.
inline double mehler_kernel(double rho, double a, double b) {
    require(std::abs(rho) < 1.0, "mehler_kernel: |rho| must be < 1");
    const double one_minus = 1.0 - rho * rho;
    return std::exp((-(a * a + b * b) * rho * rho + 2.0 * a * b * rho) / (2.0 * one_minus)) / std::sqrt(one_minus);
}

/// Evaluates the non-trivial singular functions f_1..f_r at one point.
class Eigenbasis {
public:
    virtual ~Eigenbasis() = default;
    /// out[k-1] = f_k(point) for k = 1..out.size().
    virtual void evaluate(std::span<const double> point, std::span<double> out) const = 0;
};

/// Top-r singular triples (lambda_k, phi_k, psi_k), k = 1..r. lambda_0 = 1 is
/// implicit and never stored. Indices passed to value/phi/psi are 1-based.
class Spectrum {
public:
    Spectrum() = default;
    Spectrum(std::vector<double> values, std::shared_ptr<const Eigenbasis> phi, std::shared_ptr<const Eigenbasis> psi)
        : values_(std::move(values)), phi_(std::move(phi)), psi_(std::move(psi)) {
        for (std::size_t k = 0; k < values_.size(); ++k) {
            require(values_[k] >= 0.0 && values_[k] <= 1.0, "singular values must lie in [0, 1]");
            require(k == 0 || values_[k] <= values_[k - 1], "singular values must be non-increasing");
        }
    }

    const std::vector<double>& values() const noexcept { return values_; }
    std::size_t truncation_rank() const noexcept { return values_.size(); }
    bool empty() const noexcept { return values_.empty(); }
    double value(std::size_t k) const { return values_.at(k - 1); }

    double phi(std::size_t k, std::span<const double> x) const { return evaluate_one(*phi_, k, x); }
    double psi(std::size_t k, std::span<const double> y) const { return evaluate_one(*psi_, k, y); }

    void phi_all(std::span<const double> x, std::span<double> out) const { phi_->evaluate(x, check(out)); }
    void psi_all(std::span<const double> y, std::span<double> out) const { psi_->evaluate(y, check(out)); }

    /// Spectral embedding: count^{-1/2} * sum_i f_k(points_i), k = 1..r.
    std::vector<double> phi_embedding(const PointSet& xs, std::size_t r) const { return embed(*phi_, xs, r); }
    std::vector<double> psi_embedding(const PointSet& ys, std::size_t r) const { return embed(*psi_, ys, r); }

    /// Same spectrum restricted to the leading r pairs.
    Spectrum truncated(std::size_t r) const {
        require(r <= values_.size(), "cannot truncate a spectrum beyond its rank");
        Spectrum s = *this;
        s.values_.resize(r);
        return s;
    }

private:
    std::span<double> check(std::span<double> out) const {
        require(out.size() <= values_.size(), "requested more eigenfunctions than the truncation rank");
        return out;
    }

    double evaluate_one(const Eigenbasis& basis, std::size_t k, std::span<const double> x) const {
        require(k >= 1 && k <= values_.size(), "eigenfunction index out of range");
        std::vector<double> buf(k);
        basis.evaluate(x, buf);
        return buf[k - 1];
    }

    std::vector<double> embed(const Eigenbasis& basis, const PointSet& pts, std::size_t r) const {
        require(r <= values_.size(), "embedding rank exceeds the truncation rank");
        std::vector<double> sums(r, 0.0);
        if (r == 0 || pts.empty()) return sums;
        std::vector<double> buf(r);
        for (std::size_t i = 0; i < pts.size(); ++i) {
            basis.evaluate(pts[i], buf);
            for (std::size_t k = 0; k < r; ++k) sums[k] += buf[k];
        }
        const double scale = 1.0 / std::sqrt(static_cast<double>(pts.size()));
        for (double& v : sums) v *= scale;
        return sums;
    }

    std::vector<double> values_;
    std::shared_ptr<const Eigenbasis> phi_;
    std::shared_ptr<const Eigenbasis> psi_;
};

inline double maximal_correlation(const Spectrum& s) noexcept { return s.empty() ? 0.0 : s.values().front(); }

/// Truncated chi-square information I^{(r)} = sum_{k<=r} lambda_k^2.
inline double chi2_information(const Spectrum& s) noexcept {
    return std::accumulate(s.values().begin(), s.values().end(), 0.0,
                           [](double acc, double v) { return acc + v * v; });
}

// ---------------------------------------------------------------------------
// Gaussian

struct GaussianSpectrumIndex {
    std::vector<unsigned> multi_index;
    unsigned total_degree = 0;
    double value = 0.0;
};

namespace detail {

inline void compositions(unsigned remaining, std::size_t pos, std::vector<unsigned>& cur,
                         std::vector<std::vector<unsigned>>& out, std::size_t limit) {
    if (out.size() >= limit) return;
    if (pos + 1 == cur.size()) {
        cur[pos] = remaining;
        out.push_back(cur);
        return;
    }
    for (unsigned v = remaining + 1; v-- > 0;) {
        cur[pos] = v;
        compositions(remaining - v, pos + 1, cur, out, limit);
        if (out.size() >= limit) return;
    }
}

}  // namespace detail

/// First r non-trivial multi-indices of a d-dimensional Hermite basis,
/// ordered by total degree and then by descending lexicographic order, so the
/// degree-one block is e_1, e_2, ..., e_d.
inline std::vector<GaussianSpectrumIndex> gaussian_multi_indices(std::size_t d, double rho, std::size_t r) {
    require(d >= 1, "gaussian spectrum: d must be >= 1");
    std::vector<GaussianSpectrumIndex> out;
    out.reserve(r);
    for (unsigned degree = 1; out.size() < r; ++degree) {
        std::vector<std::vector<unsigned>> block;
        std::vector<unsigned> cur(d, 0);
        detail::compositions(degree, 0, cur, block, r - out.size());
        for (auto& idx : block) out.push_back({std::move(idx), degree, std::pow(rho, degree)});
    }
    return out;
}

class GaussianEigenbasis final : public Eigenbasis {
public:
    explicit GaussianEigenbasis(std::vector<GaussianSpectrumIndex> indices) : indices_(std::move(indices)) {
        for (const auto& idx : indices_)
            for (unsigned k : idx.multi_index) max_degree_ = std::max(max_degree_, k);
        if (!indices_.empty()) dim_ = indices_.front().multi_index.size();
    }

    void evaluate(std::span<const double> point, std::span<double> out) const override {
        require(point.size() == dim_ || indices_.empty(), "gaussian eigenfunction: point dimension mismatch");
        if (dim_ == 1) {
            // Indices are 1, 2, 3, ... in one dimension.
            if (out.empty()) return;
            const double x = point[0];
            double prev = 1.0;
            double cur = x;
            out[0] = x;
            for (std::size_t j = 1; j < out.size(); ++j) {
                const double next = (x * cur - std::sqrt(static_cast<double>(j)) * prev) / std::sqrt(static_cast<double>(j + 1));
                prev = cur;
                cur = next;
                out[j] = cur;
            }
            return;
        }
        std::size_t needed = 0;
        for (std::size_t k = 0; k < out.size(); ++k) needed = std::max<std::size_t>(needed, indices_[k].total_degree);
        const std::size_t width = std::min<std::size_t>(needed, max_degree_) + 1;
        std::vector<double> table(dim_ * width);
        for (std::size_t c = 0; c < dim_; ++c) hermite_normalized_all(point[c], {table.data() + c * width, width});
        for (std::size_t k = 0; k < out.size(); ++k) {
            double prod = 1.0;
            const auto& mi = indices_[k].multi_index;
            for (std::size_t c = 0; c < dim_; ++c)
                if (mi[c] != 0) prod *= table[c * width + mi[c]];
            out[k] = prod;
        }
    }

    const std::vector<GaussianSpectrumIndex>& indices() const noexcept { return indices_; }

private:
    std::vector<GaussianSpectrumIndex> indices_;
    std::size_t dim_ = 1;
    unsigned max_degree_ = 0;
};

/// Top-r singular pairs of the d-dimensional Mehler operator with correlation rho.
inline Spectrum gaussian_spectrum(std::size_t d, double rho, std::size_t r) {
    require(rho >= 0.0 && rho <= 1.0, "gaussian_spectrum: rho must lie in [0, 1]");
    require(r >= 1, "gaussian_spectrum: r must be >= 1");
    auto indices = gaussian_multi_indices(d, rho, r);
    std::vector<double> values;
    values.reserve(indices.size());
    for (const auto& idx : indices) values.push_back(idx.value);
    auto basis = std::make_shared<const GaussianEigenbasis>(std::move(indices));
    return Spectrum(std::move(values), basis, basis);
}

// ---------------------------------------------------------------------------
// Bernoulli

/// Admissible correlation range for Bernoulli(q) pairs.
inline double bernoulli_min_rho(double q) { return -std::min(q / (1.0 - q), (1.0 - q) / q); }

class BernoulliEigenbasis final : public Eigenbasis {
public:
    BernoulliEigenbasis(double q, std::vector<std::vector<unsigned>> subsets, std::vector<double> signs)
        : q_(q), norm_(1.0 / std::sqrt(q * (1.0 - q))), subsets_(std::move(subsets)), signs_(std::move(signs)) {}

    void evaluate(std::span<const double> point, std::span<double> out) const override {
        for (std::size_t k = 0; k < out.size(); ++k) {
            double prod = signs_[k];
            const auto& mi = subsets_[k];
            require(mi.size() == point.size(), "bernoulli eigenfunction: point dimension mismatch");
            for (std::size_t c = 0; c < mi.size(); ++c)
                if (mi[c] != 0) prod *= (point[c] - q_) * norm_;
            out[k] = prod;
        }
    }

private:
    double q_;
    double norm_;
    std::vector<std::vector<unsigned>> subsets_;
    std::vector<double> signs_;
};

/// Leading singular pairs of the d-fold product Bernoulli model. With
/// g(a) = (a - q)/sqrt(q(1-q)), the pairs are products of g over coordinate
/// subsets S with value |rho|^|S|; the first d are the single coordinates
/// (value |rho|). A negative rho is carried by psi. r defaults to d and may
/// go up to 2^d - 1.
inline Spectrum bernoulli_spectrum(std::size_t d, double q, double rho, std::size_t r = 0) {
    require(d >= 1, "bernoulli_spectrum: d must be >= 1");
    require(q > 0.0 && q < 1.0, "bernoulli_spectrum: q must lie strictly between 0 and 1");
    require(rho >= bernoulli_min_rho(q) - 1e-15 && rho <= 1.0, "bernoulli_spectrum: rho outside the admissible range");
    if (r == 0) r = d;
    require(d >= 63 || r < (std::size_t{1} << d), "bernoulli_spectrum: r exceeds 2^d - 1");

    std::vector<std::vector<unsigned>> subsets;
    std::vector<double> values;
    std::vector<double> signs;
    for (unsigned size = 1; subsets.size() < r && size <= d; ++size) {
        std::vector<std::vector<unsigned>> block;
        std::vector<unsigned> cur(d, 0);
        detail::compositions(size, 0, cur, block, std::numeric_limits<std::size_t>::max());
        for (auto& mi : block) {
            if (std::any_of(mi.begin(), mi.end(), [](unsigned v) { return v > 1; })) continue;
            if (subsets.size() == r) break;
            subsets.push_back(std::move(mi));
            values.push_back(std::pow(std::abs(rho), size));
            signs.push_back(rho < 0.0 && size % 2 == 1 ? -1.0 : 1.0);
        }
    }
    std::vector<double> ones(signs.size(), 1.0);
    auto phi = std::make_shared<const BernoulliEigenbasis>(q, subsets, std::move(ones));
    auto psi = std::make_shared<const BernoulliEigenbasis>(q, std::move(subsets), std::move(signs));
    return Spectrum(std::move(values), phi, psi);
}

// ---------------------------------------------------------------------------
// Finite alphabets

/// Joint probability table P(x, y): rows index X symbols, columns Y symbols.
using JointTable = Eigen::MatrixXd;

struct Marginals {
    Eigen::VectorXd x;
    Eigen::VectorXd y;
};

inline Marginals validate_joint(const JointTable& joint) {
    require(joint.rows() >= 1 && joint.cols() >= 1, "joint table must be non-empty");
    require((joint.array() >= 0.0).all(), "joint table has negative entries");
    require(std::abs(joint.sum() - 1.0) <= 1e-12, "joint table must sum to 1");
    Marginals m{joint.rowwise().sum(), joint.colwise().sum().transpose()};
    require((m.x.array() > 0.0).all(), "degenerate marginal: an X symbol has zero probability");
    require((m.y.array() > 0.0).all(), "degenerate marginal: a Y symbol has zero probability");
    return m;
}

class TableEigenbasis final : public Eigenbasis {
public:
    explicit TableEigenbasis(Eigen::MatrixXd table) : table_(std::move(table)) {}

    void evaluate(std::span<const double> point, std::span<double> out) const override {
        const auto symbol = static_cast<Eigen::Index>(point[0]);
        require(symbol >= 0 && symbol < table_.rows(), "symbol outside the alphabet");
        for (std::size_t k = 0; k < out.size(); ++k) out[k] = table_(symbol, static_cast<Eigen::Index>(k));
    }

private:
    Eigen::MatrixXd table_;  // symbol x k
};

/// SVD of P(x,y)/sqrt(P_X(x) P_Y(y)) with the trivial triple (1, sqrt(P_X), sqrt(P_Y))
/// removed by deflation. Singular values below 1e-12 are dropped. Each left
/// vector is signed so its first nonzero entry is positive.
inline Spectrum discrete_spectrum(const JointTable& joint) {
    const Marginals marg = validate_joint(joint);
    const Eigen::VectorXd sx = marg.x.cwiseSqrt();
    const Eigen::VectorXd sy = marg.y.cwiseSqrt();
    const Eigen::MatrixXd q = sx.cwiseInverse().asDiagonal() * joint * sy.cwiseInverse().asDiagonal();
    const Eigen::MatrixXd deflated = q - sx * sy.transpose();

    Eigen::JacobiSVD<Eigen::MatrixXd> svd(deflated, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const auto& sv = svd.singularValues();
    Eigen::Index rank = 0;
    while (rank < sv.size() && sv(rank) >= 1e-12) ++rank;

    std::vector<double> values;
    Eigen::MatrixXd phi(joint.rows(), rank);
    Eigen::MatrixXd psi(joint.cols(), rank);
    for (Eigen::Index k = 0; k < rank; ++k) {
        double v = sv(k);
        require(v <= 1.0 + 1e-9, "discrete_spectrum: singular value exceeds 1; table is not a joint law");
        values.push_back(std::min(v, 1.0));
        Eigen::VectorXd u = svd.matrixU().col(k);
        Eigen::VectorXd w = svd.matrixV().col(k);
        for (Eigen::Index i = 0; i < u.size(); ++i) {
            if (std::abs(u(i)) > 1e-12) {
                if (u(i) < 0.0) {
                    u = -u;
                    w = -w;
                }
                break;
            }
        }
        phi.col(k) = u.cwiseQuotient(sx);
        psi.col(k) = w.cwiseQuotient(sy);
    }
    return Spectrum(std::move(values), std::make_shared<const TableEigenbasis>(std::move(phi)),
                    std::make_shared<const TableEigenbasis>(std::move(psi)));
}

/// sum_{x,y} P(x,y)^2 / (P_X(x) P_Y(y)) - 1, evaluated directly from the table.
inline double chi2_information(const JointTable& joint) {
    const Marginals marg = validate_joint(joint);
    double total = 0.0;
    for (Eigen::Index i = 0; i < joint.rows(); ++i)
        for (Eigen::Index j = 0; j < joint.cols(); ++j) total += joint(i, j) * joint(i, j) / (marg.x(i) * marg.y(j));
    return total - 1.0;
}

/// Table 2 four-cell pmf of a rho-correlated Bernoulli(q) pair; rows/cols are {0, 1}.
inline JointTable bernoulli_pair_table(double q, double rho) {
    require(q > 0.0 && q < 1.0, "bernoulli: q must lie strictly between 0 and 1");
    require(rho >= bernoulli_min_rho(q) - 1e-15 && rho <= 1.0, "bernoulli: rho outside the admissible range");
    JointTable t(2, 2);
    t(0, 0) = (1.0 - q) * (1.0 - q + rho * q);
    t(1, 0) = q * (1.0 - q) * (1.0 - rho);
    t(0, 1) = q * (1.0 - q) * (1.0 - rho);
    t(1, 1) = q * (q + rho * (1.0 - q));
    return t;
}

}  // namespace broken_sample
