#pragma once

// Histogram embedding: quantile cells, standardized cell counts, and the
// reduced coordinates in which the limiting covariance is block diagonal.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <memory>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "broken_sample/errors.hpp"
#include "broken_sample/models.hpp"
#include "broken_sample/normal.hpp"

namespace broken_sample {

/// Cells of one coordinate axis. Continuous axes use interior edges; finite
/// alphabets map each symbol to a cell.
struct AxisPartition {
    std::vector<double> edges;              // increasing interior edges (continuous)
    std::vector<std::size_t> symbol_cell;   // symbol -> cell (finite alphabet)
    std::size_t cells = 1;

    std::size_t cell_of(double v) const {
        if (!symbol_cell.empty()) {
            const auto s = static_cast<std::size_t>(v);
            require(v >= 0.0 && s < symbol_cell.size(), "histogram: symbol outside the alphabet");
            return symbol_cell[s];
        }
        return static_cast<std::size_t>(std::upper_bound(edges.begin(), edges.end(), v) - edges.begin());
    }
};

/// Interior edges Phi^{-1}(k/w), k = 1..w-1.
inline AxisPartition gaussian_quantile_partition(std::size_t w) {
    require(w >= 2, "histogram: w must be >= 2");
    AxisPartition part;
    part.cells = w;
    for (std::size_t k = 1; k < w; ++k) part.edges.push_back(normal::quantile(static_cast<double>(k) / static_cast<double>(w)));
    return part;
}

/// Groups symbols with masses pmf into at most w quantile cells: symbol s goes
/// to floor(w * (F(s-) + pmf[s]/2)). Cells that receive no symbol are dropped,
/// which merges them into their neighbours.
inline AxisPartition symbol_quantile_partition(const Eigen::VectorXd& pmf, std::size_t w) {
    require(w >= 2, "histogram: w must be >= 2");
    AxisPartition part;
    std::vector<std::size_t> raw(static_cast<std::size_t>(pmf.size()));
    double before = 0.0;
    for (Eigen::Index s = 0; s < pmf.size(); ++s) {
        const double mid = before + 0.5 * pmf(s);
        raw[static_cast<std::size_t>(s)] = std::min(w - 1, static_cast<std::size_t>(std::floor(static_cast<double>(w) * mid)));
        before += pmf(s);
    }
    std::vector<std::size_t> relabel(w, w);
    std::size_t next = 0;
    for (std::size_t c : raw)
        if (relabel[c] == w) relabel[c] = next++;
    for (std::size_t c : raw) part.symbol_cell.push_back(relabel[c]);
    part.cells = next;
    return part;
}

/// P(X in I_k, Y in J_l) for a standard bivariate normal pair and the
/// quantile cells of width 1/w, from a grid of joint CDF values.
inline Eigen::MatrixXd gaussian_cell_table(double rho, std::size_t w) {
    const AxisPartition part = gaussian_quantile_partition(w);
    std::vector<double> e(w + 1);
    e[0] = -normal::kInf;
    e[w] = normal::kInf;
    for (std::size_t k = 1; k < w; ++k) e[k] = part.edges[k - 1];
    // grid(i, j) = P(X <= e_i, Y <= e_j); symmetric because both marginals match.
    Eigen::MatrixXd grid(w + 1, w + 1);
    for (std::size_t i = 0; i <= w; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            double g;
            if (i == 0 || j == 0) g = 0.0;
            else if (i == w) g = static_cast<double>(j) / static_cast<double>(w);
            else g = normal::bivariate_upper(-e[i], -e[j], rho);
            grid(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = g;
            grid(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = g;
        }
    }
    Eigen::MatrixXd table(w, w);
    for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(w); ++i)
        for (Eigen::Index j = 0; j < static_cast<Eigen::Index>(w); ++j)
            table(i, j) = std::max(0.0, grid(i + 1, j + 1) - grid(i, j + 1) - grid(i + 1, j) + grid(i, j));
    return table;
}

/// sum P^2 / (r z) - 1 of a cell table with its own marginals.
inline double table_chi2(const Eigen::MatrixXd& table) {
    const Eigen::VectorXd r = table.rowwise().sum();
    const Eigen::VectorXd z = table.colwise().sum().transpose();
    double total = 0.0;
    for (Eigen::Index i = 0; i < table.rows(); ++i)
        for (Eigen::Index j = 0; j < table.cols(); ++j)
            if (table(i, j) > 0.0) total += table(i, j) * table(i, j) / (r(i) * z(j));
    return total - 1.0;
}

namespace detail {

/// Columns 2..W of the Householder reflection sending e_1 to -sign(g_1) g:
/// an orthonormal basis of the complement of the unit vector g.
inline Eigen::MatrixXd orthonormal_complement(const Eigen::VectorXd& g) {
    const Eigen::Index w = g.size();
    Eigen::VectorXd v = g;
    v(0) += g(0) >= 0.0 ? 1.0 : -1.0;
    const Eigen::MatrixXd h = Eigen::MatrixXd::Identity(w, w) - (2.0 / v.squaredNorm()) * v * v.transpose();
    return h.rightCols(w - 1);
}

}  // namespace detail

/// Data-independent part of the embedding: partitions, cell probabilities and
/// the decomposition C = P~ - gamma beta^T = U~ diag(mu) V~^T.
struct HistogramModel {
    std::size_t w = 0;                       // requested cells per axis
    std::vector<AxisPartition> partition_x;  // one per coordinate
    std::vector<AxisPartition> partition_y;
    Eigen::MatrixXd joint;                   // P(I_k x J_l) over product cells
    Eigen::VectorXd r, z;                    // cell probabilities
    Eigen::VectorXd gamma, beta;             // sqrt(r), sqrt(z)
    Eigen::MatrixXd C;
    std::vector<double> mu;                  // mu_1 >= ... >= mu_{K}, then the trivial 0
    Eigen::MatrixXd U_tilde, V_tilde;        // K columns each
    double chi2 = 0.0;                       // chi-square of the discretized joint

    std::size_t cells_x() const noexcept { return static_cast<std::size_t>(r.size()); }
    std::size_t cells_y() const noexcept { return static_cast<std::size_t>(z.size()); }
    Eigen::MatrixXd A() const { return Eigen::MatrixXd::Identity(r.size(), r.size()) - gamma * gamma.transpose(); }
    Eigen::MatrixXd B() const { return Eigen::MatrixXd::Identity(z.size(), z.size()) - beta * beta.transpose(); }

    /// Product-cell index of a point; coordinate 0 is the most significant digit.
    std::size_t cell_x(std::span<const double> p) const { return cell(partition_x, p); }
    std::size_t cell_y(std::span<const double> p) const { return cell(partition_y, p); }

private:
    static std::size_t cell(const std::vector<AxisPartition>& parts, std::span<const double> p) {
        require(p.size() == parts.size(), "histogram: point dimension mismatch");
        std::size_t idx = 0;
        for (std::size_t c = 0; c < parts.size(); ++c) idx = idx * parts[c].cells + parts[c].cell_of(p[c]);
        return idx;
    }
};

/// Limit on the number of product cells per side (w^d for d-dimensional models).
inline constexpr std::size_t kMaxHistogramCells = 2048;

inline HistogramModel build_histogram_model(const JointModel& model, std::size_t w) {
    require(w >= 2, "histogram: w must be >= 2");
    HistogramModel h;
    h.w = w;
    Eigen::MatrixXd axis_table;
    std::size_t coords = 1;
    if (auto* g = std::get_if<GaussianParams>(&model.params())) {
        coords = g->d;
        h.partition_x.assign(coords, gaussian_quantile_partition(w));
        axis_table = gaussian_cell_table(g->rho, w);
    } else {
        JointTable table;
        if (auto* b = std::get_if<BernoulliParams>(&model.params())) {
            coords = b->d;
            table = bernoulli_pair_table(b->q, b->rho);
        } else {
            table = std::get<DiscreteParams>(model.params()).joint;
        }
        const Marginals marg = validate_joint(table);
        const AxisPartition px = symbol_quantile_partition(marg.x, w);
        const AxisPartition py = symbol_quantile_partition(marg.y, w);
        h.partition_x.assign(coords, px);
        h.partition_y.assign(coords, py);
        axis_table = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(px.cells), static_cast<Eigen::Index>(py.cells));
        for (Eigen::Index a = 0; a < table.rows(); ++a)
            for (Eigen::Index b = 0; b < table.cols(); ++b)
                axis_table(static_cast<Eigen::Index>(px.symbol_cell[static_cast<std::size_t>(a)]),
                           static_cast<Eigen::Index>(py.symbol_cell[static_cast<std::size_t>(b)])) += table(a, b);
    }
    if (h.partition_y.empty()) h.partition_y = h.partition_x;

    const double total_x = std::pow(static_cast<double>(axis_table.rows()), static_cast<double>(coords));
    const double total_y = std::pow(static_cast<double>(axis_table.cols()), static_cast<double>(coords));
    require(total_x <= kMaxHistogramCells && total_y <= kMaxHistogramCells,
            "histogram: too many product cells (w^d must not exceed 2048)");
    h.joint = axis_table;
    for (std::size_t c = 1; c < coords; ++c) {
        Eigen::MatrixXd next(h.joint.rows() * axis_table.rows(), h.joint.cols() * axis_table.cols());
        for (Eigen::Index i = 0; i < h.joint.rows(); ++i)
            for (Eigen::Index j = 0; j < h.joint.cols(); ++j)
                next.block(i * axis_table.rows(), j * axis_table.cols(), axis_table.rows(), axis_table.cols()) =
                    h.joint(i, j) * axis_table;
        h.joint = std::move(next);
    }

    h.r = h.joint.rowwise().sum();
    h.z = h.joint.colwise().sum().transpose();
    require((h.r.array() > 0.0).all() && (h.z.array() > 0.0).all(), "histogram: a cell has zero probability");
    h.gamma = h.r.cwiseSqrt();
    h.beta = h.z.cwiseSqrt();
    const Eigen::MatrixXd ptilde = h.gamma.cwiseInverse().asDiagonal() * h.joint * h.beta.cwiseInverse().asDiagonal();
    h.C = ptilde - h.gamma * h.beta.transpose();
    h.chi2 = table_chi2(h.joint);

    const Eigen::Index k = std::min(h.r.size(), h.z.size()) - 1;
    h.U_tilde.resize(h.r.size(), k);
    h.V_tilde.resize(h.z.size(), k);
    if (k > 0) {
        const Eigen::MatrixXd qu = detail::orthonormal_complement(h.gamma);
        const Eigen::MatrixXd qv = detail::orthonormal_complement(h.beta);
        const Eigen::MatrixXd reduced = qu.transpose() * h.C * qv;
        Eigen::BDCSVD<Eigen::MatrixXd> svd(reduced, Eigen::ComputeThinU | Eigen::ComputeThinV);
        for (Eigen::Index i = 0; i < k; ++i) h.mu.push_back(std::min(1.0, svd.singularValues()(i)));
        h.U_tilde = qu * svd.matrixU().leftCols(k);
        h.V_tilde = qv * svd.matrixV().leftCols(k);
    }
    h.mu.push_back(0.0);
    return h;
}

/// HistogramModel plus the standardized histograms of one dataset.
struct HistogramEmbedding {
    std::shared_ptr<const HistogramModel> model;
    Eigen::VectorXd s, t;              // standardized cell counts
    Eigen::VectorXd s_tilde, t_tilde;  // reduced coordinates
};

inline HistogramEmbedding embed_histogram(const Dataset& ds, std::shared_ptr<const HistogramModel> model) {
    require(ds.n() >= 1 && ds.m() >= 1, "histogram: both samples must be non-empty");
    const HistogramModel& hm = *model;
    HistogramEmbedding e;
    Eigen::VectorXd cx = Eigen::VectorXd::Zero(hm.r.size());
    Eigen::VectorXd cy = Eigen::VectorXd::Zero(hm.z.size());
    for (std::size_t i = 0; i < ds.n(); ++i) cx(static_cast<Eigen::Index>(hm.cell_x(ds.xs[i]))) += 1.0;
    for (std::size_t j = 0; j < ds.m(); ++j) cy(static_cast<Eigen::Index>(hm.cell_y(ds.ys[j]))) += 1.0;
    const double n = static_cast<double>(ds.n());
    const double m = static_cast<double>(ds.m());
    e.s = (cx - n * hm.r).cwiseQuotient((n * hm.r).cwiseSqrt());
    e.t = (cy - m * hm.z).cwiseQuotient((m * hm.z).cwiseSqrt());
    e.s_tilde = hm.U_tilde.transpose() * e.s;
    e.t_tilde = hm.V_tilde.transpose() * e.t;
    e.model = std::move(model);
    return e;
}

inline HistogramEmbedding build_histogram_embedding(const Dataset& ds, const JointModel& model, std::size_t w) {
    return embed_histogram(ds, std::make_shared<const HistogramModel>(build_histogram_model(model, w)));
}

}  // namespace broken_sample
