#pragma once

// Closed-form ridge regression probe on one-hot targets.
//
// Features are centered before solving (X'X + lambda I) W = X'Y, and the
// intercept is recovered unpenalized: b = mean(Y) - mean(X) W. Prediction is
// the argmax score, lowest class index on ties.

#include <algorithm>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "error.hpp"

namespace aape {

class LinearProbe {
public:
    static LinearProbe fit(const Eigen::MatrixXd& features, std::span<const std::uint32_t> labels,
                           std::size_t num_classes, double ridge) {
        const auto S = features.rows();
        if (static_cast<std::size_t>(S) != labels.size())
            throw Error("probe: feature rows and labels disagree");
        if (S == 0 || num_classes == 0) throw Error("degenerate probe: no samples");
        Eigen::MatrixXd Y = Eigen::MatrixXd::Zero(S, static_cast<Eigen::Index>(num_classes));
        for (Eigen::Index s = 0; s < S; ++s) {
            if (labels[s] >= num_classes) throw Error("probe: label out of range");
            Y(s, labels[s]) = 1.0;
        }
        const Eigen::RowVectorXd x_mean = features.colwise().mean();
        const Eigen::RowVectorXd y_mean = Y.colwise().mean();
        const Eigen::MatrixXd Xc = features.rowwise() - x_mean;
        const Eigen::MatrixXd Yc = Y.rowwise() - y_mean;
        Eigen::MatrixXd A = Xc.transpose() * Xc;
        A.diagonal().array() += ridge;
        Eigen::LDLT<Eigen::MatrixXd> ldlt(A);
        const auto pivots = ldlt.vectorD().cwiseAbs();
        const double tol = 1e-12 * std::max(1.0, pivots.maxCoeff());
        if (ldlt.info() != Eigen::Success || !ldlt.isPositive() || pivots.minCoeff() <= tol)
            throw Error("degenerate probe: singular normal equations");
        LinearProbe p;
        p.weights_ = ldlt.solve(Xc.transpose() * Yc);
        p.bias_ = y_mean - x_mean * p.weights_;
        return p;
    }

    std::vector<std::uint32_t> predict(const Eigen::MatrixXd& features) const {
        const Eigen::MatrixXd scores = (features * weights_).rowwise() + bias_;
        std::vector<std::uint32_t> out(static_cast<std::size_t>(scores.rows()));
        for (Eigen::Index s = 0; s < scores.rows(); ++s) {
            Eigen::Index best = 0;
            for (Eigen::Index c = 1; c < scores.cols(); ++c)
                if (scores(s, c) > scores(s, best)) best = c;
            out[static_cast<std::size_t>(s)] = static_cast<std::uint32_t>(best);
        }
        return out;
    }

    const Eigen::MatrixXd& weights() const { return weights_; }
    const Eigen::RowVectorXd& bias() const { return bias_; }

private:
    Eigen::MatrixXd weights_;
    Eigen::RowVectorXd bias_;
};

}  // namespace aape
