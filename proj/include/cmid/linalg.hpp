#pragma once

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <complex>
#include <string>

#include "cmid/errors.hpp"

namespace cmid {

using Eigen::Index;
using Eigen::MatrixXcd;
using Eigen::MatrixXd;
using Eigen::VectorXcd;
using Eigen::VectorXd;
using cplx = std::complex<double>;
using json = nlohmann::json;

inline VectorXd singular_values(const MatrixXd& a) {
    if (a.size() == 0) return VectorXd();
    Eigen::BDCSVD<MatrixXd> svd(a);
    return svd.singularValues();
}

/// Rank with threshold max(rel * sigma_max, abs).
inline int numerical_rank(const MatrixXd& a, double rel = 1e-9, double abs_floor = 0.0) {
    const VectorXd s = singular_values(a);
    if (s.size() == 0 || s(0) == 0.0) return 0;
    const double thr = std::max(rel * s(0), abs_floor);
    return static_cast<int>((s.array() > thr).count());
}

/// Columns form an orthonormal basis of the row space of `a`.
inline MatrixXd row_space_basis(const MatrixXd& a, double rel = 1e-11) {
    if (a.size() == 0) return MatrixXd(a.cols(), 0);
    Eigen::BDCSVD<MatrixXd> svd(a, Eigen::ComputeThinV);
    const VectorXd& s = svd.singularValues();
    if (s.size() == 0 || s(0) == 0.0) return MatrixXd(a.cols(), 0);
    const auto r = static_cast<Index>((s.array() > rel * s(0)).count());
    return svd.matrixV().leftCols(r);
}

inline MatrixXd pinv(const MatrixXd& a, double rel = 1e-12) {
    Eigen::CompleteOrthogonalDecomposition<MatrixXd> cod(a);
    cod.setThreshold(rel);
    return cod.pseudoInverse();
}

inline double spectral_abscissa(const MatrixXd& a) {
    if (a.size() == 0) return -std::numeric_limits<double>::infinity();
    Eigen::EigenSolver<MatrixXd> es(a, false);
    return es.eigenvalues().real().maxCoeff();
}

inline VectorXcd eigenvalues(const MatrixXd& a) {
    Eigen::EigenSolver<MatrixXd> es(a, false);
    return es.eigenvalues();
}

/// Block-diagonal concatenation.
template <class Mat>
Mat block_diag(const std::vector<Mat>& blocks) {
    Index r = 0, c = 0;
    for (const auto& b : blocks) {
        r += b.rows();
        c += b.cols();
    }
    Mat out = Mat::Zero(r, c);
    r = c = 0;
    for (const auto& b : blocks) {
        out.block(r, c, b.rows(), b.cols()) = b;
        r += b.rows();
        c += b.cols();
    }
    return out;
}

/// Horizontal concatenation; all blocks must share the row count.
inline MatrixXd hcat(const std::vector<MatrixXd>& blocks) {
    if (blocks.empty()) return MatrixXd();
    Index c = 0;
    for (const auto& b : blocks) {
        if (b.rows() != blocks.front().rows()) throw DimensionError("hcat: row counts differ");
        c += b.cols();
    }
    MatrixXd out(blocks.front().rows(), c);
    c = 0;
    for (const auto& b : blocks) {
        out.middleCols(c, b.cols()) = b;
        c += b.cols();
    }
    return out;
}

inline MatrixXd vcat(const std::vector<MatrixXd>& blocks) {
    if (blocks.empty()) return MatrixXd();
    Index r = 0;
    for (const auto& b : blocks) {
        if (b.cols() != blocks.front().cols()) throw DimensionError("vcat: column counts differ");
        r += b.rows();
    }
    MatrixXd out(r, blocks.front().cols());
    r = 0;
    for (const auto& b : blocks) {
        out.middleRows(r, b.rows()) = b;
        r += b.rows();
    }
    return out;
}

inline double relative_error(const MatrixXd& est, const MatrixXd& truth) {
    const double den = truth.norm();
    return den == 0.0 ? est.norm() : (est - truth).norm() / den;
}

// ---- JSON helpers (matrices are arrays of rows) ----

inline json matrix_to_json(const MatrixXd& m) {
    json rows = json::array();
    for (Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline json vector_to_json(const VectorXd& v) {
    json out = json::array();
    for (Index i = 0; i < v.size(); ++i) out.push_back(v(i));
    return out;
}

/// Accepts an array of rows, or a flat row-major array when the shape is known.
inline MatrixXd matrix_from_json(const json& j, const std::string& field, Index rows = -1, Index cols = -1) {
    if (!j.is_array()) throw ConfigError(field, "expected an array");
    const bool nested = !j.empty() && j.front().is_array();
    MatrixXd m;
    try {
        if (nested) {
            const auto r = static_cast<Index>(j.size());
            const auto c = static_cast<Index>(j.front().size());
            m.resize(r, c);
            for (Index i = 0; i < r; ++i) {
                if (static_cast<Index>(j[i].size()) != c) throw ConfigError(field, "ragged matrix rows");
                for (Index k = 0; k < c; ++k) m(i, k) = j[i][k].get<double>();
            }
        } else {
            const auto len = static_cast<Index>(j.size());
            if (rows < 0 && cols < 0) {
                rows = 1;
                cols = len;
            } else if (rows < 0) {
                rows = cols == 0 ? 0 : len / cols;
            } else if (cols < 0) {
                cols = rows == 0 ? 0 : len / rows;
            }
            if (rows * cols != len) throw ConfigError(field, "flat array has wrong length");
            m.resize(rows, cols);
            for (Index i = 0; i < rows; ++i)
                for (Index k = 0; k < cols; ++k) m(i, k) = j[i * cols + k].get<double>();
        }
    } catch (const json::exception& e) {
        throw ConfigError(field, std::string("non-numeric entry: ") + e.what());
    }
    if ((rows >= 0 && m.rows() != rows) || (cols >= 0 && m.cols() != cols))
        throw ConfigError(field, "expected shape " + std::to_string(rows) + "x" + std::to_string(cols) + ", got " +
                                     std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
    return m;
}

inline VectorXd vector_from_json(const json& j, const std::string& field) {
    if (!j.is_array()) throw ConfigError(field, "expected an array");
    VectorXd v(static_cast<Index>(j.size()));
    try {
        for (Index i = 0; i < v.size(); ++i) v(i) = j[i].get<double>();
    } catch (const json::exception& e) {
        throw ConfigError(field, std::string("non-numeric entry: ") + e.what());
    }
    return v;
}

}  // namespace cmid
