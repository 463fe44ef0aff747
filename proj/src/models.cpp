#include "klrs/models.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace klrs {

namespace {

void require(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

double dot(const std::vector<double>& a, const std::vector<double>& b, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
}

// log(1 + exp(t)) without overflow.
double softplus(double t) {
    if (t > 0.0) return t + std::log1p(std::exp(-t));
    return std::log1p(std::exp(t));
}

double sigmoid(double t) {
    if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
    const double e = std::exp(t);
    return e / (1.0 + e);
}

}  // namespace

void Dataset::validate() const {
    require(!features.empty(), "dataset must be nonempty");
    const std::size_t f = features[0].size();
    for (const auto& row : features) {
        require(row.size() == f, "all feature rows must have the same width");
        for (double x : row) require(std::isfinite(x), "features must be finite");
    }
    require(labels.empty() || labels.size() == features.size(),
            "labels, when present, must have length N");
    require(group_ids.empty() || group_ids.size() == features.size(),
            "group_ids, when present, must have length N");
    for (int g : group_ids) require(g >= 0, "group ids must be >= 0");
}

double point_estimation_loss(const ParameterVector& theta, const std::vector<double>& z) {
    require(theta.size() == z.size(), "point estimation: dimension mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
        const double d = theta[i] - z[i];
        s += d * d;
    }
    return 0.5 * s;
}

std::vector<double> point_estimation_grad(const ParameterVector& theta, const std::vector<double>& z) {
    require(theta.size() == z.size(), "point estimation: dimension mismatch");
    std::vector<double> g(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) g[i] = theta[i] - z[i];
    return g;
}

double logistic_loss(const ParameterVector& theta, const std::vector<double>& x, double y) {
    require(theta.size() == x.size() + 1, "logistic: theta must be (F+1)-dimensional");
    const double s = dot(theta, x, x.size()) + theta.back();
    return y * softplus(-s) + (1.0 - y) * softplus(s);
}

std::vector<double> logistic_grad(const ParameterVector& theta, const std::vector<double>& x, double y) {
    require(theta.size() == x.size() + 1, "logistic: theta must be (F+1)-dimensional");
    const double s = dot(theta, x, x.size()) + theta.back();
    const double c = sigmoid(s) - y;
    std::vector<double> g(theta.size());
    for (std::size_t i = 0; i < x.size(); ++i) g[i] = c * x[i];
    g.back() = c;
    return g;
}

double least_squares_loss(const ParameterVector& theta, const std::vector<double>& x, double y) {
    require(theta.size() == x.size(), "least squares: dimension mismatch");
    const double r = dot(theta, x, x.size()) - y;
    return 0.5 * r * r;
}

std::vector<double> least_squares_grad(const ParameterVector& theta, const std::vector<double>& x, double y) {
    require(theta.size() == x.size(), "least squares: dimension mismatch");
    const double r = dot(theta, x, x.size()) - y;
    std::vector<double> g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) g[i] = r * x[i];
    return g;
}

double PointEstimationModel::loss(const ParameterVector& theta, const Dataset& data,
                                  std::size_t i) const {
    return point_estimation_loss(theta, data.features[i]);
}

void PointEstimationModel::grad(const ParameterVector& theta, const Dataset& data, std::size_t i,
                                std::vector<double>& out) const {
    out = point_estimation_grad(theta, data.features[i]);
}

double LogisticModel::loss(const ParameterVector& theta, const Dataset& data, std::size_t i) const {
    return logistic_loss(theta, data.features[i], data.labels[i]);
}

void LogisticModel::grad(const ParameterVector& theta, const Dataset& data, std::size_t i,
                         std::vector<double>& out) const {
    out = logistic_grad(theta, data.features[i], data.labels[i]);
}

double LeastSquaresModel::loss(const ParameterVector& theta, const Dataset& data,
                               std::size_t i) const {
    return least_squares_loss(theta, data.features[i], data.labels[i]);
}

void LeastSquaresModel::grad(const ParameterVector& theta, const Dataset& data, std::size_t i,
                             std::vector<double>& out) const {
    out = least_squares_grad(theta, data.features[i], data.labels[i]);
}

std::vector<double> all_losses(const LossModel& model, const ParameterVector& theta,
                               const Dataset& data) {
    std::vector<double> l(data.n());
    for (std::size_t i = 0; i < data.n(); ++i) l[i] = model.loss(theta, data, i);
    return l;
}

Matrix matmul(const Matrix& x, const Matrix& y) {
    require(x.cols == y.rows, "matmul: inner dimensions must match");
    Matrix z(x.rows, y.cols);
    for (std::size_t i = 0; i < x.rows; ++i) {
        for (std::size_t k = 0; k < x.cols; ++k) {
            const double v = x(i, k);
            if (v == 0.0) continue;
            for (std::size_t j = 0; j < y.cols; ++j) z(i, j) += v * y(k, j);
        }
    }
    return z;
}

Matrix transpose(const Matrix& x) {
    Matrix t(x.cols, x.rows);
    for (std::size_t i = 0; i < x.rows; ++i) {
        for (std::size_t j = 0; j < x.cols; ++j) t(j, i) = x(i, j);
    }
    return t;
}

Matrix gram(const Matrix& y) {
    Matrix s(y.cols, y.cols);
    for (std::size_t r = 0; r < y.rows; ++r) {
        for (std::size_t i = 0; i < y.cols; ++i) {
            const double v = y(r, i);
            if (v == 0.0) continue;
            for (std::size_t j = 0; j < y.cols; ++j) s(i, j) += v * y(r, j);
        }
    }
    return s;
}

double trace_quad(const Matrix& s, const Matrix& u) {
    require(s.rows == s.cols && s.rows == u.rows, "trace_quad: dimension mismatch");
    double t = 0.0;
    for (std::size_t c = 0; c < u.cols; ++c) {
        for (std::size_t i = 0; i < s.rows; ++i) {
            double row = 0.0;
            for (std::size_t j = 0; j < s.cols; ++j) row += s(i, j) * u(j, c);
            t += u(i, c) * row;
        }
    }
    return t;
}

Matrix qr_orthonormalize(const Matrix& u) {
    Matrix q = u;
    for (std::size_t c = 0; c < q.cols; ++c) {
        for (std::size_t p = 0; p < c; ++p) {
            double proj = 0.0;
            for (std::size_t i = 0; i < q.rows; ++i) proj += q(i, p) * q(i, c);
            for (std::size_t i = 0; i < q.rows; ++i) q(i, c) -= proj * q(i, p);
        }
        double norm = 0.0;
        for (std::size_t i = 0; i < q.rows; ++i) norm += q(i, c) * q(i, c);
        norm = std::sqrt(norm);
        require(norm > 1e-12, "qr_orthonormalize: rank-deficient input");
        for (std::size_t i = 0; i < q.rows; ++i) q(i, c) /= norm;
    }
    return q;
}

EighResult symmetric_eigh(const Matrix& s) {
    require(s.rows == s.cols, "symmetric_eigh: matrix must be square");
    const std::size_t n = s.rows;
    require(n >= 1 && n <= 64, "symmetric_eigh: n must be in [1, 64]");
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            require(std::abs(s(i, j) - s(j, i)) < 1e-10, "symmetric_eigh: matrix not symmetric");
        }
    }

    Matrix a = s;
    Matrix v(n, n);
    for (std::size_t i = 0; i < n; ++i) v(i, i) = 1.0;

    auto off_frob = [&]() {
        double t = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                if (i != j) t += a(i, j) * a(i, j);
            }
        }
        return std::sqrt(t);
    };

    double prev_off = off_frob();
    for (int sweep = 0; sweep < 100 && prev_off >= 1e-12; ++sweep) {
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (apq == 0.0) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double sn = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a(k, p), akq = a(k, q);
                    a(k, p) = c * akp - sn * akq;
                    a(k, q) = sn * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a(p, k), aqk = a(q, k);
                    a(p, k) = c * apk - sn * aqk;
                    a(q, k) = sn * apk + c * aqk;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double vkp = v(k, p), vkq = v(k, q);
                    v(k, p) = c * vkp - sn * vkq;
                    v(k, q) = sn * vkp + c * vkq;
                }
            }
        }
        const double off = off_frob();
        if (off >= prev_off && off < 1e-10) break;  // machine-precision stall
        prev_off = off;
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t i, std::size_t j) { return a(i, i) > a(j, j); });

    EighResult res;
    res.values.resize(n);
    res.vectors = Matrix(n, n);
    for (std::size_t c = 0; c < n; ++c) {
        res.values[c] = a(order[c], order[c]);
        for (std::size_t i = 0; i < n; ++i) res.vectors(i, c) = v(i, order[c]);
    }
    return res;
}

double pca_reconstruction_loss(const Matrix& group, const Matrix& u) {
    require(group.rows >= 1, "pca_reconstruction_loss: empty group");
    require(u.rows == group.cols, "pca_reconstruction_loss: U rows must match feature count");
    require(u.cols >= 1 && u.cols <= u.rows, "pca_reconstruction_loss: need 1 <= d <= n");
    for (std::size_t i = 0; i < u.cols; ++i) {
        for (std::size_t j = 0; j < u.cols; ++j) {
            double dotc = 0.0;
            for (std::size_t k = 0; k < u.rows; ++k) dotc += u(k, i) * u(k, j);
            const double target = (i == j) ? 1.0 : 0.0;
            require(std::abs(dotc - target) < 1e-8, "pca_reconstruction_loss: U not orthonormal");
        }
    }
    const Matrix s = gram(group);
    const EighResult eig = symmetric_eigh(s);
    double top = 0.0;
    for (std::size_t i = 0; i < u.cols; ++i) top += eig.values[i];
    return (top - trace_quad(s, u)) / static_cast<double>(group.rows);
}

}  // namespace klrs
