#pragma once

#include <cstddef>
#include <memory>
#include <vector>

#include "klrs/core_math.hpp"

namespace klrs {

using ParameterVector = std::vector<double>;

/// Rows are samples; labels and group_ids are optional (empty when absent).
struct Dataset {
    std::vector<std::vector<double>> features;
    std::vector<double> labels;
    std::vector<int> group_ids;

    std::size_t n() const { return features.size(); }
    std::size_t width() const { return features.empty() ? 0 : features[0].size(); }
    void validate() const;
};

/// Loss l(theta, z_i) with analytic gradient; dim() is the parameter count.
class LossModel {
public:
    virtual ~LossModel() = default;
    virtual std::size_t dim() const = 0;
    virtual double loss(const ParameterVector& theta, const Dataset& data, std::size_t i) const = 0;
    virtual void grad(const ParameterVector& theta, const Dataset& data, std::size_t i,
                      std::vector<double>& out) const = 0;
};

double point_estimation_loss(const ParameterVector& theta, const std::vector<double>& z);
std::vector<double> point_estimation_grad(const ParameterVector& theta, const std::vector<double>& z);

double logistic_loss(const ParameterVector& theta, const std::vector<double>& x, double y);
std::vector<double> logistic_grad(const ParameterVector& theta, const std::vector<double>& x, double y);

double least_squares_loss(const ParameterVector& theta, const std::vector<double>& x, double y);
std::vector<double> least_squares_grad(const ParameterVector& theta, const std::vector<double>& x, double y);

/// l(theta, z) = 0.5 * ||theta - z||^2 over the sample's features.
class PointEstimationModel : public LossModel {
public:
    explicit PointEstimationModel(std::size_t f) : f_(f) {}
    std::size_t dim() const override { return f_; }
    double loss(const ParameterVector& theta, const Dataset& data, std::size_t i) const override;
    void grad(const ParameterVector& theta, const Dataset& data, std::size_t i,
              std::vector<double>& out) const override;

private:
    std::size_t f_;
};

/// Linear logistic model with bias; theta = (w_1..w_F, b), labels in {0,1}.
class LogisticModel : public LossModel {
public:
    explicit LogisticModel(std::size_t f) : f_(f) {}
    std::size_t dim() const override { return f_ + 1; }
    double loss(const ParameterVector& theta, const Dataset& data, std::size_t i) const override;
    void grad(const ParameterVector& theta, const Dataset& data, std::size_t i,
              std::vector<double>& out) const override;

private:
    std::size_t f_;
};

/// l = 0.5 * (theta . x - y)^2, no intercept.
class LeastSquaresModel : public LossModel {
public:
    explicit LeastSquaresModel(std::size_t f) : f_(f) {}
    std::size_t dim() const override { return f_; }
    double loss(const ParameterVector& theta, const Dataset& data, std::size_t i) const override;
    void grad(const ParameterVector& theta, const Dataset& data, std::size_t i,
              std::vector<double>& out) const override;

private:
    std::size_t f_;
};

/// Theta-free instance: the loss is the sample's single feature column.
/// Lets the lambda search run against exact closed-form feasibility.
class FixedLossModel : public LossModel {
public:
    std::size_t dim() const override { return 0; }
    double loss(const ParameterVector&, const Dataset& data, std::size_t i) const override {
        return data.features[i][0];
    }
    void grad(const ParameterVector&, const Dataset&, std::size_t,
              std::vector<double>& out) const override {
        out.clear();
    }
};

std::vector<double> all_losses(const LossModel& model, const ParameterVector& theta,
                               const Dataset& data);

/// Dense row-major matrix, desk scale.
struct Matrix {
    std::size_t rows = 0, cols = 0;
    std::vector<double> a;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), a(r * c, 0.0) {}
    double& operator()(std::size_t i, std::size_t j) { return a[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return a[i * cols + j]; }
};

Matrix matmul(const Matrix& x, const Matrix& y);
Matrix transpose(const Matrix& x);
/// Y^T * Y.
Matrix gram(const Matrix& y);
/// trace(U^T * S * U) for symmetric S.
double trace_quad(const Matrix& s, const Matrix& u);
/// Modified Gram-Schmidt thin QR; returns the orthonormalized Q factor.
Matrix qr_orthonormalize(const Matrix& u);

struct EighResult {
    std::vector<double> values;  // descending
    Matrix vectors;              // column i pairs with values[i]
};

/// Cyclic Jacobi for symmetric S, n <= 64; off-diagonal driven below 1e-12.
EighResult symmetric_eigh(const Matrix& s);

/// (1/a) * (||Y - Y U U^T||_F^2 - ||Y - Yhat_d||_F^2) with Yhat_d the best
/// rank-d approximation; requires U^T U = I within 1e-8.
double pca_reconstruction_loss(const Matrix& group, const Matrix& u);

}  // namespace klrs
