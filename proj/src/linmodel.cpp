#include "ital/linmodel.hpp"

#include "ital/errors.hpp"

#include <cmath>
#include <string>

namespace ital {

LossSpec LossSpec::squared(double lambda) {
    LossSpec s{LossKind::SquaredError, 1, lambda};
    s.validate();
    return s;
}

LossSpec LossSpec::cross_entropy(int classes, double lambda) {
    LossSpec s{LossKind::CrossEntropy, classes, lambda};
    s.validate();
    return s;
}

void LossSpec::validate() const {
    if (!(lambda >= 0)) throw ShapeError("LossSpec: lambda must be nonnegative");
    if (kind == LossKind::CrossEntropy && classes < 2)
        throw ShapeError("LossSpec: cross-entropy needs K >= 2");
}

Params zero_params(const LossSpec& spec, Eigen::Index dim) {
    return Params::Zero(spec.rows(), dim + 1);
}

void check_shapes(const LossSpec& spec, const Params& p, const TeachingExample& ex) {
    if (p.rows() != spec.rows())
        throw ShapeError("parameter has " + std::to_string(p.rows()) + " rows, loss expects " +
                         std::to_string(spec.rows()));
    if (p.cols() != ex.features.size() + 1)
        throw ShapeError("parameter has " + std::to_string(p.cols()) +
                         " columns, example needs d+1 = " +
                         std::to_string(ex.features.size() + 1));
    if (spec.kind == LossKind::CrossEntropy) {
        const int y = ex.class_index();
        if (y < 0 || y >= spec.classes || static_cast<double>(y) != ex.label)
            throw ShapeError("class label " + std::to_string(ex.label) + " outside [0, " +
                             std::to_string(spec.classes) + ")");
    }
}

Vector logits(const LossSpec& spec, const Params& p, const TeachingExample& ex) {
    check_shapes(spec, p, ex);
    const Eigen::Index d = ex.features.size();
    return p.leftCols(d) * ex.features + p.col(d);
}

Vector softmax(const Vector& z) {
    const double m = z.maxCoeff();
    Vector e = (z.array() - m).exp();
    return e / e.sum();
}

namespace {

double log_sum_exp(const Vector& z) {
    const double m = z.maxCoeff();
    return m + std::log((z.array() - m).exp().sum());
}

double weight_penalty(const LossSpec& spec, const Params& p) {
    if (spec.lambda == 0) return 0;
    return 0.5 * spec.lambda * p.leftCols(p.cols() - 1).squaredNorm();
}

} // namespace

double loss_from_logits(const LossSpec& spec, const Vector& z, double label) {
    if (spec.kind == LossKind::SquaredError) {
        const double r = z(0) - label;
        return 0.5 * r * r;
    }
    return log_sum_exp(z) - z(static_cast<Eigen::Index>(label));
}

Vector logit_gradient(const LossSpec& spec, const Vector& z, double label) {
    if (spec.kind == LossKind::SquaredError) {
        Vector g(1);
        g(0) = z(0) - label;
        return g;
    }
    Vector g = softmax(z);
    g(static_cast<Eigen::Index>(label)) -= 1.0;
    return g;
}

double loss_value(const LossSpec& spec, const Params& p, const TeachingExample& ex) {
    const double v = loss_from_logits(spec, logits(spec, p, ex), ex.label) + weight_penalty(spec, p);
    if (!std::isfinite(v)) throw NumericError("loss value is not finite");
    return v;
}

Params loss_grad(const LossSpec& spec, const Params& p, const TeachingExample& ex) {
    const Vector z = logits(spec, p, ex);
    const Vector dz = logit_gradient(spec, z, ex.label);
    const Eigen::Index d = ex.features.size();

    Params g(p.rows(), p.cols());
    g.leftCols(d) = dz * ex.features.transpose();
    g.col(d) = dz;
    if (spec.lambda != 0) g.leftCols(d) += spec.lambda * p.leftCols(d);
    if (!g.allFinite()) throw NumericError("loss gradient is not finite");
    return g;
}

double grad_sq_norm(const Params& g) { return g.squaredNorm(); }

double flat_dot(const Params& a, const Params& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw ShapeError("inner product of differently shaped parameters");
    return a.cwiseProduct(b).sum();
}

double param_distance(const Params& a, const Params& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw ShapeError("distance between differently shaped parameters");
    return (a - b).norm();
}

int predict_class(const LossSpec& spec, const Params& p, const TeachingExample& ex) {
    Eigen::Index best = 0;
    logits(spec, p, ex).maxCoeff(&best);
    return static_cast<int>(best);
}

} // namespace ital
