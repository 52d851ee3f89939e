#pragma once

// Linear models h(<x, w>) with squared-error and softmax cross-entropy losses.
//
// Parameters are stored as a K x (d+1) row-major matrix; the last column is
// the bias, which multiplies an implicit constant feature 1. Regression uses
// K = 1. When a parameter is treated as a vector it is the row-major
// flattening of that matrix, so inner products and norms are Frobenius.

#include <Eigen/Dense>

#include <cstddef>
#include <vector>

namespace ital {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

/// Model parameter (w, b) of shape K x (d+1).
using Params = Matrix;

struct TeachingExample {
    Vector features;   ///< length d, bias feature is not stored
    double label = 0;  ///< regression target, or class index for classification

    int class_index() const { return static_cast<int>(label); }
};

enum class Representation { Teacher, Learner };

struct TeachingBatch {
    std::vector<TeachingExample> examples;
    Representation representation = Representation::Learner;

    std::size_t size() const { return examples.size(); }
    const TeachingExample& operator[](std::size_t i) const { return examples[i]; }
};

enum class LossKind { SquaredError, CrossEntropy };

struct LossSpec {
    LossKind kind = LossKind::SquaredError;
    int classes = 1;     ///< K; 1 for squared error
    double lambda = 0;   ///< weight-only L2 penalty (lambda/2)||w||_F^2

    static LossSpec squared(double lambda = 0);
    static LossSpec cross_entropy(int classes, double lambda = 0);

    /// Number of output rows of a compatible parameter.
    int rows() const { return kind == LossKind::SquaredError ? 1 : classes; }

    /// Throws ShapeError if the spec itself is invalid (K < 2, lambda < 0).
    void validate() const;
};

/// Zero parameter of the right shape for `spec` and feature dimension d.
Params zero_params(const LossSpec& spec, Eigen::Index dim);

/// Throws ShapeError unless p and ex agree with spec (and label is in range).
void check_shapes(const LossSpec& spec, const Params& p, const TeachingExample& ex);

/// <x~, nu> per output row, bias included. This is also the learner's
/// feedback alpha_x for the example.
Vector logits(const LossSpec& spec, const Params& p, const TeachingExample& ex);

/// Unregularized loss as a function of the logits alone.
double loss_from_logits(const LossSpec& spec, const Vector& logits, double label);

/// d loss / d logits (unregularized).
Vector logit_gradient(const LossSpec& spec, const Vector& logits, double label);

/// Numerically stable softmax (max-shifted).
Vector softmax(const Vector& z);

/// Per-example loss including the (lambda/2)||w||^2 penalty (bias excluded).
double loss_value(const LossSpec& spec, const Params& p, const TeachingExample& ex);

/// Exact gradient of loss_value with respect to p.
Params loss_grad(const LossSpec& spec, const Params& p, const TeachingExample& ex);

/// Squared Frobenius norm.
double grad_sq_norm(const Params& g);

/// Frobenius inner product of two equally shaped parameters.
double flat_dot(const Params& a, const Params& b);

/// ||a - b||_2 over the flattened parameters, bias included.
double param_distance(const Params& a, const Params& b);

/// Argmax of the logits (classification prediction).
int predict_class(const LossSpec& spec, const Params& p, const TeachingExample& ex);

} // namespace ital
