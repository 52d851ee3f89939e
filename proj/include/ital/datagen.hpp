#pragma once

// Synthetic regression / Gaussian-cluster classification tasks, random
// orthogonal feature maps for teacher/learner representation mismatch, and
// the plain-text format for externally extracted feature datasets.

#include "ital/linmodel.hpp"
#include "ital/random.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <variant>
#include <vector>

namespace ital {

struct RegressionTask {
    int dim = 100;
    int count = 1000;
};

struct GaussianClassesTask {
    int dim = 30;
    int classes = 10;
    int count = 1000;
    double variance = 0.5;      ///< isotropic covariance variance * I
    double center_scale = 1.0;  ///< centers ~ U[-1, 1] * center_scale
    double fit_lambda = -1;     ///< ridge weight for fitting omega*; < 0 means 1 / count
};

struct SyntheticTaskSpec {
    std::variant<RegressionTask, GaussianClassesTask> task;
    std::uint64_t seed = 0;

    /// Throws ConfigError for non-positive sizes, count not divisible by K,
    /// or non-positive variance.
    void validate() const;
};

struct Dataset {
    int dim = 0;
    int classes = 0;  ///< 0 for regression
    std::vector<TeachingExample> examples;

    LossSpec loss(double lambda = 0) const {
        return classes == 0 ? LossSpec::squared(lambda) : LossSpec::cross_entropy(classes, lambda);
    }
};

struct SyntheticTask {
    Dataset data;
    Params omega_star;
};

/// X, w and b i.i.d. U[-1, 1]; y = <x, w> + b exactly.
SyntheticTask gen_regression(const SyntheticTaskSpec& spec);

/// count / K points from each of K Gaussians; omega* fitted by
/// fit_multinomial_logistic. Examples are grouped by class.
SyntheticTask gen_classification(const SyntheticTaskSpec& spec);

SyntheticTask generate(const SyntheticTaskSpec& spec);

struct LogisticFit {
    Params params;
    double objective = 0;
    double grad_norm = 0;
    std::size_t iterations = 0;
};

/// Minimizes mean cross-entropy + (lambda/2)||w||_F^2 (bias unpenalized) by
/// damped Newton steps with backtracking until ||grad|| < tol. Throws
/// ConvergenceError carrying the final gradient norm otherwise.
LogisticFit fit_multinomial_logistic(const std::vector<TeachingExample>& examples, int dim, int classes,
                                     double lambda, double tol = 1e-6, std::size_t max_iterations = 200);

/// Deterministic shuffle then split; the last `fraction` of the shuffled
/// examples form the held-out set.
std::pair<std::vector<TeachingExample>, std::vector<TeachingExample>>
split_holdout(std::vector<TeachingExample> examples, double fraction, Rng& rng);

/// Orthogonal d x d map. Teacher features are x = P^T x~; weight rows move
/// the same way, so <x, w> = <x~, nu> whenever w = P^T nu.
struct FeatureMap {
    Matrix p;

    int dim() const { return static_cast<int>(p.rows()); }
    Vector to_teacher(const Vector& learner_features) const;
    Vector to_learner(const Vector& teacher_features) const;
    /// Weight columns transported to teacher space, bias unchanged.
    Params params_to_teacher(const Params& learner_params) const;
    Params params_to_learner(const Params& teacher_params) const;
    std::vector<TeachingExample> examples_to_teacher(const std::vector<TeachingExample>& examples) const;
};

/// QR of a standard Gaussian matrix with R's diagonal signs folded into Q.
FeatureMap make_feature_map(int dim, Rng& rng);

/// Text format: header "# d=<d> K=<K> n=<n>", then n lines "label,f1,...,fd".
/// K = 0 marks real-valued (regression) labels.
Dataset read_feature_dataset(std::istream& in);
Dataset load_feature_dataset(const std::string& path);
void write_feature_dataset(std::ostream& out, const Dataset& data);
void save_feature_dataset(const std::string& path, const Dataset& data);

} // namespace ital
