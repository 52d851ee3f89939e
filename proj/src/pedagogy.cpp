#include "ital/pedagogy.hpp"

#include "ital/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace ital {

std::string to_string(TeacherMode mode) {
    switch (mode) {
    case TeacherMode::OmniscientCooperative: return "omniscient";
    case TeacherMode::FeedbackCooperative: return "cooperative";
    case TeacherMode::Adversarial: return "adversarial";
    case TeacherMode::Random: return "random";
    }
    return "?";
}

TeacherMode teacher_mode_from_string(const std::string& name) {
    if (name == "omniscient") return TeacherMode::OmniscientCooperative;
    if (name == "cooperative" || name == "feedback") return TeacherMode::FeedbackCooperative;
    if (name == "adversarial") return TeacherMode::Adversarial;
    if (name == "random") return TeacherMode::Random;
    throw ConfigError("unknown teacher mode '" + name + "'");
}

Schedule Schedule::constant(double base) { return Schedule(base, 0); }

Schedule Schedule::exponential_decay(double base, double rate) {
    if (!(rate >= 0 && rate < 1)) throw ConfigError("schedule decay rate must lie in [0, 1)");
    return Schedule(base, rate);
}

double Schedule::at(std::size_t t) const {
    if (rate_ == 0) return base_;
    return base_ * std::pow(1.0 - rate_, static_cast<double>(t));
}

double teaching_volume_omniscient(const LossSpec& spec, const Params& w_prev, const Params& w_star,
                                  double eta, const TeachingExample& ex) {
    if (w_prev.rows() != w_star.rows() || w_prev.cols() != w_star.cols())
        throw ShapeError("omniscient teacher needs learner and teacher in one parameter space");
    const Params g = loss_grad(spec, w_prev, ex);
    return -eta * eta * grad_sq_norm(g) + 2 * eta * flat_dot(w_prev - w_star, g);
}

double teaching_volume_feedback(const LossSpec& spec, const Vector& alpha, const TeachingExample& ex,
                                const Params& w_star, double eta) {
    if (alpha.size() != spec.rows())
        throw ShapeError("feedback has " + std::to_string(alpha.size()) + " logits, loss expects " +
                         std::to_string(spec.rows()));
    const Vector dz = logit_gradient(spec, alpha, ex.label);
    // ||dz [x;1]^T||_F^2 factorizes as ||dz||^2 (||x||^2 + 1).
    const double grad_norm = dz.squaredNorm() * (ex.features.squaredNorm() + 1.0);
    const Vector star = logits(spec, w_star, ex);
    return -eta * eta * grad_norm +
           2 * eta * (loss_from_logits(spec, alpha, ex.label) - loss_from_logits(spec, star, ex.label));
}

std::size_t select_example(std::span<const double> volumes, TeacherMode mode, Rng& rng) {
    if (volumes.empty()) throw ShapeError("select_example on an empty batch");
    switch (mode) {
    case TeacherMode::Random:
        return std::uniform_int_distribution<std::size_t>(0, volumes.size() - 1)(rng);
    case TeacherMode::Adversarial:
        return static_cast<std::size_t>(std::min_element(volumes.begin(), volumes.end()) - volumes.begin());
    default:
        return static_cast<std::size_t>(std::max_element(volumes.begin(), volumes.end()) - volumes.begin());
    }
}

double estimated_teaching_volume(const LossSpec& spec, const Params& nu_hyp, const Params& nu_prev,
                                 double eta, const TeachingExample& ex) {
    const Params g = loss_grad(spec, nu_prev, ex);
    return -eta * eta * grad_sq_norm(g) +
           2 * eta * (loss_value(spec, nu_prev, ex) - loss_value(spec, nu_hyp, ex));
}

std::vector<double> selection_distribution(std::span<const double> volumes, double beta) {
    std::vector<double> q(volumes.size());
    if (q.empty()) return q;
    double top = -INFINITY;
    for (double v : volumes) top = std::max(top, beta * v);
    double total = 0;
    for (std::size_t i = 0; i < q.size(); ++i) {
        q[i] = std::exp(beta * volumes[i] - top);
        total += q[i];
    }
    for (double& v : q) v /= total;
    return q;
}

LearnerState naive_update(const LearnerState& state, const LossSpec& spec, const TeachingExample& ex) {
    LearnerState next = state;
    next.params = state.params - state.current_eta() * loss_grad(spec, state.params, ex);
    ++next.step;
    return next;
}

LearnerState batch_update(const LearnerState& state, const LossSpec& spec, const TeachingBatch& batch) {
    if (batch.size() == 0) throw ShapeError("batch_update on an empty batch");
    Params mean = Params::Zero(state.params.rows(), state.params.cols());
    for (const auto& ex : batch.examples) mean += loss_grad(spec, state.params, ex);
    mean /= static_cast<double>(batch.size());
    LearnerState next = state;
    next.params = state.params - state.current_eta() * mean;
    ++next.step;
    return next;
}

Params teacher_aware_correction(std::span<const double> est_volumes, std::span<const Params> gradients,
                                std::size_t chosen_pos, double beta, double eta, std::vector<double>* q_out,
                                Params* expected_out) {
    if (est_volumes.size() != gradients.size() || gradients.empty() || chosen_pos >= gradients.size())
        throw ShapeError("teacher-aware correction: support/gradient mismatch");
    const std::vector<double> q = selection_distribution(est_volumes, beta);
    Params expected = Params::Zero(gradients[0].rows(), gradients[0].cols());
    for (std::size_t i = 0; i < q.size(); ++i) expected += q[i] * gradients[i];
    Params correction = (2 * beta * eta * eta) * (gradients[chosen_pos] - expected);
    if (!correction.allFinite()) throw NumericError("teacher-aware correction is not finite");
    if (q_out) *q_out = q;
    if (expected_out) *expected_out = std::move(expected);
    return correction;
}

std::pair<LearnerState, ItalDiagnostics> ital_update(const LearnerState& state, const LossSpec& spec,
                                                     const TeachingBatch& batch, std::size_t chosen,
                                                     std::span<const std::size_t> subset) {
    if (chosen >= batch.size()) throw ShapeError("chosen index outside the batch");
    for (std::size_t i : subset) {
        if (i >= batch.size() || i == chosen) throw ShapeError("invalid subset index");
    }

    ItalDiagnostics diag;
    diag.support.push_back(chosen);
    diag.support.insert(diag.support.end(), subset.begin(), subset.end());

    const double eta = state.current_eta();
    const double beta = state.current_beta();
    const Params& nu_prev = state.params;

    diag.intermediate = nu_prev - eta * loss_grad(spec, nu_prev, batch[chosen]);

    std::vector<Params> grads;
    grads.reserve(diag.support.size());
    for (std::size_t i : diag.support) {
        diag.est_volumes.push_back(estimated_teaching_volume(spec, diag.intermediate, nu_prev, eta, batch[i]));
        grads.push_back(loss_grad(spec, diag.intermediate, batch[i]));
    }
    diag.chosen_grad = grads.front();
    diag.correction =
        teacher_aware_correction(diag.est_volumes, grads, 0, beta, eta, &diag.q, &diag.expected_grad);

    LearnerState next = state;
    next.params = diag.intermediate - diag.correction;
    ++next.step;
    return {std::move(next), std::move(diag)};
}

std::vector<std::size_t> sample_subset(std::size_t n, std::size_t chosen, std::size_t m, Rng& rng) {
    if (chosen >= n) throw ShapeError("chosen index outside the batch");
    std::vector<std::size_t> pool;
    pool.reserve(n - 1);
    for (std::size_t i = 0; i < n; ++i)
        if (i != chosen) pool.push_back(i);
    if (m >= pool.size()) return pool;
    // Partial Fisher-Yates: the first m entries become the sample.
    for (std::size_t i = 0; i < m; ++i) {
        std::size_t j = std::uniform_int_distribution<std::size_t>(i, pool.size() - 1)(rng);
        std::swap(pool[i], pool[j]);
    }
    pool.resize(m);
    return pool;
}

double log_selection_probability(const LossSpec& spec, const TeachingBatch& batch, std::size_t chosen,
                                 const Params& nu, const Params& nu_prev, double eta, double beta) {
    std::vector<double> scores(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i)
        scores[i] = beta * estimated_teaching_volume(spec, nu, nu_prev, eta, batch[i]);
    const double top = *std::max_element(scores.begin(), scores.end());
    double total = 0;
    for (double s : scores) total += std::exp(s - top);
    return scores[chosen] - top - std::log(total);
}

Params log_selection_probability_grad(const LossSpec& spec, const TeachingBatch& batch,
                                      std::size_t chosen, const Params& nu, const Params& nu_prev,
                                      double eta, double beta) {
    if (chosen >= batch.size()) throw ShapeError("chosen index outside the batch");
    std::vector<double> volumes(batch.size());
    std::vector<Params> grads(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
        volumes[i] = estimated_teaching_volume(spec, nu, nu_prev, eta, batch[i]);
        grads[i] = loss_grad(spec, nu, batch[i]);
    }
    // d log q / d nu = -(1/eta) * correction, where correction = 2 beta eta^2 (g - E g).
    const std::vector<double> q = selection_distribution(volumes, beta);
    Params expected = Params::Zero(nu.rows(), nu.cols());
    for (std::size_t i = 0; i < q.size(); ++i) expected += q[i] * grads[i];
    return (-2 * beta * eta) * (grads[chosen] - expected);
}

double log_q_grad_check(const LossSpec& spec, const TeachingBatch& batch, std::size_t chosen,
                        const Params& nu, const Params& nu_prev, double eta, double beta) {
    constexpr double h = 1e-5;
    const Params analytic = log_selection_probability_grad(spec, batch, chosen, nu, nu_prev, eta, beta);
    Params numeric(nu.rows(), nu.cols());
    Params probe = nu;
    for (Eigen::Index r = 0; r < nu.rows(); ++r) {
        for (Eigen::Index c = 0; c < nu.cols(); ++c) {
            const double orig = probe(r, c);
            probe(r, c) = orig + h;
            const double up = log_selection_probability(spec, batch, chosen, probe, nu_prev, eta, beta);
            probe(r, c) = orig - h;
            const double down = log_selection_probability(spec, batch, chosen, probe, nu_prev, eta, beta);
            probe(r, c) = orig;
            numeric(r, c) = (up - down) / (2 * h);
        }
    }
    const double scale = std::max(analytic.cwiseAbs().maxCoeff(), numeric.cwiseAbs().maxCoeff());
    const double diff = (analytic - numeric).cwiseAbs().maxCoeff();
    return scale > 1e-12 ? diff / scale : diff;
}

} // namespace ital
