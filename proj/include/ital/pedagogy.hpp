#pragma once

// Teachers and learners for iterative machine teaching.
//
// Teachers score each candidate in a mini-batch by its teaching volume (the
// one-step progress a naive gradient learner would make toward the target)
// and pick one. Learners are state-transition functions: the naive learner
// takes a plain gradient step on the chosen example; the teacher-aware
// learner additionally ascends log q, the probability that a Boltzmann-
// rational teacher would have chosen that example from its alternatives.

#include "ital/linmodel.hpp"
#include "ital/random.hpp"

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace ital {

enum class TeacherMode { OmniscientCooperative, FeedbackCooperative, Adversarial, Random };

std::string to_string(TeacherMode mode);
TeacherMode teacher_mode_from_string(const std::string& name);

/// value_t = base * (1 - rate)^t. Used for beta and for the learning rate.
class Schedule {
public:
    static Schedule constant(double base);
    static Schedule exponential_decay(double base, double rate);

    double at(std::size_t t) const;
    double base() const { return base_; }
    double rate() const { return rate_; }
    bool decays() const { return rate_ != 0; }

private:
    Schedule(double base, double rate) : base_(base), rate_(rate) {}
    double base_ = 0;
    double rate_ = 0;
};

using BetaSchedule = Schedule;

struct LearnerState {
    Params params;                              ///< nu^t
    std::size_t step = 0;                       ///< t
    Schedule eta = Schedule::constant(1e-3);    ///< learning rate eta_t
    Schedule beta = Schedule::constant(0);      ///< teacher-model sharpness beta_t
    std::size_t subset_size = 0;                ///< M = |D^t hat|; 0 is naive

    double current_eta() const { return eta.at(step); }
    double current_beta() const { return beta.at(step); }
};

struct SelectionRecord {
    std::size_t chosen = 0;
    std::vector<Vector> feedback;   ///< alpha_x per candidate (empty for omniscient)
    std::vector<double> volumes;    ///< teacher-side teaching volume per candidate
};

/// -eta^2 ||g||^2 + 2 eta <w_prev - w*, g>, g = loss_grad at w_prev.
double teaching_volume_omniscient(const LossSpec& spec, const Params& w_prev, const Params& w_star,
                                  double eta, const TeachingExample& ex);

/// Feedback teacher: -eta^2 ||dl/dalpha [x;1]^T||_F^2 + 2 eta (l(alpha, y) - l(<x, w*>, y)).
/// Depends on the learner only through the reported logits alpha_x.
double teaching_volume_feedback(const LossSpec& spec, const Vector& alpha, const TeachingExample& ex,
                                const Params& w_star, double eta);

/// Cooperative modes take the argmax, Adversarial the argmin, Random a
/// uniform draw. Ties go to the lowest index.
std::size_t select_example(std::span<const double> volumes, TeacherMode mode, Rng& rng);

/// Learner-side estimate with nu_hyp standing in for nu*:
/// -eta^2 ||g(nu_prev)||^2 + 2 eta (l(nu_prev) - l(nu_hyp)).
double estimated_teaching_volume(const LossSpec& spec, const Params& nu_hyp, const Params& nu_prev,
                                 double eta, const TeachingExample& ex);

/// softmax(beta * volumes) with max shift. Sums to one.
std::vector<double> selection_distribution(std::span<const double> volumes, double beta);

/// nu <- nu - eta_t g(nu); t <- t + 1.
LearnerState naive_update(const LearnerState& state, const LossSpec& spec, const TeachingExample& ex);

/// nu <- nu - eta_t * mean_i g_i(nu); t <- t + 1.
LearnerState batch_update(const LearnerState& state, const LossSpec& spec, const TeachingBatch& batch);

struct ItalDiagnostics {
    std::vector<std::size_t> support;  ///< batch indices; support[0] is the chosen one
    std::vector<double> est_volumes;   ///< TV-hat over the support
    std::vector<double> q;             ///< selection distribution over the support
    Params intermediate;               ///< nu-hat after the naive stage
    Params chosen_grad;                ///< g_{x^t}(nu-hat)
    Params expected_grad;              ///< E_q[g_x(nu-hat)]
    Params correction;                 ///< 2 beta eta^2 (chosen_grad - expected_grad)
};

/// The correction term 2 beta eta^2 (g_chosen - sum_i q_i g_i), given the
/// support's estimated volumes and gradients (gradients[chosen_pos] is the
/// chosen example's). Shared by the linear and IRL learners.
Params teacher_aware_correction(std::span<const double> est_volumes, std::span<const Params> gradients,
                                std::size_t chosen_pos, double beta, double eta,
                                std::vector<double>* q_out = nullptr, Params* expected_out = nullptr);

/// Two-stage teacher-aware update: nu-hat = nu - eta g_chosen(nu), then
/// nu' = nu-hat - 2 beta eta^2 (g_chosen(nu-hat) - E_q[g(nu-hat)]) with q
/// normalized over {chosen} u subset.
std::pair<LearnerState, ItalDiagnostics> ital_update(const LearnerState& state, const LossSpec& spec,
                                                     const TeachingBatch& batch, std::size_t chosen,
                                                     std::span<const std::size_t> subset);

/// Uniform sample of `m` distinct indices from [0, n) \ {chosen}.
std::vector<std::size_t> sample_subset(std::size_t n, std::size_t chosen, std::size_t m, Rng& rng);

/// log q_nu(x^t | nu_prev, D) with D = the whole batch.
double log_selection_probability(const LossSpec& spec, const TeachingBatch& batch, std::size_t chosen,
                                 const Params& nu, const Params& nu_prev, double eta, double beta);

/// Analytic d log q / d nu = -2 beta eta (g_chosen(nu) - E_q[g(nu)]).
Params log_selection_probability_grad(const LossSpec& spec, const TeachingBatch& batch,
                                      std::size_t chosen, const Params& nu, const Params& nu_prev,
                                      double eta, double beta);

/// Max relative error between the analytic gradient of log q and a central
/// finite difference (step 1e-5). Test utility for small instances.
double log_q_grad_check(const LossSpec& spec, const TeachingBatch& batch, std::size_t chosen,
                        const Params& nu, const Params& nu_prev, double eta, double beta);

} // namespace ital
