#pragma once

// Gridworld MDPs, soft value iteration, Boltzmann-rational demonstrators and
// the online IRL likelihood used to teach a per-grid reward function.

#include "ital/linmodel.hpp"
#include "ital/pedagogy.hpp"
#include "ital/random.hpp"

#include <array>
#include <cstddef>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace ital {

enum class Action : int { Up = 0, Down = 1, Left = 2, Right = 3 };
inline constexpr int kNumActions = 4;

std::string to_string(Action a);
Action action_from_string(const std::string& name);

/// One outcome of taking an action. `next < 0` is the absorbing zero-reward sink.
struct Transition {
    int next = 0;
    double prob = 0;
};

/// Finite MDP with rewards received on arrival: r(s').
class TabularMdp {
public:
    TabularMdp(int states, int actions, double discount);

    void add_transition(int state, int action, int next, double prob);
    const std::vector<Transition>& outcomes(int state, int action) const {
        return outcomes_[static_cast<std::size_t>(state * actions_ + action)];
    }

    int num_states() const { return states_; }
    int num_actions() const { return actions_; }
    double discount() const { return discount_; }

    /// Throws ConfigError unless every (s, a) distributes total mass 1 +- 1e-12
    /// over valid successors and 0 < gamma < 1.
    void validate() const;

private:
    int states_;
    int actions_;
    double discount_;
    std::vector<std::vector<Transition>> outcomes_;
};

struct TransitionSpec {
    double success = 0.8;   ///< move to the target grid
    double neighbor = 0.18; ///< split evenly over the 4 directions; blocked ones stay put
    double death = 0.02;    ///< absorbing terminal sink
};

/// Per-grid reward parameter, indexed in the holder's own encoding.
using RewardParams = Vector;

/// Rectangular grid. Cells are numbered row-major; `encoding()[cell]` is the
/// index of that cell's one-hot feature (its reward parameter) for whoever
/// holds this MDP. The learner uses the identity; the teacher a shuffle.
class GridworldMDP {
public:
    GridworldMDP(int width, int height, TransitionSpec transitions = {}, double discount = 0.5,
                 std::vector<int> encoding = {});

    int width() const { return width_; }
    int height() const { return height_; }
    int num_states() const { return width_ * height_; }
    double discount() const { return tabular_.discount(); }
    const TransitionSpec& transitions() const { return transitions_; }
    const std::vector<int>& encoding() const { return encoding_; }
    const TabularMdp& tabular() const { return tabular_; }

    int cell(int row, int col) const { return row * width_ + col; }
    int row(int cell) const { return cell / width_; }
    int col(int cell) const { return cell % width_; }
    int cell_of_param(int index) const { return decoding_[static_cast<std::size_t>(index)]; }

    /// Adjacent grid in the action's direction; the cell itself at an edge.
    int target(int cell, Action a) const;

    /// r(cell) = params[encoding[cell]].
    Vector cell_rewards(const RewardParams& params) const;
    /// Inverse of cell_rewards.
    RewardParams params_from_cells(const Vector& cell_rewards) const;

    GridworldMDP with_encoding(std::vector<int> encoding) const;

    /// Same geometry, dynamics and discount (encodings may differ).
    bool same_world(const GridworldMDP& other) const;

private:
    int width_;
    int height_;
    TransitionSpec transitions_;
    std::vector<int> encoding_;
    std::vector<int> decoding_;
    TabularMdp tabular_;
};

/// Uniformly random bijection over [0, n).
std::vector<int> random_encoding(int n, Rng& rng);

/// Re-express `params` (encoded for `from`) in `to`'s encoding.
RewardParams translate_params(const GridworldMDP& from, const GridworldMDP& to, const RewardParams& params);

struct SoftPlanner {
    double sharpness = 100;   ///< k in max(a) ~ log(sum exp(k a_i)) / k
    double rationality = 5;   ///< alpha in pi(a|s) ~ exp(alpha Q(s, a))
    double tolerance = 1e-8;
    std::size_t max_sweeps = 10000;

    void validate() const;
};

struct PlannerResult {
    Matrix q;  ///< |S| x |A|
    Vector v;  ///< |S|
    std::size_t sweeps = 0;
    double residual = 0;
    std::vector<double> residuals;  ///< max-abs change of Q per sweep
};

/// log(sum_i exp(k x_i)) / k, computed with a max shift.
double soft_max(std::span<const double> values, double sharpness);

/// Fixed point of Q(s,a) = sum_s' P(s'|s,a) [r(s') + gamma softmax_k Q(s', .)].
/// Throws ConvergenceError when max_sweeps is exhausted.
PlannerResult soft_value_iteration(const TabularMdp& mdp, const Vector& state_rewards,
                                   const SoftPlanner& planner);
PlannerResult soft_value_iteration(const GridworldMDP& mdp, const RewardParams& params,
                                   const SoftPlanner& planner);

/// Exact-max value iteration.
PlannerResult hard_value_iteration(const TabularMdp& mdp, const Vector& state_rewards,
                                   double tolerance = 1e-12, std::size_t max_sweeps = 100000);

/// Row-stochastic pi(a|s) proportional to exp(alpha Q(s,a)).
Matrix boltzmann_policy(const Matrix& q, double alpha);

/// argmax_a per row, ties to the lowest action index.
std::vector<Action> greedy_actions(const Matrix& q);

/// Bellman gradient iteration: dV/d(params) as an |S| x |P| matrix, where the
/// reward of state s is params[param_of_state[s]]. Iterates
///   dV(s) = sum_a w(s,a) sum_s' P(s'|s,a) (dr(s') + gamma dV(s'))
/// with w = softmax(k Q(s, .)) to the planner's tolerance.
Matrix value_gradient(const TabularMdp& mdp, std::span<const int> param_of_state, const PlannerResult& plan,
                      const SoftPlanner& planner);

struct Demonstration {
    int state = 0;
    Action action = Action::Up;

    friend bool operator==(const Demonstration&, const Demonstration&) = default;
};

/// Planner solution for one reward vector, able to score any demonstration.
class IrlModel {
public:
    IrlModel(const GridworldMDP& mdp, const RewardParams& params, const SoftPlanner& planner,
             bool with_gradient = true);

    const PlannerResult& plan() const { return plan_; }
    const Matrix& policy() const { return policy_; }

    /// -log pi(a|s) = -[alpha Q(s,a) - log sum_a' exp(alpha Q(s,a'))].
    double loss(const Demonstration& demo) const;
    /// d loss / d params. Requires with_gradient.
    RewardParams grad(const Demonstration& demo) const;
    /// dQ(s,a)/d params.
    RewardParams q_gradient(int state, int action) const;

private:
    std::shared_ptr<const GridworldMDP> mdp_;
    SoftPlanner planner_;
    PlannerResult plan_;
    Matrix policy_;
    Matrix dv_;
};

struct IrlLossGrad {
    double loss = 0;
    RewardParams grad;
};

IrlLossGrad irl_loss_and_grad(const GridworldMDP& mdp, const RewardParams& params, const SoftPlanner& planner,
                              const Demonstration& demo);

struct IrlLearnerState {
    RewardParams rewards;                      ///< nu^t, learner encoding
    std::size_t step = 0;
    Schedule eta = Schedule::constant(1e-3);
    Schedule beta = Schedule::constant(0);
    std::size_t subset_size = 0;

    double current_eta() const { return eta.at(step); }
    double current_beta() const { return beta.at(step); }
};

struct IrlUpdateDiagnostics {
    std::vector<std::size_t> support;   ///< support[0] is the chosen index
    std::vector<double> est_volumes;
    std::vector<double> q;
    RewardParams intermediate;
    RewardParams correction;
};

/// Gradient step on the demonstration's negative log-likelihood.
IrlLearnerState irl_naive_update(const GridworldMDP& mdp, const SoftPlanner& planner,
                                 const IrlLearnerState& state, const Demonstration& demo);

/// Mean-gradient step over all demonstrations.
IrlLearnerState irl_batch_update(const GridworldMDP& mdp, const SoftPlanner& planner,
                                 const IrlLearnerState& state, std::span<const Demonstration> batch);

/// Two-stage teacher-aware step with q over {chosen} u subset.
std::pair<IrlLearnerState, IrlUpdateDiagnostics>
irl_ital_update(const GridworldMDP& mdp, const SoftPlanner& planner, const IrlLearnerState& state,
                std::span<const Demonstration> batch, std::size_t chosen, std::span<const std::size_t> subset);

/// Teacher knowledge: her encoding of the world and its true reward.
class IrlTeacher {
public:
    IrlTeacher(GridworldMDP mdp, RewardParams omega_star, SoftPlanner planner);

    const GridworldMDP& mdp() const { return mdp_; }
    const RewardParams& omega_star() const { return omega_star_; }
    const SoftPlanner& planner() const { return planner_; }
    const IrlModel& star_model() const { return star_; }

    /// Feedback volumes -eta^2 ||g||^2 + 2 eta (l(reported) - l(omega*)) given
    /// the learner's reported rewards already translated to her encoding.
    std::vector<double> feedback_volumes(const RewardParams& reported, std::span<const Demonstration> batch,
                                         double eta) const;
    /// Omniscient volumes -eta^2 ||g||^2 + 2 eta <w - w*, g>.
    std::vector<double> omniscient_volumes(const RewardParams& reported, std::span<const Demonstration> batch,
                                           double eta) const;

private:
    GridworldMDP mdp_;
    RewardParams omega_star_;
    SoftPlanner planner_;
    IrlModel star_;
};

enum class IrlUpdateKind { Naive, Aware, Batch };

struct IrlRoundResult {
    IrlLearnerState next;
    SelectionRecord record;
    std::vector<double> q;  ///< learner's q over its support (aware only)
};

/// One round: the learner reports its per-grid rewards, the teacher maps
/// them into her encoding, scores the batch, selects per `mode`, and the
/// learner updates. Throws ShapeError if the two MDPs are not the same world.
IrlRoundResult irl_teaching_round(const IrlTeacher& teacher, const GridworldMDP& learner_mdp,
                                  const IrlLearnerState& state, std::span<const Demonstration> batch,
                                  TeacherMode mode, IrlUpdateKind kind, Rng& teacher_rng, Rng& subset_rng);

/// Distinct (s, a) pairs drawn uniformly from S x A.
std::vector<Demonstration> sample_demonstrations(int states, std::size_t count, Rng& rng);

/// Mean over states of half the L1 distance between action distributions.
double policy_total_variation(const Matrix& pi1, const Matrix& pi2);

/// Mean over a uniform start distribution of V_pi, where
/// V_pi = R_pi + gamma P_pi V_pi is solved directly.
double expected_return(const TabularMdp& mdp, const Vector& state_rewards, const Matrix& policy);

enum class MapKind { DenseRandom, Sparse, HumanTile };

MapKind map_kind_from_string(const std::string& name);

/// The five fixed 5x5 human-study layouts, 'A'..'E': rows of W/B/R
/// (white neutral 0, blue good +1, red bad -1).
const std::vector<std::string>& human_tile_layout(char id);
inline constexpr std::array<char, 5> kHumanMapIds{'A', 'B', 'C', 'D', 'E'};

/// Cell rewards (row-major) for a W/B/R layout.
Vector tiles_to_rewards(const std::vector<std::string>& rows);

/// DenseRandom: iid U[-2, 2]. Sparse: zeros with 3 distinct grids set to 1.
/// HumanTile: one of the five layouts, chosen uniformly (5x5 only).
Vector make_map(MapKind kind, int width, int height, Rng& rng);

struct RewardGrid {
    int width = 0;
    int height = 0;
    Vector cells;
};

void write_reward_map(std::ostream& out, const RewardGrid& grid);
RewardGrid read_reward_map(std::istream& in);
void write_tile_map(std::ostream& out, const std::vector<std::string>& rows);
std::vector<std::string> read_tile_map(std::istream& in);

} // namespace ital
