#include "ital/gridworld.hpp"

#include "ital/errors.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

namespace ital {

std::string to_string(Action a) {
    switch (a) {
    case Action::Up: return "up";
    case Action::Down: return "down";
    case Action::Left: return "left";
    case Action::Right: return "right";
    }
    return "?";
}

Action action_from_string(const std::string& name) {
    for (int a = 0; a < kNumActions; ++a)
        if (to_string(static_cast<Action>(a)) == name) return static_cast<Action>(a);
    throw ParseError("unknown action '" + name + "'", 0);
}

// ---------------------------------------------------------------------------
// TabularMdp

TabularMdp::TabularMdp(int states, int actions, double discount)
    : states_(states), actions_(actions), discount_(discount),
      outcomes_(static_cast<std::size_t>(states * actions)) {
    if (states <= 0 || actions <= 0) throw ConfigError("MDP needs at least one state and action");
}

void TabularMdp::add_transition(int state, int action, int next, double prob) {
    if (state < 0 || state >= states_ || action < 0 || action >= actions_ || next >= states_)
        throw ShapeError("transition index out of range");
    auto& out = outcomes_[static_cast<std::size_t>(state * actions_ + action)];
    for (auto& t : out) {
        if (t.next == next || (t.next < 0 && next < 0)) {
            t.prob += prob;
            return;
        }
    }
    out.push_back({next < 0 ? -1 : next, prob});
}

void TabularMdp::validate() const {
    if (!(discount_ > 0 && discount_ < 1)) throw ConfigError("discount must lie in (0, 1)");
    for (int s = 0; s < states_; ++s) {
        for (int a = 0; a < actions_; ++a) {
            double total = 0;
            for (const auto& t : outcomes(s, a)) {
                if (t.prob < 0) throw ConfigError("negative transition probability");
                total += t.prob;
            }
            if (std::abs(total - 1.0) > 1e-12)
                throw ConfigError("transition probabilities of (" + std::to_string(s) + ", " +
                                  std::to_string(a) + ") sum to " + std::to_string(total));
        }
    }
}

// ---------------------------------------------------------------------------
// GridworldMDP

namespace {

std::vector<int> identity_encoding(int n) {
    std::vector<int> e(static_cast<std::size_t>(n));
    std::iota(e.begin(), e.end(), 0);
    return e;
}

std::vector<int> invert_encoding(const std::vector<int>& encoding) {
    std::vector<int> inverse(encoding.size(), -1);
    for (std::size_t c = 0; c < encoding.size(); ++c) {
        const int p = encoding[c];
        if (p < 0 || static_cast<std::size_t>(p) >= encoding.size() || inverse[static_cast<std::size_t>(p)] != -1)
            throw ConfigError("encoding is not a bijection");
        inverse[static_cast<std::size_t>(p)] = static_cast<int>(c);
    }
    return inverse;
}

} // namespace

GridworldMDP::GridworldMDP(int width, int height, TransitionSpec transitions, double discount,
                           std::vector<int> encoding)
    : width_(width), height_(height), transitions_(transitions),
      encoding_(encoding.empty() ? identity_encoding(width * height) : std::move(encoding)),
      tabular_(std::max(width * height, 1), kNumActions, discount) {
    if (width <= 0 || height <= 0) throw ConfigError("grid dimensions must be positive");
    if (static_cast<int>(encoding_.size()) != width * height)
        throw ConfigError("encoding length does not match the grid");
    decoding_ = invert_encoding(encoding_);
    const double mass = transitions.success + transitions.neighbor + transitions.death;
    if (transitions.success < 0 || transitions.neighbor < 0 || transitions.death < 0 ||
        std::abs(mass - 1.0) > 1e-12)
        throw ConfigError("transition probabilities must be nonnegative and sum to 1");

    for (int c = 0; c < num_states(); ++c) {
        for (int a = 0; a < kNumActions; ++a) {
            tabular_.add_transition(c, a, target(c, static_cast<Action>(a)), transitions.success);
            for (int d = 0; d < kNumActions; ++d)
                tabular_.add_transition(c, a, target(c, static_cast<Action>(d)), transitions.neighbor / kNumActions);
            if (transitions.death > 0) tabular_.add_transition(c, a, -1, transitions.death);
        }
    }
    tabular_.validate();
}

int GridworldMDP::target(int c, Action a) const {
    const int r = row(c);
    const int k = col(c);
    switch (a) {
    case Action::Up: return r > 0 ? cell(r - 1, k) : c;
    case Action::Down: return r + 1 < height_ ? cell(r + 1, k) : c;
    case Action::Left: return k > 0 ? cell(r, k - 1) : c;
    case Action::Right: return k + 1 < width_ ? cell(r, k + 1) : c;
    }
    return c;
}

Vector GridworldMDP::cell_rewards(const RewardParams& params) const {
    if (params.size() != num_states()) throw ShapeError("reward parameter length does not match the grid");
    Vector r(num_states());
    for (int c = 0; c < num_states(); ++c) r(c) = params(encoding_[static_cast<std::size_t>(c)]);
    return r;
}

RewardParams GridworldMDP::params_from_cells(const Vector& cells) const {
    if (cells.size() != num_states()) throw ShapeError("cell reward length does not match the grid");
    RewardParams p(num_states());
    for (int c = 0; c < num_states(); ++c) p(encoding_[static_cast<std::size_t>(c)]) = cells(c);
    return p;
}

GridworldMDP GridworldMDP::with_encoding(std::vector<int> encoding) const {
    return GridworldMDP(width_, height_, transitions_, discount(), std::move(encoding));
}

bool GridworldMDP::same_world(const GridworldMDP& o) const {
    return width_ == o.width_ && height_ == o.height_ && discount() == o.discount() &&
           transitions_.success == o.transitions_.success && transitions_.neighbor == o.transitions_.neighbor &&
           transitions_.death == o.transitions_.death;
}

std::vector<int> random_encoding(int n, Rng& rng) {
    std::vector<int> e = identity_encoding(n);
    for (int i = n - 1; i > 0; --i) {
        const int j = std::uniform_int_distribution<int>(0, i)(rng);
        std::swap(e[static_cast<std::size_t>(i)], e[static_cast<std::size_t>(j)]);
    }
    return e;
}

RewardParams translate_params(const GridworldMDP& from, const GridworldMDP& to, const RewardParams& params) {
    if (!from.same_world(to)) throw ShapeError("cannot translate rewards between different worlds");
    return to.params_from_cells(from.cell_rewards(params));
}

// ---------------------------------------------------------------------------
// Planning

void SoftPlanner::validate() const {
    if (!(sharpness > 0) || !(rationality > 0) || !(tolerance > 0))
        throw ConfigError("planner sharpness, rationality and tolerance must be positive");
}

double soft_max(std::span<const double> values, double sharpness) {
    const double top = *std::max_element(values.begin(), values.end());
    double total = 0;
    for (double v : values) total += std::exp(sharpness * (v - top));
    return top + std::log(total) / sharpness;
}

namespace {

template <typename Backup>
PlannerResult iterate_values(const TabularMdp& mdp, const Vector& rewards, double tolerance,
                             std::size_t max_sweeps, Backup backup, const char* name) {
    if (rewards.size() != mdp.num_states()) throw ShapeError("reward vector length does not match the MDP");
    if (!rewards.allFinite()) throw NumericError("rewards must be finite");
    const int S = mdp.num_states();
    const int A = mdp.num_actions();
    const double gamma = mdp.discount();

    PlannerResult out;
    out.q = Matrix::Zero(S, A);
    out.v = Vector::Zero(S);
    Matrix next(S, A);
    for (std::size_t sweep = 1; sweep <= max_sweeps; ++sweep) {
        for (int s = 0; s < S; ++s) {
            for (int a = 0; a < A; ++a) {
                double total = 0;
                for (const auto& t : mdp.outcomes(s, a))
                    if (t.next >= 0) total += t.prob * (rewards(t.next) + gamma * out.v(t.next));
                next(s, a) = total;
            }
        }
        const double residual = (next - out.q).cwiseAbs().maxCoeff();
        out.q.swap(next);
        for (int s = 0; s < S; ++s) out.v(s) = backup(out.q.row(s));
        out.sweeps = sweep;
        out.residual = residual;
        out.residuals.push_back(residual);
        if (!std::isfinite(residual)) throw NumericError(std::string(name) + " diverged");
        if (residual < tolerance) return out;
    }
    throw ConvergenceError(std::string(name) + " did not converge", out.residual, out.sweeps);
}

} // namespace

PlannerResult soft_value_iteration(const TabularMdp& mdp, const Vector& state_rewards, const SoftPlanner& planner) {
    planner.validate();
    const double k = planner.sharpness;
    return iterate_values(
        mdp, state_rewards, planner.tolerance, planner.max_sweeps,
        [k](const auto& row) {
            const double top = row.maxCoeff();
            return top + std::log((k * (row.array() - top)).exp().sum()) / k;
        },
        "soft value iteration");
}

PlannerResult soft_value_iteration(const GridworldMDP& mdp, const RewardParams& params, const SoftPlanner& planner) {
    return soft_value_iteration(mdp.tabular(), mdp.cell_rewards(params), planner);
}

PlannerResult hard_value_iteration(const TabularMdp& mdp, const Vector& state_rewards, double tolerance,
                                   std::size_t max_sweeps) {
    return iterate_values(
        mdp, state_rewards, tolerance, max_sweeps, [](const auto& row) { return row.maxCoeff(); },
        "value iteration");
}

Matrix boltzmann_policy(const Matrix& q, double alpha) {
    Matrix pi(q.rows(), q.cols());
    for (Eigen::Index s = 0; s < q.rows(); ++s) {
        const double top = q.row(s).maxCoeff();
        pi.row(s) = (alpha * (q.row(s).array() - top)).exp();
        pi.row(s) /= pi.row(s).sum();
    }
    return pi;
}

std::vector<Action> greedy_actions(const Matrix& q) {
    std::vector<Action> out(static_cast<std::size_t>(q.rows()));
    for (Eigen::Index s = 0; s < q.rows(); ++s) {
        Eigen::Index best = 0;
        for (Eigen::Index a = 1; a < q.cols(); ++a)
            if (q(s, a) > q(s, best)) best = a;
        out[static_cast<std::size_t>(s)] = static_cast<Action>(best);
    }
    return out;
}

Matrix value_gradient(const TabularMdp& mdp, std::span<const int> param_of_state, const PlannerResult& plan,
                      const SoftPlanner& planner) {
    const int S = mdp.num_states();
    const int A = mdp.num_actions();
    if (static_cast<int>(param_of_state.size()) != S) throw ShapeError("reward map length does not match the MDP");
    const Eigen::Index P = S;
    const double gamma = mdp.discount();

    // Collapse the soft-max action weights into one successor row per state:
    // c(s, s') = sum_a w(s, a) P(s'|s, a).
    std::vector<std::vector<Transition>> mix(static_cast<std::size_t>(S));
    Matrix base = Matrix::Zero(S, P);
    for (int s = 0; s < S; ++s) {
        const auto row = plan.q.row(s);
        const double top = row.maxCoeff();
        Eigen::RowVectorXd w = (planner.sharpness * (row.array() - top)).exp();
        w /= w.sum();
        auto& out = mix[static_cast<std::size_t>(s)];
        for (int a = 0; a < A; ++a) {
            for (const auto& t : mdp.outcomes(s, a)) {
                if (t.next < 0) continue;
                const double c = w(a) * t.prob;
                auto it = std::find_if(out.begin(), out.end(), [&](const Transition& x) { return x.next == t.next; });
                if (it == out.end()) out.push_back({t.next, c});
                else it->prob += c;
            }
        }
        for (const auto& t : out) base(s, param_of_state[static_cast<std::size_t>(t.next)]) += t.prob;
    }

    Matrix dv = Matrix::Zero(S, P);
    Matrix next(S, P);
    double residual = 0;
    for (std::size_t sweep = 1; sweep <= planner.max_sweeps; ++sweep) {
        next = base;
        for (int s = 0; s < S; ++s)
            for (const auto& t : mix[static_cast<std::size_t>(s)]) next.row(s) += (gamma * t.prob) * dv.row(t.next);
        residual = (next - dv).cwiseAbs().maxCoeff();
        dv.swap(next);
        if (residual < planner.tolerance) return dv;
    }
    throw ConvergenceError("Bellman gradient iteration did not converge", residual, planner.max_sweeps);
}

// ---------------------------------------------------------------------------
// IRL likelihood

IrlModel::IrlModel(const GridworldMDP& mdp, const RewardParams& params, const SoftPlanner& planner,
                   bool with_gradient)
    : mdp_(std::make_shared<GridworldMDP>(mdp)), planner_(planner),
      plan_(soft_value_iteration(mdp, params, planner)), policy_(boltzmann_policy(plan_.q, planner.rationality)) {
    if (with_gradient) dv_ = value_gradient(mdp.tabular(), mdp.encoding(), plan_, planner);
}

double IrlModel::loss(const Demonstration& demo) const {
    const auto row = plan_.q.row(demo.state) * planner_.rationality;
    const double top = row.maxCoeff();
    const double lse = top + std::log((row.array() - top).exp().sum());
    return lse - row(static_cast<int>(demo.action));
}

RewardParams IrlModel::q_gradient(int state, int action) const {
    if (dv_.size() == 0) throw ShapeError("IrlModel built without gradient");
    const double gamma = mdp_->discount();
    RewardParams g = RewardParams::Zero(mdp_->num_states());
    for (const auto& t : mdp_->tabular().outcomes(state, action)) {
        if (t.next < 0) continue;
        g(mdp_->encoding()[static_cast<std::size_t>(t.next)]) += t.prob;
        g += (t.prob * gamma) * dv_.row(t.next).transpose();
    }
    return g;
}

RewardParams IrlModel::grad(const Demonstration& demo) const {
    if (demo.state < 0 || demo.state >= mdp_->num_states()) throw ShapeError("demonstration state out of range");
    RewardParams expected = RewardParams::Zero(mdp_->num_states());
    RewardParams chosen;
    for (int a = 0; a < kNumActions; ++a) {
        RewardParams dq = q_gradient(demo.state, a);
        expected += policy_(demo.state, a) * dq;
        if (a == static_cast<int>(demo.action)) chosen = std::move(dq);
    }
    return -planner_.rationality * (chosen - expected);
}

IrlLossGrad irl_loss_and_grad(const GridworldMDP& mdp, const RewardParams& params, const SoftPlanner& planner,
                              const Demonstration& demo) {
    IrlModel model(mdp, params, planner, true);
    return {model.loss(demo), model.grad(demo)};
}

// ---------------------------------------------------------------------------
// Learners

IrlLearnerState irl_naive_update(const GridworldMDP& mdp, const SoftPlanner& planner, const IrlLearnerState& state,
                                 const Demonstration& demo) {
    const IrlModel model(mdp, state.rewards, planner, true);
    IrlLearnerState next = state;
    next.rewards = state.rewards - state.current_eta() * model.grad(demo);
    ++next.step;
    return next;
}

IrlLearnerState irl_batch_update(const GridworldMDP& mdp, const SoftPlanner& planner, const IrlLearnerState& state,
                                 std::span<const Demonstration> batch) {
    if (batch.empty()) throw ShapeError("batch update on an empty batch");
    const IrlModel model(mdp, state.rewards, planner, true);
    RewardParams mean = RewardParams::Zero(state.rewards.size());
    for (const auto& d : batch) mean += model.grad(d);
    mean /= static_cast<double>(batch.size());
    IrlLearnerState next = state;
    next.rewards = state.rewards - state.current_eta() * mean;
    ++next.step;
    return next;
}

std::pair<IrlLearnerState, IrlUpdateDiagnostics>
irl_ital_update(const GridworldMDP& mdp, const SoftPlanner& planner, const IrlLearnerState& state,
                std::span<const Demonstration> batch, std::size_t chosen, std::span<const std::size_t> subset) {
    if (chosen >= batch.size()) throw ShapeError("chosen index outside the batch");
    for (std::size_t i : subset)
        if (i >= batch.size() || i == chosen) throw ShapeError("invalid subset index");

    const double eta = state.current_eta();
    const double beta = state.current_beta();

    IrlUpdateDiagnostics diag;
    diag.support.push_back(chosen);
    diag.support.insert(diag.support.end(), subset.begin(), subset.end());

    const IrlModel prev(mdp, state.rewards, planner, true);
    diag.intermediate = state.rewards - eta * prev.grad(batch[chosen]);
    const IrlModel hat(mdp, diag.intermediate, planner, true);

    std::vector<Params> grads;
    grads.reserve(diag.support.size());
    for (std::size_t i : diag.support) {
        const Demonstration& d = batch[i];
        diag.est_volumes.push_back(-eta * eta * prev.grad(d).squaredNorm() + 2 * eta * (prev.loss(d) - hat.loss(d)));
        grads.emplace_back(hat.grad(d).transpose());
    }
    const Params correction = teacher_aware_correction(diag.est_volumes, grads, 0, beta, eta, &diag.q);
    diag.correction = correction.transpose();

    IrlLearnerState next = state;
    next.rewards = diag.intermediate - diag.correction;
    ++next.step;
    return {std::move(next), std::move(diag)};
}

// ---------------------------------------------------------------------------
// Teacher

IrlTeacher::IrlTeacher(GridworldMDP mdp, RewardParams omega_star, SoftPlanner planner)
    : mdp_(std::move(mdp)), omega_star_(std::move(omega_star)), planner_(planner),
      star_(mdp_, omega_star_, planner_, false) {}

std::vector<double> IrlTeacher::feedback_volumes(const RewardParams& reported, std::span<const Demonstration> batch,
                                                 double eta) const {
    const IrlModel learner(mdp_, reported, planner_, true);
    std::vector<double> out;
    out.reserve(batch.size());
    for (const auto& d : batch)
        out.push_back(-eta * eta * learner.grad(d).squaredNorm() + 2 * eta * (learner.loss(d) - star_.loss(d)));
    return out;
}

std::vector<double> IrlTeacher::omniscient_volumes(const RewardParams& reported, std::span<const Demonstration> batch,
                                                   double eta) const {
    const IrlModel learner(mdp_, reported, planner_, true);
    const RewardParams gap = reported - omega_star_;
    std::vector<double> out;
    out.reserve(batch.size());
    for (const auto& d : batch) {
        const RewardParams g = learner.grad(d);
        out.push_back(-eta * eta * g.squaredNorm() + 2 * eta * gap.dot(g));
    }
    return out;
}

IrlRoundResult irl_teaching_round(const IrlTeacher& teacher, const GridworldMDP& learner_mdp,
                                  const IrlLearnerState& state, std::span<const Demonstration> batch,
                                  TeacherMode mode, IrlUpdateKind kind, Rng& teacher_rng, Rng& subset_rng) {
    if (!teacher.mdp().same_world(learner_mdp))
        throw ShapeError("teacher and learner MDPs differ beyond their encodings");
    if (batch.empty()) throw ShapeError("empty demonstration batch");

    IrlRoundResult out;
    const double eta = state.current_eta();
    const RewardParams reported = translate_params(learner_mdp, teacher.mdp(), state.rewards);
    out.record.feedback.push_back(reported);
    if (mode == TeacherMode::OmniscientCooperative)
        out.record.volumes = teacher.omniscient_volumes(reported, batch, eta);
    else
        out.record.volumes = teacher.feedback_volumes(reported, batch, eta);
    out.record.chosen = select_example(out.record.volumes, mode, teacher_rng);

    switch (kind) {
    case IrlUpdateKind::Naive:
        out.next = irl_naive_update(learner_mdp, teacher.planner(), state, batch[out.record.chosen]);
        break;
    case IrlUpdateKind::Batch:
        out.next = irl_batch_update(learner_mdp, teacher.planner(), state, batch);
        break;
    case IrlUpdateKind::Aware: {
        const auto subset = sample_subset(batch.size(), out.record.chosen, state.subset_size, subset_rng);
        auto [next, diag] = irl_ital_update(learner_mdp, teacher.planner(), state, batch, out.record.chosen, subset);
        out.next = std::move(next);
        out.q = std::move(diag.q);
        break;
    }
    }
    return out;
}

std::vector<Demonstration> sample_demonstrations(int states, std::size_t count, Rng& rng) {
    const std::size_t total = static_cast<std::size_t>(states) * kNumActions;
    if (count > total) throw ConfigError("more demonstrations requested than state-action pairs");
    std::vector<std::size_t> pool(total);
    std::iota(pool.begin(), pool.end(), 0);
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t j = std::uniform_int_distribution<std::size_t>(i, total - 1)(rng);
        std::swap(pool[i], pool[j]);
    }
    std::vector<Demonstration> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i)
        out.push_back({static_cast<int>(pool[i] / kNumActions), static_cast<Action>(pool[i] % kNumActions)});
    return out;
}

// ---------------------------------------------------------------------------
// Metrics

double policy_total_variation(const Matrix& pi1, const Matrix& pi2) {
    if (pi1.rows() != pi2.rows() || pi1.cols() != pi2.cols())
        throw ShapeError("policies over different state/action spaces");
    return 0.5 * (pi1 - pi2).cwiseAbs().rowwise().sum().mean();
}

double expected_return(const TabularMdp& mdp, const Vector& state_rewards, const Matrix& policy) {
    const int S = mdp.num_states();
    if (policy.rows() != S || policy.cols() != mdp.num_actions()) throw ShapeError("policy shape does not match MDP");
    if (state_rewards.size() != S) throw ShapeError("reward vector length does not match the MDP");
    Eigen::MatrixXd system = Eigen::MatrixXd::Identity(S, S);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(S);
    const double gamma = mdp.discount();
    for (int s = 0; s < S; ++s) {
        for (int a = 0; a < mdp.num_actions(); ++a) {
            const double pa = policy(s, a);
            if (pa == 0) continue;
            for (const auto& t : mdp.outcomes(s, a)) {
                if (t.next < 0) continue;
                rhs(s) += pa * t.prob * state_rewards(t.next);
                system(s, t.next) -= gamma * pa * t.prob;
            }
        }
    }
    const Eigen::VectorXd v = system.partialPivLu().solve(rhs);
    if (!v.allFinite()) throw NumericError("policy evaluation produced non-finite values");
    return v.mean();
}

// ---------------------------------------------------------------------------
// Maps

MapKind map_kind_from_string(const std::string& name) {
    if (name == "dense") return MapKind::DenseRandom;
    if (name == "sparse") return MapKind::Sparse;
    if (name == "human" || name == "tile") return MapKind::HumanTile;
    throw ConfigError("unknown map kind '" + name + "'");
}

const std::vector<std::string>& human_tile_layout(char id) {
    static const std::vector<std::vector<std::string>> layouts{
        {"WWWWB", "WWRRW", "WWWWW", "RRWWW", "WWWWW"},
        {"BWWWW", "WWWRW", "WRWWW", "WWWRW", "WWWWB"},
        {"WWRWW", "WWRWW", "BWRWB", "WWWWW", "WWWWW"},
        {"RWWWR", "WWBWW", "WBBBW", "WWBWW", "RWWWR"},
        {"WWWWW", "WRWRW", "WWWWW", "WRWRW", "BWWWB"},
    };
    if (id < 'A' || id > 'E') throw ConfigError(std::string("unknown human map '") + id + "'");
    return layouts[static_cast<std::size_t>(id - 'A')];
}

Vector tiles_to_rewards(const std::vector<std::string>& rows) {
    if (rows.empty()) throw ParseError("empty tile map", 0);
    const std::size_t width = rows.front().size();
    Vector out(static_cast<Eigen::Index>(rows.size() * width));
    Eigen::Index i = 0;
    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r].size() != width) throw ParseError("ragged tile map", r + 1);
        for (char ch : rows[r]) {
            switch (ch) {
            case 'W': out(i++) = 0; break;
            case 'B': out(i++) = 1; break;
            case 'R': out(i++) = -1; break;
            default: throw ParseError(std::string("unknown tile '") + ch + "'", r + 1);
            }
        }
    }
    return out;
}

Vector make_map(MapKind kind, int width, int height, Rng& rng) {
    if (width <= 0 || height <= 0) throw ConfigError("map dimensions must be positive");
    const int n = width * height;
    switch (kind) {
    case MapKind::DenseRandom: {
        Vector out(n);
        for (int i = 0; i < n; ++i) out(i) = uniform(rng, -2.0, 2.0);
        return out;
    }
    case MapKind::Sparse: {
        if (n < 3) throw ConfigError("sparse maps need at least 3 grids");
        Vector out = Vector::Zero(n);
        std::vector<int> cells = random_encoding(n, rng);
        for (int i = 0; i < 3; ++i) out(cells[static_cast<std::size_t>(i)]) = 1.0;
        return out;
    }
    case MapKind::HumanTile: {
        if (width != 5 || height != 5) throw ConfigError("human tile maps are 5x5");
        const int pick = std::uniform_int_distribution<int>(0, 4)(rng);
        return tiles_to_rewards(human_tile_layout(static_cast<char>('A' + pick)));
    }
    }
    throw ConfigError("unknown map kind");
}

void write_reward_map(std::ostream& out, const RewardGrid& grid) {
    if (grid.cells.size() != grid.width * grid.height) throw ShapeError("reward grid size mismatch");
    out.precision(17);
    for (int r = 0; r < grid.height; ++r) {
        for (int c = 0; c < grid.width; ++c) {
            if (c) out << ' ';
            out << grid.cells(r * grid.width + c);
        }
        out << '\n';
    }
}

RewardGrid read_reward_map(std::istream& in) {
    std::vector<std::vector<double>> rows;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        std::istringstream ss(line);
        std::vector<double> row;
        std::string tok;
        while (ss >> tok) {
            try {
                std::size_t used = 0;
                row.push_back(std::stod(tok, &used));
                if (used != tok.size()) throw std::invalid_argument(tok);
            } catch (const std::exception&) {
                throw ParseError("bad reward value '" + tok + "'", lineno);
            }
        }
        if (!rows.empty() && row.size() != rows.front().size()) throw ParseError("ragged reward map", lineno);
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw ParseError("empty reward map", 0);
    RewardGrid grid;
    grid.height = static_cast<int>(rows.size());
    grid.width = static_cast<int>(rows.front().size());
    grid.cells.resize(grid.width * grid.height);
    for (int r = 0; r < grid.height; ++r)
        for (int c = 0; c < grid.width; ++c) grid.cells(r * grid.width + c) = rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
    return grid;
}

void write_tile_map(std::ostream& out, const std::vector<std::string>& rows) {
    tiles_to_rewards(rows);
    for (const auto& r : rows) out << r << '\n';
}

std::vector<std::string> read_tile_map(std::istream& in) {
    std::vector<std::string> rows;
    std::string line;
    while (std::getline(in, line)) {
        while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
        if (!line.empty()) rows.push_back(line);
    }
    tiles_to_rewards(rows);
    return rows;
}

} // namespace ital
