#include "ital/errors.hpp"
#include "ital/gridworld.hpp"
#include "../support.hpp"

#include <doctest.h>

#include <cmath>
#include <sstream>

using namespace ital;

namespace {

double prob_to(const TabularMdp& m, int s, Action a, int next) {
    double p = 0;
    for (const auto& t : m.outcomes(s, static_cast<int>(a)))
        if (t.next == next) p += t.prob;
    return p;
}

SoftPlanner tight() {
    SoftPlanner p;
    p.tolerance = 1e-13;
    return p;
}

} // namespace

TEST_SUITE("gridworld") {

TEST_CASE("corner transitions") {
    const GridworldMDP g(3, 3);
    const auto& m = g.tabular();
    CHECK(prob_to(m, 0, Action::Right, 1) == doctest::Approx(0.845));
    CHECK(prob_to(m, 0, Action::Right, 3) == doctest::Approx(0.045));
    CHECK(prob_to(m, 0, Action::Right, 0) == doctest::Approx(0.09));
    CHECK(prob_to(m, 0, Action::Right, -1) == doctest::Approx(0.02));
    CHECK(prob_to(m, 4, Action::Up, 1) == doctest::Approx(0.845));
    CHECK(prob_to(m, 4, Action::Up, 4) == 0.0);
    CHECK_NOTHROW(m.validate());
    CHECK_THROWS_AS(GridworldMDP(2, 2, TransitionSpec{0.8, 0.1, 0.02}), ConfigError);
    CHECK_THROWS_AS(GridworldMDP(2, 2, {}, 1.0), ConfigError);
}

TEST_CASE("single cell has a closed form") {
    const GridworldMDP g(1, 1);
    const Vector r = Vector::Constant(1, 0.7);
    const auto soft = soft_value_iteration(g.tabular(), r, tight());
    CHECK(soft.v(0) == doctest::Approx(1.372280281590586).epsilon(1e-11));
    CHECK(soft.q(0, 2) == doctest::Approx(1.3584173379793871).epsilon(1e-11));
    const auto hard = hard_value_iteration(g.tabular(), r);
    CHECK(hard.v(0) == doctest::Approx(0.98 * 0.7 / 0.51).epsilon(1e-11));
    CHECK(expected_return(g.tabular(), r, Matrix::Constant(1, 4, 0.25)) ==
          doctest::Approx(0.98 * 0.7 / 0.51).epsilon(1e-12));
}

TEST_CASE("two-cell hard values match policy enumeration") {
    const GridworldMDP g(2, 1);
    Vector r(2);
    r << 1.0, -0.5;
    const auto hard = hard_value_iteration(g.tabular(), r);
    CHECK(hard.v(0) == doctest::Approx(1.78297916).epsilon(1e-8));
    CHECK(hard.v(1) == doctest::Approx(1.6416179).epsilon(1e-8));
    const auto arrows = greedy_actions(hard.q);
    CHECK(arrows[1] == Action::Left);
}

TEST_CASE("soft values approach hard values from above") {
    Rng rng = make_stream(2, Stream::Map);
    const GridworldMDP g(4, 4);
    const Vector r = make_map(MapKind::DenseRandom, 4, 4, rng);
    const auto hard = hard_value_iteration(g.tabular(), r);
    double prev = INFINITY;
    for (double k : {10.0, 100.0, 1000.0}) {
        SoftPlanner p = tight();
        p.sharpness = k;
        const auto soft = soft_value_iteration(g.tabular(), r, p);
        const double gap = (soft.v - hard.v).cwiseAbs().maxCoeff();
        CHECK((soft.v - hard.v).minCoeff() >= -1e-10);
        CHECK(gap <= std::log(4.0) / ((1 - 0.5) * k));
        CHECK(gap < prev);
        prev = gap;
    }
}

TEST_CASE("zero rewards give a small uniform value") {
    const GridworldMDP g(3, 3);
    const auto soft = soft_value_iteration(g.tabular(), Vector::Zero(9), tight());
    CHECK(soft.v.cwiseAbs().maxCoeff() <= std::log(4.0) / ((1 - 0.5) * 100));
    CHECK(soft.v.maxCoeff() - soft.v.minCoeff() < 1e-12);
}

TEST_CASE("planner reports non-convergence") {
    const GridworldMDP g(3, 3);
    SoftPlanner p;
    p.max_sweeps = 2;
    try {
        soft_value_iteration(g.tabular(), Vector::Ones(9), p);
        FAIL("expected ConvergenceError");
    } catch (const ConvergenceError& e) {
        CHECK(e.sweeps() == 2);
        CHECK(e.residual() > p.tolerance);
    }
    CHECK_THROWS_AS(soft_value_iteration(g.tabular(), Vector::Ones(4), p), ShapeError);
}

TEST_CASE("value gradient matches finite differences") {
    Rng rng = make_stream(3, Stream::Map);
    const GridworldMDP g(3, 3, {}, 0.5, random_encoding(9, rng));
    const SoftPlanner planner = tight();
    const Vector params = make_map(MapKind::DenseRandom, 3, 3, rng);
    const auto plan = soft_value_iteration(g, params, planner);
    const Matrix dv = value_gradient(g.tabular(), g.encoding(), plan, planner);
    const double h = 1e-5;
    for (int p = 0; p < 9; ++p) {
        Vector up = params, down = params;
        up(p) += h;
        down(p) -= h;
        const Vector fd = (soft_value_iteration(g, up, planner).v - soft_value_iteration(g, down, planner).v) / (2 * h);
        CHECK((dv.col(p) - fd).cwiseAbs().maxCoeff() < 1e-6);
    }
}

TEST_CASE("demonstration likelihood gradient matches finite differences") {
    Rng rng = make_stream(4, Stream::Map);
    const GridworldMDP g(3, 3);
    const SoftPlanner planner = tight();
    for (int trial = 0; trial < 5; ++trial) {
        const Vector params = make_map(MapKind::DenseRandom, 3, 3, rng);
        const Demonstration demo{trial, static_cast<Action>(trial % 4)};
        const auto lg = irl_loss_and_grad(g, params, planner, demo);
        const auto f = [&](const Params& p) {
            return IrlModel(g, Vector(p.transpose()), planner, false).loss(demo);
        };
        const Params num = ital::testing::numeric_gradient(f, Params(params.transpose()));
        CHECK(ital::testing::relative_error(Params(lg.grad.transpose()), num) < 1e-6);
    }
}

TEST_CASE("encodings") {
    Rng rng = make_stream(5, Stream::Map);
    const GridworldMDP plain(3, 2);
    const GridworldMDP shuffled = plain.with_encoding(random_encoding(6, rng));
    Vector cells(6);
    cells << 1, 2, 3, 4, 5, 6;
    const RewardParams p = shuffled.params_from_cells(cells);
    CHECK(shuffled.cell_rewards(p) == cells);
    CHECK(translate_params(shuffled, plain, p) == cells);
    for (int i = 0; i < 6; ++i) CHECK(shuffled.encoding()[shuffled.cell_of_param(i)] == i);
    CHECK_THROWS_AS(translate_params(GridworldMDP(2, 3), plain, cells), ShapeError);
    CHECK_THROWS_AS(GridworldMDP(2, 1, {}, 0.5, {0, 0}), ConfigError);
}

TEST_CASE("a teaching round does not depend on the teacher's encoding") {
    Rng rng = make_stream(6, Stream::Map);
    const GridworldMDP learner(3, 3);
    const Vector truth = make_map(MapKind::DenseRandom, 3, 3, rng);
    const GridworldMDP teacher_world = learner.with_encoding(random_encoding(9, rng));
    const IrlTeacher plain(learner, truth, SoftPlanner{});
    const IrlTeacher shuffled(teacher_world, teacher_world.params_from_cells(truth), SoftPlanner{});

    Rng drng = make_stream(6, Stream::Candidates);
    const auto batch = sample_demonstrations(9, 8, drng);
    IrlLearnerState s{Vector::Zero(9)};
    s.eta = Schedule::constant(0.1);
    s.beta = Schedule::constant(50);
    s.subset_size = 4;
    for (int round = 0; round < 3; ++round) {
        Rng t1 = make_stream(round, Stream::Teacher), t2 = t1;
        Rng s1 = make_stream(round, Stream::Subset), s2 = s1;
        const auto a = irl_teaching_round(plain, learner, s, batch, TeacherMode::FeedbackCooperative,
                                          IrlUpdateKind::Aware, t1, s1);
        const auto b = irl_teaching_round(shuffled, learner, s, batch, TeacherMode::FeedbackCooperative,
                                          IrlUpdateKind::Aware, t2, s2);
        CHECK(a.record.chosen == b.record.chosen);
        CHECK((a.next.rewards - b.next.rewards).cwiseAbs().maxCoeff() < 1e-12);
        s = a.next;
    }
    CHECK_THROWS_AS(irl_teaching_round(plain, GridworldMDP(9, 1), s, batch, TeacherMode::Random,
                                       IrlUpdateKind::Naive, rng, rng),
                    ShapeError);
}

TEST_CASE("teacher-aware IRL update with beta = 0 is a naive step") {
    const GridworldMDP g(3, 3);
    Rng rng = make_stream(7, Stream::Candidates);
    const auto batch = sample_demonstrations(9, 6, rng);
    IrlLearnerState s{Vector::Constant(9, 0.1)};
    s.eta = Schedule::constant(0.2);
    const std::vector<std::size_t> subset{0, 1, 5};
    const auto [aware, diag] = irl_ital_update(g, SoftPlanner{}, s, batch, 2, subset);
    const auto naive = irl_naive_update(g, SoftPlanner{}, s, batch[2]);
    CHECK((aware.rewards - naive.rewards).cwiseAbs().maxCoeff() < 1e-15);
    CHECK(diag.q.size() == 4);
}

TEST_CASE("demonstration sampling is distinct") {
    Rng rng = make_stream(8, Stream::Candidates);
    const auto d = sample_demonstrations(4, 16, rng);
    for (std::size_t i = 0; i < d.size(); ++i)
        for (std::size_t j = i + 1; j < d.size(); ++j) CHECK_FALSE(d[i] == d[j]);
    CHECK_THROWS_AS(sample_demonstrations(4, 17, rng), ConfigError);
}

TEST_CASE("policy metrics") {
    Matrix a(2, 4), b(2, 4);
    a << 1, 0, 0, 0, 0.25, 0.25, 0.25, 0.25;
    b << 0, 1, 0, 0, 0.25, 0.25, 0.25, 0.25;
    CHECK(policy_total_variation(a, a) == 0.0);
    CHECK(policy_total_variation(a, b) == doctest::Approx(0.5));
    CHECK_THROWS_AS(policy_total_variation(a, Matrix(3, 4)), ShapeError);
}

TEST_CASE("map generation") {
    Rng rng = make_stream(9, Stream::Map);
    const Vector sparse = make_map(MapKind::Sparse, 8, 8, rng);
    CHECK(sparse.sum() == 3.0);
    CHECK((sparse.array() == 1.0).count() == 3);
    const Vector dense = make_map(MapKind::DenseRandom, 8, 8, rng);
    CHECK(dense.maxCoeff() <= 2.0);
    CHECK(dense.minCoeff() >= -2.0);
    for (char id : kHumanMapIds) CHECK(tiles_to_rewards(human_tile_layout(id)).size() == 25);
    CHECK_THROWS_AS(make_map(MapKind::HumanTile, 4, 4, rng), ConfigError);
    CHECK_THROWS_AS(human_tile_layout('F'), ConfigError);
}

TEST_CASE("map files round-trip") {
    RewardGrid grid{3, 2, Vector(6)};
    grid.cells << 0.1, -2, 1.0 / 3, 4, 5, 6;
    std::stringstream ss;
    write_reward_map(ss, grid);
    const RewardGrid back = read_reward_map(ss);
    CHECK(back.width == 3);
    CHECK(back.height == 2);
    CHECK(back.cells == grid.cells);

    std::stringstream tiles;
    write_tile_map(tiles, human_tile_layout('C'));
    CHECK(read_tile_map(tiles) == human_tile_layout('C'));

    std::istringstream bad("1 2 3\n4 x 6\n");
    try {
        read_reward_map(bad);
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.line() == 2);
    }
    std::istringstream ragged("WWW\nWQW\n");
    CHECK_THROWS_AS(read_tile_map(ragged), ParseError);
}

}
