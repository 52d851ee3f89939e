// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fail.
#include "ital/gridworld.hpp"
#include "ital/harness.hpp"
#include "ital/pedagogy.hpp"
#include "ital/session.hpp"
#include "../support.hpp"

#include <httplib.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <algorithm>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

using namespace ital;
using ital::testing::numeric_gradient;
using ital::testing::random_params;
using ital::testing::random_vector;
using ital::testing::relative_error;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

TeachingBatch random_batch(const LossSpec& spec, int n, int d, Rng& rng) {
    TeachingBatch b;
    for (int i = 0; i < n; ++i) {
        TeachingExample ex{random_vector(d, rng), 0};
        ex.label = spec.kind == LossKind::SquaredError ? uniform(rng, -1, 1)
                                                       : std::uniform_int_distribution<int>(0, spec.classes - 1)(rng);
        b.examples.push_back(ex);
    }
    return b;
}

Outcome gradients() {
    Rng rng = make_stream(101, Stream::Data);
    double worst_loss = 0, worst_q = 0, worst_irl = 0;
    const std::vector<LossSpec> specs{LossSpec::squared(), LossSpec::squared(0.3), LossSpec::cross_entropy(2),
                                      LossSpec::cross_entropy(4, 0.1)};
    for (const auto& spec : specs) {
        for (int i = 0; i < 100; ++i) {
            const int d = 3 + i % 4;
            const TeachingBatch b = random_batch(spec, 6, d, rng);
            const Params p = random_params(spec.classes, d + 1, rng);
            const auto& ex = b.examples.front();
            const Params fd = numeric_gradient([&](const Params& q) { return loss_value(spec, q, ex); }, p);
            worst_loss = std::max(worst_loss, relative_error(loss_grad(spec, p, ex), fd));
            const Params prev = random_params(spec.classes, d + 1, rng);
            const double beta = spec.kind == LossKind::SquaredError ? 5.0 : 20.0;
            worst_q = std::max(worst_q, log_q_grad_check(spec, b, static_cast<std::size_t>(i % 6), p, prev, 0.1, beta));
        }
    }
    const GridworldMDP g(3, 3);
    const SoftPlanner planner;
    for (int i = 0; i < 100; ++i) {
        const Vector r = random_vector(9, rng, 2.0);
        const Demonstration demo{i % 9, static_cast<Action>(i % 4)};
        const auto analytic = irl_loss_and_grad(g, r, planner, demo).grad;
        const Params fd = numeric_gradient(
            [&](const Params& q) { return irl_loss_and_grad(g, Vector(q.transpose()), planner, demo).loss; },
            Params(r.transpose()), 1e-4);
        worst_irl = std::max(worst_irl, relative_error(Params(analytic.transpose()), fd));
    }
    return {worst_loss <= 1e-4 && worst_q <= 1e-4 && worst_irl <= 1e-3,
            fmt("max rel err: loss %.2e, log q %.2e, irl %.2e", worst_loss, worst_q, worst_irl)};
}

Outcome reductions() {
    Rng rng = make_stream(202, Stream::Data);
    const LossSpec spec = LossSpec::cross_entropy(3, 0.01);
    LearnerState sgd{random_params(3, 6, rng)};
    sgd.eta = Schedule::constant(0.05);
    LearnerState ital = sgd;
    ital.subset_size = 4;
    double drift = 0;
    for (int t = 0; t < 100; ++t) {
        const TeachingBatch b = random_batch(spec, 8, 5, rng);
        const std::size_t chosen = static_cast<std::size_t>(t % 8);
        const auto subset = sample_subset(8, chosen, 4, rng);
        sgd = naive_update(sgd, spec, b.examples[chosen]);
        ital = ital_update(ital, spec, b, chosen, subset).first;
        drift = std::max(drift, (sgd.params - ital.params).cwiseAbs().maxCoeff());
    }

    const std::vector<double> one{0.37};
    const std::vector<Params> g{random_params(3, 6, rng)};
    const double single = teacher_aware_correction(one, g, 0, 1e4, 0.1).cwiseAbs().maxCoeff();

    double sum_err = 0, onehot_err = 0;
    for (int i = 0; i < 50; ++i) {
        std::vector<double> v(20);
        for (double& x : v) x = uniform(rng, -1, 1);
        for (double beta : {0.0, 1.0, 1e3}) {
            const auto q = selection_distribution(v, beta);
            double s = 0;
            for (double x : q) s += x;
            sum_err = std::max(sum_err, std::abs(s - 1));
        }
        const auto q = selection_distribution(v, 1e12);
        const auto best = static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
        for (std::size_t k = 0; k < q.size(); ++k) onehot_err = std::max(onehot_err, std::abs(q[k] - (k == best)));
    }
    return {drift <= 1e-12 && single == 0.0 && sum_err <= 1e-12 && onehot_err <= 1e-9,
            fmt("beta=0 drift %.1e, single-candidate correction %.1e, |sum q - 1| %.1e, one-hot err %.1e", drift,
                single, sum_err, onehot_err)};
}

Outcome local_improvement() {
    Rng rng = make_stream(303, Stream::Data);
    const LossSpec spec = LossSpec::squared();
    const double eta = 0.05, beta = 1e8;
    const int d = 5, n = 6;
    int qualifying = 0, better = 0, attempts = 0;
    while (qualifying < 500 && attempts < 200000) {
        ++attempts;
        const Params star = random_params(1, d + 1, rng);
        const Params prev = random_params(1, d + 1, rng);
        TeachingBatch b;
        for (int i = 0; i < n; ++i) {
            TeachingExample ex{random_vector(d, rng), 0};
            ex.label = logits(spec, star, ex)(0);
            b.examples.push_back(ex);
        }
        std::vector<double> tv;
        for (const auto& ex : b.examples) tv.push_back(teaching_volume_omniscient(spec, prev, star, eta, ex));
        const auto chosen = static_cast<std::size_t>(std::max_element(tv.begin(), tv.end()) - tv.begin());
        const Params tilde = prev - eta * loss_grad(spec, prev, b.examples[chosen]);

        std::vector<double> est;
        for (const auto& ex : b.examples) est.push_back(estimated_teaching_volume(spec, tilde, prev, eta, ex));
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](auto a, auto c) { return est[a] > est[c]; });
        if (order[0] != chosen) continue;
        const Params gap = loss_grad(spec, tilde, b.examples[chosen]) - loss_grad(spec, tilde, b.examples[order[1]]);
        if (flat_dot(tilde - star, gap) <= 0) continue;

        ++qualifying;
        LearnerState s{prev};
        s.eta = Schedule::constant(eta);
        s.beta = Schedule::constant(beta);
        std::vector<std::size_t> rest;
        for (std::size_t i = 0; i < static_cast<std::size_t>(n); ++i)
            if (i != chosen) rest.push_back(i);
        const Params aware = ital_update(s, spec, b, chosen, rest).first.params;
        if (param_distance(aware, star) <= param_distance(tilde, star) + 1e-9) ++better;
    }
    const double frac = qualifying ? static_cast<double>(better) / qualifying : 0.0;
    return {qualifying == 500 && frac >= 0.95,
            fmt("%d/%d qualifying instances no farther from the target (%.1f%%, %d draws)", better, qualifying,
                100 * frac, attempts)};
}

ExperimentConfig paper_scale(TaskKind task) {
    ExperimentConfig c;
    c.task = task;
    c.learners = default_learners(c.batch_size);
    return c;
}

double final_mean(const Summary& s, const std::string& learner, const std::string& metric) {
    return s.at(learner, metric).mean.back();
}

Outcome ordering() {
    const auto t0 = std::chrono::steady_clock::now();
    bool ok = true;
    std::string detail;
    for (TaskKind task : {TaskKind::Regression, TaskKind::Classification}) {
        const RunResult r = run_experiment(paper_scale(task));
        const Summary s = summarize(r.traces);
        const double i19 = final_mean(s, "ital-19", "distance"), i1 = final_mean(s, "ital-1", "distance"),
                     imt = final_mean(s, "imt", "distance"),
                     base = std::max(final_mean(s, "sgd", "distance"), final_mean(s, "batch", "distance"));
        ok = ok && r.failures.empty() && i19 < i1 && i1 <= imt && imt < base && i19 <= 0.5 * imt;
        detail += fmt("%s: ital-19 %.3f, ital-1 %.3f, imt %.3f, max(sgd,batch) %.3f; ", to_string(task).c_str(), i19,
                      i1, imt, base);
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return {ok && secs <= 600, detail + fmt("%.0f s", secs)};
}

Outcome adversarial() {
    ExperimentConfig c = paper_scale(TaskKind::Classification);
    c.teacher = TeacherMode::Adversarial;
    c.learners = {LearnerSpec::parse("imt"), LearnerSpec::parse("ital-1"), LearnerSpec::parse("ital-19")};
    const RunResult r = run_experiment(c);
    const Summary s = summarize(r.traces);
    const auto ratio = [&](const char* l) {
        const auto& m = s.at(l, "distance").mean;
        return m.back() / m.front();
    };
    const double imt = ratio("imt"), i1 = ratio("ital-1"), i19 = ratio("ital-19");
    return {r.failures.empty() && imt >= 0.8 && i1 <= 0.5 && i19 <= 0.5,
            fmt("final/initial distance: imt %.3f, ital-1 %.3f, ital-19 %.3f (beta %g)", imt, i1, i19,
                c.effective_beta())};
}

Outcome irl() {
    const auto t0 = std::chrono::steady_clock::now();
    bool ok = true;
    std::string detail;
    for (TaskKind task : {TaskKind::GridDense, TaskKind::GridSparse}) {
        ExperimentConfig c = paper_scale(task);
        c.learners = {LearnerSpec::parse("imt"), LearnerSpec::parse("ital-19")};
        const RunResult r = run_experiment(c);
        const Summary s = summarize(r.traces);
        const auto& imt = s.at("imt", "policy_tv").mean;
        const auto& ital = s.at("ital-19", "policy_tv").mean;
        ok = ok && r.failures.empty();
        detail += to_string(task) + ":";
        for (std::size_t t = 500; t <= 2000; t += 500) {
            ok = ok && ital[t] < imt[t];
            detail += fmt(" %zu %.3f<%.3f", t, ital[t], imt[t]);
        }
        detail += "; ";
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return {ok && secs <= 7200, detail + fmt("%.0f s", secs)};
}

Outcome soft_vi() {
    const GridworldMDP g(4, 4);
    const double gamma = g.discount();
    bool ok = true;
    double worst_ratio = 0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        Rng rng = make_stream(seed, Stream::Map);
        const Vector r = make_map(MapKind::DenseRandom, 4, 4, rng);
        const Vector hard = hard_value_iteration(g.tabular(), r, 1e-13).v;
        double last = INFINITY;
        for (double k : {10.0, 100.0, 1000.0}) {
            SoftPlanner p;
            p.sharpness = k;
            p.tolerance = 1e-13;  // large-k gaps sit far below the default tolerance
            const double gap = (soft_value_iteration(g.tabular(), r, p).v - hard).cwiseAbs().maxCoeff();
            const double bound = 2.0 * 16 * std::log(4.0) / ((1 - gamma) * k);
            ok = ok && gap <= bound && gap < last;
            worst_ratio = std::max(worst_ratio, gap / bound);
            last = gap;
        }
    }
    return {ok, fmt("5 maps, k in {10,100,1000}: worst gap/bound %.3g, gaps decreasing in k: %s", worst_ratio,
                    ok ? "yes" : "no")};
}

Outcome session_equivalence() {
    SessionConfig c;
    c.map_id = "A";
    c.seed = 42;
    c.max_steps = 100;
    const ScriptedTrajectory local = run_scripted_session(c, 100);

    ServerOptions o;
    o.port = 0;
    SessionServer server(o);
    httplib::Client cli("127.0.0.1", server.start());
    const auto post = [&](const std::string& path, const nlohmann::json& body) {
        const auto res = cli.Post(path, body.dump(), "application/json");
        if (!res || res->status != 200) throw std::runtime_error("request to " + path + " failed");
        return nlohmann::json::parse(res->body);
    };
    nlohmann::json view = post("/api/v1/sessions", to_json(c));
    const std::string id = view["session_id"];
    const GridworldMDP mdp(5, 5);
    const Vector truth = tiles_to_rewards(view["ground_truth"].get<std::vector<std::string>>());
    std::size_t mismatched = 0;
    for (std::size_t t = 0; t <= 100; ++t) {
        const auto est = view["estimates"].get<std::vector<double>>();
        const RewardParams nu = Eigen::Map<const Vector>(est.data(), static_cast<Eigen::Index>(est.size()));
        if (nu != local.rewards[t]) ++mismatched;
        if (t == 100) break;
        std::vector<Candidate> cands;
        for (const auto& k : view["candidates"])
            cands.push_back({{k["state"].get<int>(), action_from_string(k["action"].get<std::string>())}});
        const std::size_t pick = scripted_cooperative_choice(mdp, truth, c.planner, c.eta, nu, cands);
        if (pick != local.choices[t]) ++mismatched;
        view = post("/api/v1/sessions/" + id + "/select", {{"candidate_index", pick}});
    }
    server.stop();
    return {mismatched == 0 && view["completed"] == true,
            fmt("100 http steps vs in-process: %zu mismatched states or choices", mismatched)};
}

} // namespace

int main(int argc, char** argv) {
    const std::vector<std::string> only(argv + 1, argv + argc);
    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
        {"gradient-correctness", gradients},
        {"reduction-identities", reductions},
        {"local-improvement", local_improvement},
        {"ordering-paper-scale", ordering},
        {"adversarial", adversarial},
        {"irl-paper-scale", irl},
        {"soft-vi-fidelity", soft_vi},
        {"session-equivalence", session_equivalence},
    };
    int failed = 0;
    for (const auto& [name, run] : criteria) {
        if (!only.empty() && std::find(only.begin(), only.end(), name) == only.end()) continue;
        Outcome o;
        try {
            o = run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failed += !o.pass;
        std::printf("%s %s: %s\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str());
        std::fflush(stdout);
    }
    return failed == 0 ? 0 : 1;
}
