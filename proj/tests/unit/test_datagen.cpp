#include "ital/datagen.hpp"
#include "ital/errors.hpp"
#include "../support.hpp"

#include <doctest.h>

#include <chrono>
#include <cstdio>
#include <sstream>

using namespace ital;

TEST_SUITE("datagen") {

TEST_CASE("regression data are fit exactly by omega*") {
    const SyntheticTaskSpec spec{RegressionTask{8, 50}, 3};
    const SyntheticTask t = gen_regression(spec);
    CHECK(t.data.examples.size() == 50);
    CHECK(t.omega_star.cols() == 9);
    CHECK(t.omega_star.cwiseAbs().maxCoeff() <= 1.0);
    for (const auto& ex : t.data.examples) {
        CHECK(ex.features.cwiseAbs().maxCoeff() <= 1.0);
        CHECK(loss_value(LossSpec::squared(), t.omega_star, ex) == 0.0);
    }
    const SyntheticTask again = gen_regression(spec);
    CHECK(again.omega_star == t.omega_star);
    CHECK(again.data.examples.back().features == t.data.examples.back().features);
}

TEST_CASE("classification clusters and fitted omega*") {
    GaussianClassesTask task{5, 4, 200};
    task.center_scale = 10;
    const SyntheticTaskSpec spec{task, 9};
    const SyntheticTask t = gen_classification(spec);
    std::vector<int> counts(4, 0);
    int correct = 0;
    const LossSpec ce = LossSpec::cross_entropy(4);
    for (const auto& ex : t.data.examples) {
        ++counts[ex.class_index()];
        correct += predict_class(ce, t.omega_star, ex) == ex.class_index();
    }
    for (int c : counts) CHECK(c == 50);
    CHECK(correct >= 198);

    // Independent stationarity check from per-example gradients.
    const double lambda = 1.0 / 200;
    Params g = Params::Zero(4, 6);
    for (const auto& ex : t.data.examples) g += loss_grad(LossSpec::cross_entropy(4, lambda), t.omega_star, ex);
    CHECK((g / 200.0).norm() < 1e-6);
    CHECK(gen_classification(spec).omega_star == t.omega_star);
}

TEST_CASE("logistic fit reports non-convergence") {
    const SyntheticTask t = gen_classification(SyntheticTaskSpec{GaussianClassesTask{3, 3, 30}, 1});
    CHECK_THROWS_AS(fit_multinomial_logistic(t.data.examples, 3, 3, 0.01, 1e-6, 1), ConvergenceError);
}

TEST_CASE("spec validation") {
    CHECK_THROWS_AS(gen_classification(SyntheticTaskSpec{GaussianClassesTask{3, 4, 30}, 1}), ConfigError);
    GaussianClassesTask bad{3, 3, 30};
    bad.variance = 0;
    CHECK_THROWS_AS(gen_classification(SyntheticTaskSpec{bad, 1}), ConfigError);
    CHECK_THROWS_AS(gen_regression(SyntheticTaskSpec{RegressionTask{0, 10}, 1}), ConfigError);
}

TEST_CASE("feature maps are orthogonal and preserve inner products") {
    Rng rng = make_stream(5, Stream::FeatureMap);
    const FeatureMap m = make_feature_map(12, rng);
    CHECK((m.p * m.p.transpose() - Matrix::Identity(12, 12)).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((m.p.transpose() * m.p - Matrix::Identity(12, 12)).cwiseAbs().maxCoeff() < 1e-10);

    const LossSpec spec = LossSpec::cross_entropy(3);
    double worst = 0;
    for (int i = 0; i < 1000; ++i) {
        const TeachingExample ex{ital::testing::random_vector(12, rng), 1};
        const Params nu = ital::testing::random_params(3, 13, rng);
        const TeachingExample tex{m.to_teacher(ex.features), 1};
        worst = std::max(worst, (logits(spec, nu, ex) - logits(spec, m.params_to_teacher(nu), tex)).cwiseAbs().maxCoeff());
        CHECK((m.to_learner(tex.features) - ex.features).cwiseAbs().maxCoeff() < 1e-12);
    }
    CHECK(worst <= 1e-9);
    const Params nu = ital::testing::random_params(2, 13, rng);
    CHECK((m.params_to_learner(m.params_to_teacher(nu)) - nu).cwiseAbs().maxCoeff() < 1e-12);

    const FeatureMap one = make_feature_map(1, rng);
    CHECK(std::abs(one.p(0, 0)) == doctest::Approx(1.0));
    CHECK_THROWS_AS(make_feature_map(0, rng), ConfigError);
}

TEST_CASE("holdout split") {
    const SyntheticTask t = gen_regression(SyntheticTaskSpec{RegressionTask{2, 100}, 1});
    Rng a = make_stream(1, Stream::Data), b = a;
    const auto [train, test] = split_holdout(t.data.examples, 0.2, a);
    CHECK(train.size() == 80);
    CHECK(test.size() == 20);
    const auto [train2, test2] = split_holdout(t.data.examples, 0.2, b);
    CHECK(test2.front().features == test.front().features);
}

TEST_CASE("feature file round trip") {
    std::istringstream in("# d=2 K=3 n=3\n0,1.5,-2\n2,0,0.25\n1,3e-3,4\n");
    const Dataset d = read_feature_dataset(in);
    CHECK(d.dim == 2);
    CHECK(d.classes == 3);
    REQUIRE(d.examples.size() == 3);
    CHECK(d.examples[0].features(1) == -2.0);
    CHECK(d.examples[1].label == 2.0);
    CHECK(d.examples[2].features(0) == 0.003);

    std::stringstream io;
    write_feature_dataset(io, d);
    const Dataset back = read_feature_dataset(io);
    CHECK(back.examples[2].features == d.examples[2].features);
}

TEST_CASE("feature file errors carry line numbers") {
    const auto line_of = [](const std::string& text) -> std::size_t {
        std::istringstream in(text);
        try {
            read_feature_dataset(in);
        } catch (const ParseError& e) {
            return e.line();
        }
        return 999;
    };
    CHECK(line_of("# d=2 K=3 n=2\n0,1,2\n3,1,2\n") == 3);
    CHECK(line_of("# d=2 K=3 n=2\n0,1,2\n1,1\n") == 3);
    CHECK(line_of("# d=2 K=3 n=2\n0,1,x\n1,1,1\n") == 2);
    CHECK(line_of("# d=2 K=3 n=2\n0,1,1,4\n1,1,1\n") == 2);
    CHECK(line_of("d=2 K=3 n=1\n0,1,1\n") == 1);
    CHECK(line_of("# d=2 K=3 n=3\n0,1,1\n") == 2);
    CHECK(line_of("# d=1 K=0 n=1\n-0.5,2\n") == 999);
}

TEST_CASE("ten thousand rows load quickly") {
    Rng rng = make_stream(2, Stream::Data);
    Dataset d{32, 10, {}};
    for (int i = 0; i < 10000; ++i) d.examples.push_back({ital::testing::random_vector(32, rng), double(i % 10)});
    const std::string path = "ital_datagen_bench.csv";
    save_feature_dataset(path, d);
    const auto t0 = std::chrono::steady_clock::now();
    const Dataset back = load_feature_dataset(path);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::remove(path.c_str());
    CHECK(back.examples.size() == 10000);
    CHECK(back.examples[1234].features == d.examples[1234].features);
    CHECK(secs < 1.0);
}

}
