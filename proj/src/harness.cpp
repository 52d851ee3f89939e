#include "ital/harness.hpp"

#include "ital/errors.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <mutex>
#include <optional>
#include <thread>
#include <tuple>

#ifndef ITAL_GIT_HASH
#define ITAL_GIT_HASH "unknown"
#endif

namespace ital {

using nlohmann::json;

std::string build_revision() { return ITAL_GIT_HASH; }

// ---------------------------------------------------------------------------
// Names

std::string to_string(TaskKind kind) {
    switch (kind) {
    case TaskKind::Regression: return "regression";
    case TaskKind::Classification: return "classification";
    case TaskKind::External: return "external";
    case TaskKind::GridDense: return "grid-dense";
    case TaskKind::GridSparse: return "grid-sparse";
    }
    return "?";
}

TaskKind task_kind_from_string(const std::string& name) {
    for (TaskKind k : {TaskKind::Regression, TaskKind::Classification, TaskKind::External, TaskKind::GridDense,
                       TaskKind::GridSparse})
        if (to_string(k) == name) return k;
    throw ConfigError("unknown task '" + name + "'");
}

bool is_grid_task(TaskKind kind) { return kind == TaskKind::GridDense || kind == TaskKind::GridSparse; }

std::string LearnerSpec::name() const {
    switch (kind) {
    case LearnerKind::Batch: return "batch";
    case LearnerKind::Sgd: return "sgd";
    case LearnerKind::ImtNaive: return "imt";
    case LearnerKind::Ital: return "ital-" + std::to_string(subset);
    }
    return "?";
}

LearnerSpec LearnerSpec::parse(const std::string& name) {
    if (name == "batch") return {LearnerKind::Batch, 0};
    if (name == "sgd") return {LearnerKind::Sgd, 0};
    if (name == "imt" || name == "imt-naive") return {LearnerKind::ImtNaive, 0};
    if (name.rfind("ital-", 0) == 0) {
        const std::string m = name.substr(5);
        if (!m.empty() && std::all_of(m.begin(), m.end(), [](char c) { return c >= '0' && c <= '9'; })) {
            const unsigned long v = std::stoul(m);
            if (v >= 1) return {LearnerKind::Ital, v};
        }
    }
    throw ConfigError("unknown learner '" + name + "' (expected batch, sgd, imt or ital-<M>)");
}

std::vector<LearnerSpec> default_learners(int batch_size) {
    std::vector<LearnerSpec> out{{LearnerKind::Batch, 0}, {LearnerKind::Sgd, 0}, {LearnerKind::ImtNaive, 0}};
    for (std::size_t m : {1, 2, 4, 19}) {
        const std::size_t capped = std::min<std::size_t>(m, static_cast<std::size_t>(std::max(batch_size - 1, 1)));
        if (std::none_of(out.begin(), out.end(), [&](const LearnerSpec& s) { return s.subset == capped; }))
            out.push_back({LearnerKind::Ital, capped});
    }
    return out;
}

double default_beta(TaskKind task, TeacherMode teacher) {
    double magnitude = 30000;
    switch (task) {
    case TaskKind::Regression: magnitude = 2000; break;
    case TaskKind::Classification: magnitude = 60000; break;
    case TaskKind::External: magnitude = 30000; break;
    case TaskKind::GridDense: magnitude = 25000; break;
    case TaskKind::GridSparse: magnitude = 30000; break;
    }
    if (teacher == TeacherMode::Adversarial) return -magnitude;
    if (teacher == TeacherMode::Random) return 0;
    return magnitude;
}

// ---------------------------------------------------------------------------
// Config

int ExperimentConfig::effective_dim() const {
    if (dim > 0) return dim;
    return task == TaskKind::Classification ? 30 : 100;
}

double ExperimentConfig::effective_beta() const { return beta ? *beta : default_beta(task, teacher); }

void ExperimentConfig::validate() const {
    const auto fail = [](const std::string& m) { throw ConfigError(m); };
    if (learners.empty()) fail("no learners configured");
    if (!(eta > 0) || !std::isfinite(eta)) fail("eta must be positive");
    if (beta && !std::isfinite(*beta)) fail("beta must be finite");
    if (!(beta_decay >= 0 && beta_decay < 1)) fail("beta_decay must lie in [0, 1)");
    if (iterations < 1) fail("iterations must be at least 1");
    if (seeds < 1) fail("seeds must be at least 1");
    if (batch_size < 1) fail("batch_size must be at least 1");
    for (const auto& l : learners) {
        const bool selects = l.kind == LearnerKind::ImtNaive || l.kind == LearnerKind::Ital;
        if (selects && batch_size < 2) fail("batch_size must be at least 2 when the teacher selects");
        if (l.kind == LearnerKind::Ital && l.subset > static_cast<std::size_t>(batch_size - 1))
            fail("ITAL subset " + std::to_string(l.subset) + " exceeds batch_size - 1");
    }
    if (!(init_scale >= 0)) fail("init_scale must be nonnegative");
    if (is_grid_task(task)) {
        if (grid_width < 1 || grid_height < 1) fail("grid dimensions must be positive");
        if (task == TaskKind::GridSparse && grid_width * grid_height < 3) fail("sparse maps need at least 3 grids");
        if (batch_size > grid_width * grid_height * kNumActions) fail("batch_size exceeds the number of (s, a) pairs");
        if (!(discount > 0 && discount < 1)) fail("discount must lie in (0, 1)");
        planner.validate();
        return;
    }
    if (!(lambda >= 0)) fail("lambda must be nonnegative");
    if (!(holdout >= 0 && holdout < 1)) fail("holdout must lie in [0, 1)");
    if (task == TaskKind::External) {
        if (teacher_features.empty() || learner_features.empty())
            fail("external task needs teacher_features and learner_features");
        if (teacher == TeacherMode::OmniscientCooperative)
            fail("the omniscient teacher needs a shared parameter space; external features have none");
        return;
    }
    if (effective_dim() < 1) fail("dim must be positive");
    if (task == TaskKind::Classification) {
        if (classes < 2) fail("classes must be at least 2");
        if (count % classes != 0) fail("count must be divisible by classes");
        if (!(variance > 0)) fail("variance must be positive");
    }
    const double train = std::floor(count * (1 - holdout));
    if (train < batch_size) fail("training split is smaller than batch_size");
}

void to_json(json& j, const ExperimentConfig& c) {
    std::vector<std::string> learners;
    for (const auto& l : c.learners) learners.push_back(l.name());
    j = json{{"task", to_string(c.task)},
             {"teacher", to_string(c.teacher)},
             {"learners", learners},
             {"eta", c.eta},
             {"beta", c.beta ? json(*c.beta) : json(nullptr)},
             {"beta_decay", c.beta_decay},
             {"batch_size", c.batch_size},
             {"iterations", c.iterations},
             {"seeds", c.seeds},
             {"first_seed", c.first_seed},
             {"out", c.out},
             {"dim", c.dim},
             {"classes", c.classes},
             {"count", c.count},
             {"variance", c.variance},
             {"holdout", c.holdout},
             {"lambda", c.lambda},
             {"feature_mismatch", c.feature_mismatch},
             {"init_scale", c.init_scale},
             {"teacher_features", c.teacher_features},
             {"learner_features", c.learner_features},
             {"grid_width", c.grid_width},
             {"grid_height", c.grid_height},
             {"discount", c.discount},
             {"planner",
              {{"sharpness", c.planner.sharpness},
               {"rationality", c.planner.rationality},
               {"tolerance", c.planner.tolerance},
               {"max_sweeps", c.planner.max_sweeps}}},
             {"threads", c.threads}};
}

namespace {

template <typename T>
void read_field(const json& j, const char* key, T& out) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config field '") + key + "': " + e.what());
    }
}

} // namespace

void from_json(const json& j, ExperimentConfig& c) {
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    static const std::vector<std::string> known{
        "task", "teacher", "learners", "eta", "beta", "beta_decay", "batch_size", "iterations", "seeds",
        "first_seed", "out", "dim", "classes", "count", "variance", "holdout", "lambda", "feature_mismatch",
        "init_scale", "teacher_features", "learner_features", "grid_width", "grid_height", "discount", "planner",
        "threads"};
    for (const auto& [key, _] : j.items())
        if (std::find(known.begin(), known.end(), key) == known.end())
            throw ConfigError("unknown config field '" + key + "'");

    std::string name;
    if (j.contains("task")) {
        read_field(j, "task", name);
        c.task = task_kind_from_string(name);
    }
    if (j.contains("teacher")) {
        read_field(j, "teacher", name);
        c.teacher = teacher_mode_from_string(name);
    }
    if (j.contains("learners")) {
        std::vector<std::string> names;
        read_field(j, "learners", names);
        c.learners.clear();
        for (const auto& n : names) c.learners.push_back(LearnerSpec::parse(n));
    }
    read_field(j, "eta", c.eta);
    if (j.contains("beta")) {
        if (j.at("beta").is_null()) c.beta.reset();
        else {
            double b = 0;
            read_field(j, "beta", b);
            c.beta = b;
        }
    }
    read_field(j, "beta_decay", c.beta_decay);
    read_field(j, "batch_size", c.batch_size);
    read_field(j, "iterations", c.iterations);
    read_field(j, "seeds", c.seeds);
    read_field(j, "first_seed", c.first_seed);
    read_field(j, "out", c.out);
    read_field(j, "dim", c.dim);
    read_field(j, "classes", c.classes);
    read_field(j, "count", c.count);
    read_field(j, "variance", c.variance);
    read_field(j, "holdout", c.holdout);
    read_field(j, "lambda", c.lambda);
    read_field(j, "feature_mismatch", c.feature_mismatch);
    read_field(j, "init_scale", c.init_scale);
    read_field(j, "teacher_features", c.teacher_features);
    read_field(j, "learner_features", c.learner_features);
    read_field(j, "grid_width", c.grid_width);
    read_field(j, "grid_height", c.grid_height);
    read_field(j, "discount", c.discount);
    if (j.contains("planner")) {
        const json& p = j.at("planner");
        if (!p.is_object()) throw ConfigError("config field 'planner' must be an object");
        for (const auto& [key, _] : p.items())
            if (key != "sharpness" && key != "rationality" && key != "tolerance" && key != "max_sweeps")
                throw ConfigError("unknown planner field '" + key + "'");
        read_field(p, "sharpness", c.planner.sharpness);
        read_field(p, "rationality", c.planner.rationality);
        read_field(p, "tolerance", c.planner.tolerance);
        read_field(p, "max_sweeps", c.planner.max_sweeps);
    }
    read_field(j, "threads", c.threads);
    if (c.learners.empty()) c.learners = default_learners(c.batch_size);
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path);
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw ConfigError("config " + path + " is not valid JSON: " + e.what());
    }
    ExperimentConfig c = j.get<ExperimentConfig>();
    return c;
}

// ---------------------------------------------------------------------------
// Linear worlds

namespace {

std::vector<std::size_t> sample_batch(std::size_t pool, std::size_t size, Rng& rng) {
    std::vector<std::size_t> idx(pool);
    std::iota(idx.begin(), idx.end(), 0);
    for (std::size_t i = 0; i < size; ++i) {
        const std::size_t j = std::uniform_int_distribution<std::size_t>(i, pool - 1)(rng);
        std::swap(idx[i], idx[j]);
    }
    idx.resize(size);
    return idx;
}

Params uniform_params(Eigen::Index rows, Eigen::Index cols, double scale, Rng& rng) {
    Params p(rows, cols);
    for (Eigen::Index i = 0; i < p.size(); ++i) p.data()[i] = scale > 0 ? uniform(rng, -scale, scale) : 0.0;
    return p;
}

Params least_squares(const std::vector<TeachingExample>& examples, int dim) {
    Eigen::MatrixXd x(static_cast<Eigen::Index>(examples.size()), dim + 1);
    Eigen::VectorXd y(x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        x.row(i).head(dim) = examples[static_cast<std::size_t>(i)].features.transpose();
        x(i, dim) = 1;
        y(i) = examples[static_cast<std::size_t>(i)].label;
    }
    const Eigen::VectorXd w = x.colPivHouseholderQr().solve(y);
    return Params(w.transpose());
}

struct LinearWorld {
    LossSpec learner_loss;
    LossSpec teacher_loss;
    std::vector<TeachingExample> train_learner;
    std::vector<TeachingExample> train_teacher;
    std::vector<TeachingExample> test_learner;
    Params nu_star;
    Params omega_star;
    std::optional<FeatureMap> map;
    Params init;
};

LinearWorld build_linear_world(const ExperimentConfig& c, std::uint64_t seed) {
    LinearWorld w;
    Rng split_rng = make_stream(seed, Stream::Holdout);
    if (c.task == TaskKind::External) {
        const Dataset teacher = load_feature_dataset(c.teacher_features);
        const Dataset learner = load_feature_dataset(c.learner_features);
        if (teacher.examples.size() != learner.examples.size())
            throw ConfigError("teacher and learner feature files differ in length");
        if (teacher.classes != learner.classes) throw ConfigError("teacher and learner feature files disagree on K");
        for (std::size_t i = 0; i < teacher.examples.size(); ++i)
            if (teacher.examples[i].label != learner.examples[i].label)
                throw ConfigError("label mismatch between feature files at example " + std::to_string(i + 1));
        // Split both files with one permutation by tagging learner rows with their index.
        std::vector<TeachingExample> tagged;
        for (std::size_t i = 0; i < learner.examples.size(); ++i)
            tagged.push_back({Vector::Constant(1, static_cast<double>(i)), 0});
        auto [train_idx, test_idx] = split_holdout(std::move(tagged), c.holdout, split_rng);
        for (const auto& t : train_idx) {
            const auto i = static_cast<std::size_t>(t.features(0));
            w.train_learner.push_back(learner.examples[i]);
            w.train_teacher.push_back(teacher.examples[i]);
        }
        for (const auto& t : test_idx) w.test_learner.push_back(learner.examples[static_cast<std::size_t>(t.features(0))]);
        if (static_cast<int>(w.train_learner.size()) < c.batch_size)
            throw ConfigError("training split is smaller than batch_size");
        w.learner_loss = learner.loss(c.lambda);
        w.teacher_loss = teacher.loss(c.lambda);
        if (learner.classes == 0) {
            w.nu_star = least_squares(w.train_learner, learner.dim);
            w.omega_star = least_squares(w.train_teacher, teacher.dim);
        } else {
            const double fit_lambda = 1.0 / static_cast<double>(w.train_learner.size());
            w.nu_star = fit_multinomial_logistic(w.train_learner, learner.dim, learner.classes, fit_lambda).params;
            w.omega_star = fit_multinomial_logistic(w.train_teacher, teacher.dim, teacher.classes, fit_lambda).params;
        }
    } else {
        SyntheticTaskSpec spec{RegressionTask{c.effective_dim(), c.count}, seed};
        if (c.task == TaskKind::Classification) {
            GaussianClassesTask t{c.effective_dim(), c.classes, c.count, c.variance};
            spec.task = t;
        }
        SyntheticTask task = generate(spec);
        auto [train, test] = split_holdout(std::move(task.data.examples), c.holdout, split_rng);
        w.train_learner = std::move(train);
        w.test_learner = std::move(test);
        w.learner_loss = task.data.loss(c.lambda);
        w.teacher_loss = w.learner_loss;
        w.nu_star = task.omega_star;
        if (c.feature_mismatch) {
            Rng map_rng = make_stream(seed, Stream::FeatureMap);
            w.map = make_feature_map(c.effective_dim(), map_rng);
            w.train_teacher = w.map->examples_to_teacher(w.train_learner);
            w.omega_star = w.map->params_to_teacher(w.nu_star);
        } else {
            w.train_teacher = w.train_learner;
            w.omega_star = w.nu_star;
        }
    }
    Rng init_rng = make_stream(seed, Stream::Init);
    w.init = uniform_params(w.nu_star.rows(), w.nu_star.cols(), c.init_scale, init_rng);
    return w;
}

std::vector<double> linear_teacher_volumes(const ExperimentConfig& c, const LinearWorld& w, const Params& nu,
                                           const std::vector<std::size_t>& batch, double eta) {
    std::vector<double> volumes(batch.size(), 0.0);
    if (c.teacher == TeacherMode::Random) return volumes;
    if (c.teacher == TeacherMode::OmniscientCooperative) {
        const Params w_prev = w.map ? w.map->params_to_teacher(nu) : nu;
        for (std::size_t i = 0; i < batch.size(); ++i)
            volumes[i] = teaching_volume_omniscient(w.teacher_loss, w_prev, w.omega_star, eta, w.train_teacher[batch[i]]);
        return volumes;
    }
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const Vector alpha = logits(w.learner_loss, nu, w.train_learner[batch[i]]);
        volumes[i] = teaching_volume_feedback(w.teacher_loss, alpha, w.train_teacher[batch[i]], w.omega_star, eta);
    }
    return volumes;
}

void record_linear(const LinearWorld& w, const Params& nu, MetricTrace& trace) {
    trace.metrics["distance"].push_back(param_distance(nu, w.nu_star));
    if (w.test_learner.empty()) return;
    double loss = 0;
    std::size_t correct = 0;
    for (const auto& ex : w.test_learner) {
        const Vector z = logits(w.learner_loss, nu, ex);
        loss += loss_from_logits(w.learner_loss, z, ex.label);
        if (w.learner_loss.kind == LossKind::CrossEntropy) {
            Eigen::Index best = 0;
            z.maxCoeff(&best);
            correct += best == ex.class_index();
        }
    }
    const double n = static_cast<double>(w.test_learner.size());
    if (!std::isfinite(loss)) throw NumericError("held-out loss is not finite");
    trace.metrics["loss"].push_back(loss / n);
    if (w.learner_loss.kind == LossKind::CrossEntropy) trace.metrics["accuracy"].push_back(static_cast<double>(correct) / n);
}

Schedule beta_schedule(const ExperimentConfig& c) {
    return c.beta_decay > 0 ? Schedule::exponential_decay(c.effective_beta(), c.beta_decay)
                            : Schedule::constant(c.effective_beta());
}

MetricTrace run_linear_learner(const ExperimentConfig& c, const LinearWorld& w, const LearnerSpec& spec,
                               std::uint64_t seed) {
    MetricTrace trace{spec.name(), seed, {}};
    Rng batch_rng = make_stream(seed, Stream::Batch);
    Rng teacher_rng = make_stream(seed, Stream::Teacher);
    Rng subset_rng = make_stream(seed, Stream::Subset);

    LearnerState state{w.init};
    state.eta = Schedule::constant(c.eta);
    state.beta = beta_schedule(c);
    state.subset_size = spec.subset;
    record_linear(w, state.params, trace);

    const auto bs = static_cast<std::size_t>(c.batch_size);
    for (int t = 0; t < c.iterations; ++t) {
        const std::vector<std::size_t> idx = sample_batch(w.train_learner.size(), bs, batch_rng);
        switch (spec.kind) {
        case LearnerKind::Batch: {
            TeachingBatch batch;
            for (std::size_t i : idx) batch.examples.push_back(w.train_learner[i]);
            state = batch_update(state, w.learner_loss, batch);
            break;
        }
        case LearnerKind::Sgd: {
            const std::size_t j = std::uniform_int_distribution<std::size_t>(0, bs - 1)(teacher_rng);
            state = naive_update(state, w.learner_loss, w.train_learner[idx[j]]);
            break;
        }
        case LearnerKind::ImtNaive:
        case LearnerKind::Ital: {
            const auto volumes = linear_teacher_volumes(c, w, state.params, idx, state.current_eta());
            const std::size_t chosen = select_example(volumes, c.teacher, teacher_rng);
            if (spec.kind == LearnerKind::ImtNaive) {
                state = naive_update(state, w.learner_loss, w.train_learner[idx[chosen]]);
            } else {
                TeachingBatch batch;
                for (std::size_t i : idx) batch.examples.push_back(w.train_learner[i]);
                const auto subset = sample_subset(bs, chosen, spec.subset, subset_rng);
                state = ital_update(state, w.learner_loss, batch, chosen, subset).first;
            }
            break;
        }
        }
        if (!state.params.allFinite()) throw NumericError("learner parameters diverged at iteration " + std::to_string(t + 1));
        record_linear(w, state.params, trace);
    }
    return trace;
}

// ---------------------------------------------------------------------------
// Gridworld worlds

struct GridWorldSetup {
    GridworldMDP learner;
    IrlTeacher teacher;
    Vector truth;          ///< cell rewards = learner-encoded nu*
    Matrix truth_policy;
    RewardParams init;
};

GridWorldSetup build_grid_world(const ExperimentConfig& c, std::uint64_t seed) {
    Rng map_rng = make_stream(seed, Stream::Map);
    const MapKind kind = c.task == TaskKind::GridSparse ? MapKind::Sparse : MapKind::DenseRandom;
    const Vector truth = make_map(kind, c.grid_width, c.grid_height, map_rng);
    const GridworldMDP learner(c.grid_width, c.grid_height, {}, c.discount);
    const GridworldMDP teacher_world = learner.with_encoding(random_encoding(learner.num_states(), map_rng));
    IrlTeacher teacher(teacher_world, teacher_world.params_from_cells(truth), c.planner);
    Matrix truth_policy = IrlModel(learner, truth, c.planner, false).policy();
    Rng init_rng = make_stream(seed, Stream::Init);
    RewardParams init(learner.num_states());
    for (Eigen::Index i = 0; i < init.size(); ++i) init(i) = c.init_scale > 0 ? uniform(init_rng, -c.init_scale, c.init_scale) : 0.0;
    return {learner, std::move(teacher), truth, std::move(truth_policy), std::move(init)};
}

void record_grid(const ExperimentConfig& c, const GridWorldSetup& g, const RewardParams& nu, MetricTrace& trace) {
    const IrlModel model(g.learner, nu, c.planner, false);
    trace.metrics["distance"].push_back((nu - g.truth).norm());
    trace.metrics["policy_tv"].push_back(policy_total_variation(model.policy(), g.truth_policy));
    trace.metrics["expected_return"].push_back(expected_return(g.learner.tabular(), g.truth, model.policy()));
}

MetricTrace run_grid_learner(const ExperimentConfig& c, const GridWorldSetup& g, const LearnerSpec& spec,
                             std::uint64_t seed) {
    MetricTrace trace{spec.name(), seed, {}};
    Rng batch_rng = make_stream(seed, Stream::Batch);
    Rng teacher_rng = make_stream(seed, Stream::Teacher);
    Rng subset_rng = make_stream(seed, Stream::Subset);

    IrlLearnerState state{g.init};
    state.eta = Schedule::constant(c.eta);
    state.beta = beta_schedule(c);
    state.subset_size = spec.subset;
    record_grid(c, g, state.rewards, trace);

    const auto bs = static_cast<std::size_t>(c.batch_size);
    for (int t = 0; t < c.iterations; ++t) {
        const auto batch = sample_demonstrations(g.learner.num_states(), bs, batch_rng);
        switch (spec.kind) {
        case LearnerKind::Batch:
            state = irl_batch_update(g.learner, c.planner, state, batch);
            break;
        case LearnerKind::Sgd: {
            const std::size_t j = std::uniform_int_distribution<std::size_t>(0, bs - 1)(teacher_rng);
            state = irl_naive_update(g.learner, c.planner, state, batch[j]);
            break;
        }
        case LearnerKind::ImtNaive:
        case LearnerKind::Ital: {
            const IrlUpdateKind kind = spec.kind == LearnerKind::Ital ? IrlUpdateKind::Aware : IrlUpdateKind::Naive;
            state = irl_teaching_round(g.teacher, g.learner, state, batch, c.teacher, kind, teacher_rng, subset_rng).next;
            break;
        }
        }
        if (!state.rewards.allFinite()) throw NumericError("learner rewards diverged at round " + std::to_string(t + 1));
        record_grid(c, g, state.rewards, trace);
    }
    return trace;
}

struct SeedOutcome {
    std::vector<MetricTrace> traces;
    std::vector<SeedFailure> failures;
    double seconds = 0;
};

SeedOutcome run_seed(const ExperimentConfig& c, std::uint64_t seed) {
    SeedOutcome out;
    const auto t0 = std::chrono::steady_clock::now();
    const auto guarded = [&](const std::string& learner, const auto& body) {
        try {
            body();
        } catch (const NumericError& e) {
            out.failures.push_back({seed, learner, e.what()});
        } catch (const ConvergenceError& e) {
            out.failures.push_back({seed, learner, e.what()});
        }
    };
    if (is_grid_task(c.task)) {
        std::optional<GridWorldSetup> world;
        guarded("", [&] { world.emplace(build_grid_world(c, seed)); });
        if (world)
            for (const auto& l : c.learners)
                guarded(l.name(), [&] { out.traces.push_back(run_grid_learner(c, *world, l, seed)); });
    } else {
        std::optional<LinearWorld> world;
        guarded("", [&] { world.emplace(build_linear_world(c, seed)); });
        if (world)
            for (const auto& l : c.learners)
                guarded(l.name(), [&] { out.traces.push_back(run_linear_learner(c, *world, l, seed)); });
    }
    out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return out;
}

} // namespace

RunResult run_experiment(const ExperimentConfig& config) {
    config.validate();
    const auto t0 = std::chrono::steady_clock::now();
    const std::size_t n = static_cast<std::size_t>(config.seeds);
    std::vector<SeedOutcome> outcomes(n);

    unsigned workers = config.threads ? config.threads : std::max(1u, std::thread::hardware_concurrency());
    workers = static_cast<unsigned>(std::min<std::size_t>(workers, n));
    std::atomic<std::size_t> next{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    const auto work = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            try {
                outcomes[i] = run_seed(config, config.first_seed + i);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
            }
        }
    };
    if (workers <= 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (unsigned i = 0; i < workers; ++i) pool.emplace_back(work);
        for (auto& t : pool) t.join();
    }
    if (first_error) std::rethrow_exception(first_error);

    RunResult result;
    for (auto& o : outcomes) {
        for (auto& t : o.traces) result.traces.push_back(std::move(t));
        for (auto& f : o.failures) result.failures.push_back(std::move(f));
        result.seed_seconds.push_back(o.seconds);
    }
    result.total_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return result;
}

// ---------------------------------------------------------------------------
// Summaries

const SeriesSummary& Summary::at(const std::string& learner, const std::string& metric) const {
    const auto it = series.find({learner, metric});
    if (it == series.end()) throw ShapeError("no summary for " + learner + "/" + metric);
    return it->second;
}

Summary summarize(const std::vector<MetricTrace>& traces) {
    if (traces.empty()) throw ShapeError("summarize needs at least one trace");
    Summary out;
    std::map<std::pair<std::string, std::string>, std::vector<const std::vector<double>*>> groups;
    std::vector<std::string> learner_order;
    for (const auto& t : traces) {
        if (std::find(learner_order.begin(), learner_order.end(), t.learner) == learner_order.end())
            learner_order.push_back(t.learner);
        for (const auto& [metric, values] : t.metrics) groups[{t.learner, metric}].push_back(&values);
    }
    for (const auto& [key, series] : groups) {
        const std::size_t len = series.front()->size();
        for (const auto* s : series)
            if (s->size() != len)
                throw ShapeError("traces for " + key.first + "/" + key.second + " have different lengths");
        SeriesSummary s;
        s.n = series.size();
        s.mean.assign(len, 0.0);
        s.stderr_.assign(len, 0.0);
        for (std::size_t i = 0; i < len; ++i) {
            double sum = 0;
            for (const auto* v : series) sum += (*v)[i];
            const double mean = sum / static_cast<double>(s.n);
            double ss = 0;
            for (const auto* v : series) ss += ((*v)[i] - mean) * ((*v)[i] - mean);
            s.mean[i] = mean;
            s.stderr_[i] = s.n > 1 ? std::sqrt(ss / static_cast<double>(s.n - 1)) / std::sqrt(static_cast<double>(s.n)) : 0.0;
        }
        out.series.emplace(key, std::move(s));
    }

    // Paired final-iteration comparisons over seeds shared by both learners.
    std::map<std::tuple<std::string, std::string, std::uint64_t>, double> finals;
    std::vector<std::string> metrics;
    for (const auto& t : traces) {
        for (const auto& [metric, values] : t.metrics) {
            if (values.empty()) continue;
            finals[{t.learner, metric, t.seed}] = values.back();
            if (std::find(metrics.begin(), metrics.end(), metric) == metrics.end()) metrics.push_back(metric);
        }
    }
    std::vector<std::uint64_t> seeds;
    for (const auto& t : traces)
        if (std::find(seeds.begin(), seeds.end(), t.seed) == seeds.end()) seeds.push_back(t.seed);
    for (std::size_t a = 0; a < learner_order.size(); ++a) {
        for (std::size_t b = a + 1; b < learner_order.size(); ++b) {
            for (const auto& metric : metrics) {
                std::vector<double> diffs;
                for (auto seed : seeds) {
                    const auto ia = finals.find({learner_order[a], metric, seed});
                    const auto ib = finals.find({learner_order[b], metric, seed});
                    if (ia != finals.end() && ib != finals.end()) diffs.push_back(ia->second - ib->second);
                }
                if (diffs.empty()) continue;
                PairedComparison pc{learner_order[a], learner_order[b], metric, diffs.size(), 0, 0};
                pc.mean_difference = std::accumulate(diffs.begin(), diffs.end(), 0.0) / static_cast<double>(diffs.size());
                if (diffs.size() > 1) {
                    double ss = 0;
                    for (double d : diffs) ss += (d - pc.mean_difference) * (d - pc.mean_difference);
                    const double se = std::sqrt(ss / static_cast<double>(diffs.size() - 1)) /
                                      std::sqrt(static_cast<double>(diffs.size()));
                    pc.t_statistic = se > 0 ? pc.mean_difference / se
                                            : (pc.mean_difference == 0 ? 0.0 : std::copysign(INFINITY, pc.mean_difference));
                }
                out.comparisons.push_back(pc);
            }
        }
    }
    return out;
}

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur.push_back(ch);
        }
    }
    out.push_back(cur);
    return out;
}

} // namespace

void write_summary(std::ostream& out, const Summary& summary) {
    out << "learner,metric,iteration,mean,stderr,n\n";
    for (const auto& [key, s] : summary.series)
        for (std::size_t i = 0; i < s.mean.size(); ++i)
            out << key.first << ',' << key.second << ',' << i << ',' << fmt(s.mean[i]) << ',' << fmt(s.stderr_[i])
                << ',' << s.n << '\n';
    out << "\nlearner_a,learner_b,metric,n,mean_difference,t_statistic\n";
    for (const auto& c : summary.comparisons)
        out << c.learner_a << ',' << c.learner_b << ',' << c.metric << ',' << c.n << ',' << fmt(c.mean_difference)
            << ',' << fmt(c.t_statistic) << '\n';
}

void write_traces_csv(std::ostream& out, const std::vector<MetricTrace>& traces) {
    out << "learner,seed,iteration,metric,value\n";
    for (const auto& t : traces)
        for (const auto& [metric, values] : t.metrics)
            for (std::size_t i = 0; i < values.size(); ++i)
                out << t.learner << ',' << t.seed << ',' << i << ',' << metric << ',' << fmt(values[i]) << '\n';
}

std::vector<MetricTrace> read_traces_csv(std::istream& in) {
    std::string line;
    std::size_t lineno = 1;
    if (!std::getline(in, line) || split_csv(line) != std::vector<std::string>{"learner", "seed", "iteration", "metric", "value"})
        throw ParseError("expected header learner,seed,iteration,metric,value", 1);
    std::vector<MetricTrace> traces;
    std::map<std::pair<std::string, std::uint64_t>, std::size_t> index;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        const auto f = split_csv(line);
        if (f.size() != 5) throw ParseError("expected 5 fields", lineno);
        std::uint64_t seed = 0;
        std::size_t iteration = 0;
        double value = 0;
        try {
            std::size_t used = 0;
            seed = std::stoull(f[1], &used);
            if (used != f[1].size()) throw std::invalid_argument(f[1]);
            iteration = std::stoul(f[2], &used);
            if (used != f[2].size()) throw std::invalid_argument(f[2]);
            value = std::stod(f[4], &used);
            if (used != f[4].size()) throw std::invalid_argument(f[4]);
        } catch (const std::logic_error&) {
            throw ParseError("bad numeric field", lineno);
        }
        const auto key = std::make_pair(f[0], seed);
        auto it = index.find(key);
        if (it == index.end()) {
            it = index.emplace(key, traces.size()).first;
            traces.push_back({f[0], seed, {}});
        }
        auto& series = traces[it->second].metrics[f[3]];
        if (iteration != series.size())
            throw ParseError("iteration " + std::to_string(iteration) + " out of order for " + f[0] + "/" + f[3], lineno);
        series.push_back(value);
    }
    return traces;
}

// ---------------------------------------------------------------------------
// Manifest

std::string manifest_path_for(const std::string& csv_path) {
    const auto slash = csv_path.find_last_of('/');
    const auto dot = csv_path.find_last_of('.');
    const std::string stem = dot != std::string::npos && (slash == std::string::npos || dot > slash)
                                 ? csv_path.substr(0, dot)
                                 : csv_path;
    return stem + ".manifest.json";
}

json make_manifest(const ExperimentConfig& config, const RunResult& result, const std::string& csv_path) {
    json failures = json::array();
    for (const auto& f : result.failures) failures.push_back({{"seed", f.seed}, {"learner", f.learner}, {"message", f.message}});
    std::size_t rows = 0;
    for (const auto& t : result.traces)
        for (const auto& [_, v] : t.metrics) rows += v.size();
    return json{{"schema", "ital-run-manifest/1"},
                {"config", config},
                {"effective_beta", config.effective_beta()},
                {"git_hash", build_revision()},
                {"created_unix", static_cast<std::int64_t>(std::time(nullptr))},
                {"csv", csv_path},
                {"rows", rows},
                {"timings", {{"total_seconds", result.total_seconds}, {"seed_seconds", result.seed_seconds}}},
                {"failures", failures}};
}

std::vector<std::string> validate_manifest(const json& m) {
    std::vector<std::string> problems;
    if (!m.is_object()) return {"manifest is not an object"};
    const auto need = [&](const char* key, bool ok, const char* what) {
        if (!m.contains(key)) problems.push_back(std::string("missing ") + key);
        else if (!ok) problems.push_back(std::string(key) + " must be " + what);
    };
    need("schema", m.contains("schema") && m["schema"] == "ital-run-manifest/1", "\"ital-run-manifest/1\"");
    need("config", m.contains("config") && m["config"].is_object(), "an object");
    need("effective_beta", m.contains("effective_beta") && m["effective_beta"].is_number(), "a number");
    need("git_hash", m.contains("git_hash") && m["git_hash"].is_string(), "a string");
    need("created_unix", m.contains("created_unix") && m["created_unix"].is_number_integer(), "an integer");
    need("csv", m.contains("csv") && m["csv"].is_string(), "a string");
    need("rows", m.contains("rows") && m["rows"].is_number_unsigned(), "a nonnegative integer");
    need("failures", m.contains("failures") && m["failures"].is_array(), "an array");
    if (m.contains("timings")) {
        const json& t = m["timings"];
        if (!t.is_object() || !t.contains("total_seconds") || !t["total_seconds"].is_number() ||
            !t.contains("seed_seconds") || !t["seed_seconds"].is_array())
            problems.push_back("timings must hold total_seconds and seed_seconds");
    } else {
        problems.push_back("missing timings");
    }
    if (m.contains("config") && m["config"].is_object()) {
        try {
            m["config"].get<ExperimentConfig>().validate();
        } catch (const std::exception& e) {
            problems.push_back(std::string("config: ") + e.what());
        }
    }
    return problems;
}

void emit(const ExperimentConfig& config, const RunResult& result, const std::string& out) {
    {
        std::ofstream csv(out);
        if (!csv) throw ConfigError("cannot write " + out);
        write_traces_csv(csv, result.traces);
        if (!csv) throw ConfigError("failed writing " + out);
    }
    const std::string mpath = manifest_path_for(out);
    std::ofstream mf(mpath);
    if (!mf) throw ConfigError("cannot write " + mpath);
    const auto slash = out.find_last_of('/');
    mf << make_manifest(config, result, slash == std::string::npos ? out : out.substr(slash + 1)).dump(2) << '\n';
    if (!mf) throw ConfigError("failed writing " + mpath);
}

// ---------------------------------------------------------------------------
// Beta tuning

namespace {

std::vector<double> beta_grid(double sign) {
    std::vector<double> out;
    for (int e = 0; e <= 9; ++e)
        for (double m : {1.0, 2.0, 5.0}) out.push_back(sign * m * std::pow(10.0, e));
    return out;
}

} // namespace

BetaTuning tune_beta(const ExperimentConfig& config, std::size_t rounds, double threshold) {
    config.validate();
    if (rounds == 0) throw ConfigError("tune-beta needs at least one round");
    const std::uint64_t seed = config.first_seed;
    const double sign = config.teacher == TeacherMode::Adversarial ? -1.0 : 1.0;
    const auto grid = beta_grid(sign);
    std::vector<double> max_prob(grid.size(), 0.0);
    const auto bs = static_cast<std::size_t>(config.batch_size);

    Rng batch_rng = make_stream(seed, Stream::Batch);
    Rng teacher_rng = make_stream(seed, Stream::Teacher);
    const auto accumulate = [&](const std::vector<double>& volumes) {
        for (std::size_t b = 0; b < grid.size(); ++b) {
            const auto q = selection_distribution(volumes, grid[b]);
            max_prob[b] += *std::max_element(q.begin(), q.end());
        }
    };

    if (is_grid_task(config.task)) {
        const GridWorldSetup g = build_grid_world(config, seed);
        IrlLearnerState state{g.init};
        state.eta = Schedule::constant(config.eta);
        for (std::size_t r = 0; r < rounds; ++r) {
            const auto batch = sample_demonstrations(g.learner.num_states(), bs, batch_rng);
            const auto round = irl_teaching_round(g.teacher, g.learner, state, batch, config.teacher,
                                                  IrlUpdateKind::Naive, teacher_rng, teacher_rng);
            const IrlModel prev(g.learner, state.rewards, config.planner, true);
            const IrlModel hat(g.learner, round.next.rewards, config.planner, false);
            std::vector<double> volumes;
            for (const auto& d : batch)
                volumes.push_back(-config.eta * config.eta * prev.grad(d).squaredNorm() +
                                  2 * config.eta * (prev.loss(d) - hat.loss(d)));
            accumulate(volumes);
            state = round.next;
        }
    } else {
        const LinearWorld w = build_linear_world(config, seed);
        LearnerState state{w.init};
        state.eta = Schedule::constant(config.eta);
        for (std::size_t r = 0; r < rounds; ++r) {
            const auto idx = sample_batch(w.train_learner.size(), bs, batch_rng);
            const auto volumes = linear_teacher_volumes(config, w, state.params, idx, config.eta);
            const std::size_t chosen = select_example(volumes, config.teacher, teacher_rng);
            const LearnerState next = naive_update(state, w.learner_loss, w.train_learner[idx[chosen]]);
            std::vector<double> est;
            for (std::size_t i : idx)
                est.push_back(estimated_teaching_volume(w.learner_loss, next.params, state.params, config.eta,
                                                        w.train_learner[i]));
            accumulate(est);
            state = next;
        }
    }

    BetaTuning out;
    for (std::size_t b = 0; b < grid.size(); ++b) {
        out.probes.push_back({grid[b], max_prob[b] / static_cast<double>(rounds)});
        if (out.probes.back().mean_max_probability <= threshold) out.chosen = grid[b];
    }
    return out;
}

} // namespace ital
