#pragma once

// Configuration-driven experiment runner: seed sweeps over learner variants
// with a shared teacher, per-iteration metric traces, CSV/JSON emission and
// cross-seed summaries.

#include "ital/datagen.hpp"
#include "ital/gridworld.hpp"
#include "ital/pedagogy.hpp"

#include <json.hpp>

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace ital {

enum class TaskKind { Regression, Classification, External, GridDense, GridSparse };

std::string to_string(TaskKind kind);
TaskKind task_kind_from_string(const std::string& name);
bool is_grid_task(TaskKind kind);

enum class LearnerKind { Batch, Sgd, ImtNaive, Ital };

struct LearnerSpec {
    LearnerKind kind = LearnerKind::ImtNaive;
    std::size_t subset = 0;  ///< M for ITAL

    /// "batch", "sgd", "imt", "ital-<M>".
    std::string name() const;
    static LearnerSpec parse(const std::string& name);

    friend bool operator==(const LearnerSpec&, const LearnerSpec&) = default;
};

struct ExperimentConfig {
    TaskKind task = TaskKind::Regression;
    TeacherMode teacher = TeacherMode::FeedbackCooperative;
    std::vector<LearnerSpec> learners;
    double eta = 1e-3;
    std::optional<double> beta;        ///< unset: per-task default with the teacher's sign
    double beta_decay = 0;             ///< beta_t = beta (1 - decay)^t
    int batch_size = 20;
    int iterations = 2000;
    int seeds = 20;
    std::uint64_t first_seed = 0;
    std::string out;

    // Linear tasks.
    int dim = 0;                       ///< 0: 100 for regression, 30 for classification
    int classes = 10;
    int count = 1000;
    double variance = 0.5;
    double holdout = 0.2;
    double lambda = 0;                 ///< learner loss regularization
    bool feature_mismatch = true;      ///< teacher sees orthogonally rotated features
    double init_scale = 1.0;           ///< nu^0 entries ~ U[-s, s]

    // External feature files (line-aligned).
    std::string teacher_features;
    std::string learner_features;

    // Gridworld tasks.
    int grid_width = 8;
    int grid_height = 8;
    double discount = 0.5;
    SoftPlanner planner;

    unsigned threads = 0;              ///< 0: hardware concurrency

    /// Throws ConfigError on any invalid combination.
    void validate() const;
    int effective_dim() const;
    double effective_beta() const;
};

/// Default learner line-up: batch, sgd, imt, ital-1, ital-2, ital-4, ital-19
/// (ITAL sizes capped at batch_size - 1).
std::vector<LearnerSpec> default_learners(int batch_size);

/// Default |beta| per task; negated for an adversarial teacher.
double default_beta(TaskKind task, TeacherMode teacher);

void to_json(nlohmann::json& j, const ExperimentConfig& c);
void from_json(const nlohmann::json& j, ExperimentConfig& c);
ExperimentConfig load_config(const std::string& path);

struct MetricTrace {
    std::string learner;
    std::uint64_t seed = 0;
    std::map<std::string, std::vector<double>> metrics;  ///< iteration 0 .. iterations
};

struct SeedFailure {
    std::uint64_t seed = 0;
    std::string learner;
    std::string message;
};

struct RunResult {
    std::vector<MetricTrace> traces;  ///< ordered by seed, then learner
    std::vector<SeedFailure> failures;
    std::vector<double> seed_seconds;
    double total_seconds = 0;
};

RunResult run_experiment(const ExperimentConfig& config);

struct SeriesSummary {
    std::vector<double> mean;
    std::vector<double> stderr_;
    std::size_t n = 0;
};

struct PairedComparison {
    std::string learner_a;
    std::string learner_b;
    std::string metric;
    std::size_t n = 0;
    double mean_difference = 0;  ///< final a - final b
    double t_statistic = 0;
};

struct Summary {
    std::map<std::pair<std::string, std::string>, SeriesSummary> series;  ///< (learner, metric)
    std::vector<PairedComparison> comparisons;

    const SeriesSummary& at(const std::string& learner, const std::string& metric) const;
};

/// Mean and standard error (sample SD / sqrt(n)) per iteration, plus final-
/// iteration paired differences between every two learners over shared seeds.
/// Throws ShapeError if traces of one (learner, metric) differ in length.
Summary summarize(const std::vector<MetricTrace>& traces);

void write_summary(std::ostream& out, const Summary& summary);

/// Long-format CSV: learner,seed,iteration,metric,value (values at %.17g).
void write_traces_csv(std::ostream& out, const std::vector<MetricTrace>& traces);
std::vector<MetricTrace> read_traces_csv(std::istream& in);

nlohmann::json make_manifest(const ExperimentConfig& config, const RunResult& result, const std::string& csv_path);

/// Empty when the manifest has every documented field with the right type.
std::vector<std::string> validate_manifest(const nlohmann::json& manifest);

/// Writes <out> (CSV) and <out minus extension>.manifest.json.
void emit(const ExperimentConfig& config, const RunResult& result, const std::string& out);

std::string manifest_path_for(const std::string& csv_path);

struct BetaProbe {
    double beta = 0;
    double mean_max_probability = 0;
};

struct BetaTuning {
    std::vector<BetaProbe> probes;
    double chosen = 0;  ///< largest probed beta whose mean max q stays <= threshold
};

/// Runs the configured teacher against an IMT-naive learner for `rounds`
/// rounds on the first seed and, for each probed beta, averages the largest
/// entry of q over the full batch.
BetaTuning tune_beta(const ExperimentConfig& config, std::size_t rounds = 20, double threshold = 0.99);

/// Git revision baked in at configure time.
std::string build_revision();

} // namespace ital
