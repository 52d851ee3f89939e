#include "ital/errors.hpp"
#include "ital/harness.hpp"
#include "ital/session.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

namespace {

constexpr int kConfigExit = 2;
constexpr int kNumericExit = 3;

struct RunOptions {
    std::string config;
    std::string task, teacher, learners, out;
    double eta = 0, beta = 0;
    int batch_size = 0, iters = 0, seeds = 0;
    unsigned threads = 0;
};

ital::ExperimentConfig build_config(const RunOptions& o, const CLI::App& cmd) {
    ital::ExperimentConfig c;
    if (!o.config.empty()) c = ital::load_config(o.config);
    if (cmd.count("--task")) c.task = ital::task_kind_from_string(o.task);
    if (cmd.count("--teacher")) c.teacher = ital::teacher_mode_from_string(o.teacher);
    if (cmd.count("--eta")) c.eta = o.eta;
    if (cmd.count("--beta")) c.beta = o.beta;
    if (cmd.count("--batch-size")) c.batch_size = o.batch_size;
    if (cmd.count("--iters")) c.iterations = o.iters;
    if (cmd.count("--seeds")) c.seeds = o.seeds;
    if (cmd.count("--threads")) c.threads = o.threads;
    if (cmd.count("--out")) c.out = o.out;
    if (cmd.count("--learner")) {
        c.learners.clear();
        std::stringstream ss(o.learners);
        std::string name;
        while (std::getline(ss, name, ','))
            if (!name.empty()) c.learners.push_back(ital::LearnerSpec::parse(name));
    }
    if (c.learners.empty()) c.learners = ital::default_learners(c.batch_size);
    if (c.out.empty()) c.out = ital::to_string(c.task) + "-" + ital::to_string(c.teacher) + ".csv";
    c.validate();
    return c;
}

void print_finals(const ital::Summary& s, std::ostream& out) {
    std::printf("%-10s %-16s %14s %12s %4s\n", "learner", "metric", "final mean", "stderr", "n");
    for (const auto& [key, series] : s.series)
        std::printf("%-10s %-16s %14.6g %12.4g %4zu\n", key.first.c_str(), key.second.c_str(), series.mean.back(),
                    series.stderr_.back(), series.n);
    out.flush();
}

int cmd_run(const RunOptions& o, const CLI::App& cmd) {
    const ital::ExperimentConfig c = build_config(o, cmd);
    const ital::RunResult r = ital::run_experiment(c);
    const auto parent = std::filesystem::path(c.out).parent_path();
    if (!parent.empty()) std::filesystem::create_directories(parent);
    ital::emit(c, r, c.out);
    for (const auto& f : r.failures)
        std::cerr << "seed " << f.seed << (f.learner.empty() ? "" : " learner " + f.learner) << ": " << f.message << '\n';
    if (!r.traces.empty()) print_finals(ital::summarize(r.traces), std::cout);
    std::cout << "wrote " << c.out << " and " << ital::manifest_path_for(c.out) << " (" << r.total_seconds << " s)\n";
    return r.failures.empty() ? 0 : kNumericExit;
}

int cmd_summarize(const std::string& csv, const std::string& out) {
    std::ifstream in(csv);
    if (!in) throw ital::ConfigError("cannot open " + csv);
    const ital::Summary s = ital::summarize(ital::read_traces_csv(in));
    print_finals(s, std::cout);
    std::printf("\n%-10s %-10s %-16s %4s %14s %10s\n", "a", "b", "metric", "n", "mean(a-b)", "t");
    for (const auto& c : s.comparisons)
        std::printf("%-10s %-10s %-16s %4zu %14.6g %10.3f\n", c.learner_a.c_str(), c.learner_b.c_str(),
                    c.metric.c_str(), c.n, c.mean_difference, c.t_statistic);
    if (!out.empty()) {
        std::ofstream f(out);
        if (!f) throw ital::ConfigError("cannot write " + out);
        ital::write_summary(f, s);
    }
    return 0;
}

int cmd_maps(const std::string& dir, const std::string& kind, int count, std::uint64_t seed, int width, int height) {
    std::filesystem::create_directories(dir);
    const ital::MapKind k = ital::map_kind_from_string(kind);
    if (k == ital::MapKind::HumanTile) {
        for (char id : ital::kHumanMapIds) {
            const std::string base = dir + "/human-" + std::string(1, id);
            std::ofstream tiles(base + ".tiles");
            ital::write_tile_map(tiles, ital::human_tile_layout(id));
            std::ofstream rewards(base + ".txt");
            ital::write_reward_map(rewards, {5, 5, ital::tiles_to_rewards(ital::human_tile_layout(id))});
            std::cout << base << ".tiles\n";
        }
        return 0;
    }
    for (int i = 0; i < count; ++i) {
        ital::Rng rng = ital::make_stream(seed + static_cast<std::uint64_t>(i), ital::Stream::Map);
        const ital::Vector cells = ital::make_map(k, width, height, rng);
        const std::string path = dir + "/" + kind + "-" + std::to_string(seed + static_cast<std::uint64_t>(i)) + ".txt";
        std::ofstream f(path);
        ital::write_reward_map(f, {width, height, cells});
        std::cout << path << '\n';
    }
    return 0;
}

int cmd_tune(const RunOptions& o, const CLI::App& cmd, std::size_t rounds, double threshold) {
    const ital::ExperimentConfig c = build_config(o, cmd);
    const ital::BetaTuning t = ital::tune_beta(c, rounds, threshold);
    std::printf("%14s %14s\n", "beta", "mean max q");
    for (const auto& p : t.probes) std::printf("%14.6g %14.6f\n", p.beta, p.mean_max_probability);
    std::printf("chosen beta: %g (threshold %.2f)\n", t.chosen, threshold);
    return 0;
}

int cmd_replay(const std::string& log) {
    const ital::ReplayResult r = ital::replay_log(log);
    const auto view = r.session.metrics_json();
    std::cout << nlohmann::json{{"session_id", r.session.id()},
                                {"events", r.events},
                                {"step", r.session.step()},
                                {"final", view.back()}}
                     .dump(2)
              << '\n';
    return 0;
}

void add_run_options(CLI::App* cmd, RunOptions& o) {
    cmd->add_option("--config", o.config, "JSON experiment config");
    cmd->add_option("--task", o.task, "regression | classification | external | grid-dense | grid-sparse");
    cmd->add_option("--teacher", o.teacher, "omniscient | cooperative | adversarial | random");
    cmd->add_option("--learner", o.learners, "comma-separated: batch,sgd,imt,ital-<M>");
    cmd->add_option("--eta", o.eta, "learning rate");
    cmd->add_option("--beta", o.beta, "teacher-model sharpness");
    cmd->add_option("--batch-size", o.batch_size, "candidates per round");
    cmd->add_option("--iters", o.iters, "iterations per run");
    cmd->add_option("--seeds", o.seeds, "number of seeds");
    cmd->add_option("--threads", o.threads, "worker threads (0 = all cores)");
    cmd->add_option("--out", o.out, "CSV output path");
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Iterative teacher-aware learning laboratory"};
    app.require_subcommand(1);

    RunOptions run_opts;
    auto* run = app.add_subcommand("run", "run an experiment sweep");
    add_run_options(run, run_opts);

    std::string csv, summary_out;
    auto* summarize = app.add_subcommand("summarize", "per-iteration mean/stderr and paired comparisons");
    summarize->add_option("csv", csv, "trace CSV from `ital run`")->required();
    summarize->add_option("--out", summary_out, "write the full summary table here");

    auto* maps = app.add_subcommand("maps", "reward maps");
    auto* generate = maps->add_subcommand("generate", "write reward maps to a directory");
    maps->require_subcommand(1);
    std::string map_dir = "maps", map_kind = "dense";
    int map_count = 5, map_w = 8, map_h = 8;
    std::uint64_t map_seed = 0;
    generate->add_option("--out-dir", map_dir, "output directory");
    generate->add_option("--kind", map_kind, "dense | sparse | human");
    generate->add_option("--count", map_count, "number of random maps");
    generate->add_option("--seed", map_seed, "first seed");
    generate->add_option("--width", map_w, "grid width");
    generate->add_option("--height", map_h, "grid height");

    RunOptions tune_opts;
    std::size_t tune_rounds = 20;
    double tune_threshold = 0.99;
    auto* tune = app.add_subcommand("tune-beta", "largest beta whose selection distribution is not a delta");
    add_run_options(tune, tune_opts);
    tune->add_option("--rounds", tune_rounds, "rounds averaged");
    tune->add_option("--threshold", tune_threshold, "maximum allowed mean max-probability");

    std::string log_path;
    auto* replay = app.add_subcommand("replay", "rebuild a session from its event log");
    replay->add_option("log", log_path, "JSONL session log")->required();

    ital::ServerOptions serve_opts;
    auto* serve = app.add_subcommand("serve", "HTTP session service");
    serve->add_option("--port", serve_opts.port, "listen port");
    serve->add_option("--host", serve_opts.host, "listen address");
    serve->add_option("--log-dir", serve_opts.log_dir, "per-session JSONL logs");
    serve->add_option("--static-dir", serve_opts.static_dir, "serve UI assets from here");
    serve->add_option("--cors-origin", serve_opts.cors_origin, "Access-Control-Allow-Origin value");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kConfigExit;
    }

    try {
        if (*run) return cmd_run(run_opts, *run);
        if (*summarize) return cmd_summarize(csv, summary_out);
        if (*generate) return cmd_maps(map_dir, map_kind, map_count, map_seed, map_w, map_h);
        if (*tune) return cmd_tune(tune_opts, *tune, tune_rounds, tune_threshold);
        if (*replay) return cmd_replay(log_path);
        if (*serve) return ital::serve(serve_opts);
    } catch (const ital::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kConfigExit;
    } catch (const ital::ParseError& e) {
        std::cerr << "parse error: " << e.what() << '\n';
        return kConfigExit;
    } catch (const ital::NumericError& e) {
        std::cerr << "numeric error: " << e.what() << '\n';
        return kNumericExit;
    } catch (const ital::ConvergenceError& e) {
        std::cerr << "numeric error: " << e.what() << '\n';
        return kNumericExit;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
