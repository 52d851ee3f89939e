#pragma once

// Interactive teaching sessions on the 5x5 human-study maps: a session core
// that is a thin wrapper over the gridworld learner updates, an append-only
// JSONL event log with replay, and the HTTP+JSON service around them.

#include "ital/gridworld.hpp"

#include <json.hpp>

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

namespace ital {

/// HTTP-facing error: carries the status code the service should answer with.
class SessionError : public std::runtime_error {
public:
    SessionError(int status, const std::string& what) : std::runtime_error(what), status_(status) {}
    int status() const noexcept { return status_; }

private:
    int status_;
};

enum class SessionLearnerKind { Naive, Aware };

std::string to_string(SessionLearnerKind kind);
SessionLearnerKind session_learner_from_string(const std::string& name);

struct SessionConfig {
    std::string map_id = "A";
    SessionLearnerKind learner = SessionLearnerKind::Aware;
    double beta = 30000;
    std::uint64_t seed = 0;
    double eta = 1e-3;
    int max_steps = 40;
    double init_scale = 0.5;   ///< nu^0 entries ~ U[-s, s]
    std::size_t candidates = 10;
    SoftPlanner planner;
    std::vector<std::string> custom_tiles;  ///< W/B/R rows when map_id is "custom"
};

nlohmann::json to_json(const SessionConfig& c);
/// Applies the fields present in `body`; throws SessionError(400) on bad
/// types or values, SessionError(404) for an unknown map.
SessionConfig session_config_from_json(const nlohmann::json& body, SessionConfig base = {});

struct Candidate {
    Demonstration demo;
};

struct SessionMetrics {
    std::size_t step = 0;
    double distance = 0;
    double policy_tv = 0;
    double expected_return = 0;
};

class TeachingSession {
public:
    /// `init` overrides the seeded nu^0 (used for paired sessions).
    TeachingSession(std::string id, SessionConfig config, std::optional<RewardParams> init = {});

    const std::string& id() const { return id_; }
    const SessionConfig& config() const { return config_; }
    const GridworldMDP& mdp() const { return mdp_; }
    const Vector& truth() const { return truth_; }
    const RewardParams& rewards() const { return state_.rewards; }
    const RewardParams& initial_rewards() const { return init_; }
    std::size_t step() const { return state_.step; }
    bool completed() const { return completed_; }
    const std::vector<Candidate>& candidates() const { return candidates_; }
    const std::vector<SessionMetrics>& metrics() const { return metrics_; }
    /// Ground-truth greedy action per grid (hard value iteration).
    const std::vector<Action>& truth_arrows() const { return truth_arrows_; }

    /// Applies the learner update for candidate `index`, logs, and draws new
    /// candidates. Throws SessionError 400 (bad index) or 409 (completed).
    void select(std::size_t index);
    void finish();

    nlohmann::json view_json() const;
    nlohmann::json candidates_json() const;
    nlohmann::json metrics_json() const;

private:
    void draw_candidates();
    void record_metrics();

    std::string id_;
    SessionConfig config_;
    std::vector<std::string> tiles_;
    GridworldMDP mdp_;
    Vector truth_;
    Matrix truth_policy_;
    std::vector<Action> truth_arrows_;
    RewardParams init_;
    IrlLearnerState state_;
    Rng candidate_rng_;
    std::vector<Candidate> candidates_;
    std::vector<SessionMetrics> metrics_;
    bool completed_ = false;
};

/// Machine stand-in for a cooperative human: the candidate with the largest
/// feedback teaching volume given the learner's displayed reward estimates.
std::size_t scripted_cooperative_choice(const GridworldMDP& mdp, const Vector& truth, const SoftPlanner& planner,
                                        double eta, const RewardParams& estimates,
                                        const std::vector<Candidate>& candidates);

/// W/B/R rows for a session config (one of A..E, or the custom tiles).
std::vector<std::string> session_tiles(const SessionConfig& config);

struct ScriptedTrajectory {
    std::vector<std::size_t> choices;
    std::vector<RewardParams> rewards;  ///< after each step, starting with nu^0
};

/// In-process driver: a fresh session stepped `steps` times by the scripted
/// cooperative teacher.
ScriptedTrajectory run_scripted_session(const SessionConfig& config, std::size_t steps);

/// One JSON object per line; see README for the record types.
nlohmann::json create_event(const TeachingSession& s);
nlohmann::json select_event(const TeachingSession& s, const std::vector<Candidate>& shown, std::size_t selection);
nlohmann::json finish_event(const TeachingSession& s);

struct ReplayResult {
    TeachingSession session;
    std::size_t events = 0;
};

/// Rebuilds a session from its log, checking every stored metric against the
/// recomputed one. Throws ParseError with the 1-based line number on a
/// malformed or inconsistent line.
ReplayResult replay_log(const std::string& path);
ReplayResult replay_stream(std::istream& in);

/// Thread-safe registry. Each session is guarded by its own mutex; the map
/// itself by a shared mutex.
class SessionStore {
public:
    explicit SessionStore(std::string log_dir = {});

    nlohmann::json create(const nlohmann::json& body);
    nlohmann::json candidates(const std::string& id);
    nlohmann::json select(const std::string& id, const nlohmann::json& body);
    nlohmann::json state(const std::string& id);
    nlohmann::json metrics(const std::string& id);
    nlohmann::json finish(const std::string& id);

private:
    struct Entry {
        std::mutex mutex;
        std::unique_ptr<TeachingSession> session;
        std::string log_path;
    };
    std::shared_ptr<Entry> find(const std::string& id) const;
    void append(Entry& e, const nlohmann::json& event);

    std::string log_dir_;
    mutable std::shared_mutex mutex_;
    std::map<std::string, std::shared_ptr<Entry>> sessions_;
    std::uint64_t next_id_ = 1;
};

struct ServerOptions {
    std::string host = "127.0.0.1";
    int port = 8080;
    std::string log_dir;
    std::string static_dir;
    std::string cors_origin = "*";
};

/// HTTP front end. start() binds (port 0 picks a free one) and serves on a
/// background thread; stop() shuts down and joins.
class SessionServer {
public:
    explicit SessionServer(ServerOptions options);
    ~SessionServer();

    int start();
    void stop();
    int port() const { return port_; }

    /// Binds and serves on the calling thread until stopped.
    void run();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
    int port_ = 0;
};

/// Blocking entry point for `ital serve`.
int serve(const ServerOptions& options);

} // namespace ital
