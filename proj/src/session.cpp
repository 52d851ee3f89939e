#include "ital/session.hpp"

#include "ital/errors.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>

namespace ital {

using nlohmann::json;

std::string to_string(SessionLearnerKind kind) { return kind == SessionLearnerKind::Naive ? "naive" : "aware"; }

SessionLearnerKind session_learner_from_string(const std::string& name) {
    if (name == "naive") return SessionLearnerKind::Naive;
    if (name == "aware" || name == "teacher-aware") return SessionLearnerKind::Aware;
    throw SessionError(400, "learner_kind must be 'naive' or 'aware'");
}

json to_json(const SessionConfig& c) {
    json j{{"map_id", c.map_id},
           {"learner_kind", to_string(c.learner)},
           {"beta", c.beta},
           {"seed", c.seed},
           {"eta", c.eta},
           {"max_steps", c.max_steps},
           {"init_scale", c.init_scale},
           {"candidates", c.candidates},
           {"planner",
            {{"sharpness", c.planner.sharpness},
             {"rationality", c.planner.rationality},
             {"tolerance", c.planner.tolerance},
             {"max_sweeps", c.planner.max_sweeps}}}};
    if (!c.custom_tiles.empty()) j["tiles"] = c.custom_tiles;
    return j;
}

std::vector<std::string> session_tiles(const SessionConfig& c) {
    if (c.map_id == "custom") {
        if (c.custom_tiles.empty()) throw SessionError(400, "custom map needs 'tiles'");
        try {
            tiles_to_rewards(c.custom_tiles);
        } catch (const ParseError& e) {
            throw SessionError(400, std::string("bad custom tiles: ") + e.what());
        }
        return c.custom_tiles;
    }
    if (c.map_id.size() != 1 || c.map_id[0] < 'A' || c.map_id[0] > 'E')
        throw SessionError(404, "unknown map '" + c.map_id + "'");
    return human_tile_layout(c.map_id[0]);
}

namespace {

template <typename T>
void take(const json& body, const char* key, T& out) {
    if (!body.contains(key) || body.at(key).is_null()) return;
    try {
        out = body.at(key).get<T>();
    } catch (const json::exception&) {
        throw SessionError(400, std::string("field '") + key + "' has the wrong type");
    }
}

} // namespace

SessionConfig session_config_from_json(const json& body, SessionConfig c) {
    if (!body.is_object()) throw SessionError(400, "request body must be a JSON object");
    take(body, "map_id", c.map_id);
    if (body.contains("learner_kind")) {
        std::string kind;
        take(body, "learner_kind", kind);
        c.learner = session_learner_from_string(kind);
    }
    take(body, "beta", c.beta);
    take(body, "seed", c.seed);
    take(body, "eta", c.eta);
    take(body, "max_steps", c.max_steps);
    take(body, "init_scale", c.init_scale);
    take(body, "candidates", c.candidates);
    take(body, "tiles", c.custom_tiles);
    if (body.contains("planner")) {
        const json& p = body.at("planner");
        if (!p.is_object()) throw SessionError(400, "field 'planner' must be an object");
        take(p, "sharpness", c.planner.sharpness);
        take(p, "rationality", c.planner.rationality);
        take(p, "tolerance", c.planner.tolerance);
        take(p, "max_sweeps", c.planner.max_sweeps);
    }
    if (!std::isfinite(c.beta)) throw SessionError(400, "beta must be finite");
    if (!(c.eta > 0) || !std::isfinite(c.eta)) throw SessionError(400, "eta must be positive");
    if (c.max_steps < 1) throw SessionError(400, "max_steps must be at least 1");
    if (!(c.init_scale >= 0)) throw SessionError(400, "init_scale must be nonnegative");
    if (c.candidates < 1) throw SessionError(400, "candidates must be at least 1");
    try {
        c.planner.validate();
    } catch (const ConfigError& e) {
        throw SessionError(400, e.what());
    }
    session_tiles(c);
    return c;
}

// ---------------------------------------------------------------------------
// TeachingSession

TeachingSession::TeachingSession(std::string id, SessionConfig config, std::optional<RewardParams> init)
    : id_(std::move(id)), config_(std::move(config)), tiles_(session_tiles(config_)),
      mdp_(static_cast<int>(tiles_.front().size()), static_cast<int>(tiles_.size())),
      truth_(tiles_to_rewards(tiles_)), candidate_rng_(make_stream(config_.seed, Stream::Candidates)) {
    truth_policy_ = IrlModel(mdp_, truth_, config_.planner, false).policy();
    truth_arrows_ = greedy_actions(hard_value_iteration(mdp_.tabular(), truth_).q);
    if (init) {
        if (init->size() != mdp_.num_states()) throw SessionError(400, "initial rewards do not match the map");
        init_ = *init;
    } else {
        Rng rng = make_stream(config_.seed, Stream::Init);
        init_ = RewardParams(mdp_.num_states());
        for (Eigen::Index i = 0; i < init_.size(); ++i)
            init_(i) = config_.init_scale > 0 ? uniform(rng, -config_.init_scale, config_.init_scale) : 0.0;
    }
    state_.rewards = init_;
    state_.eta = Schedule::constant(config_.eta);
    state_.beta = Schedule::constant(config_.beta);
    state_.subset_size = config_.candidates - 1;
    record_metrics();
    draw_candidates();
}

void TeachingSession::draw_candidates() {
    const auto n = static_cast<std::size_t>(mdp_.num_states());
    const std::size_t count = std::min(config_.candidates, n);
    std::vector<int> cells(n);
    std::iota(cells.begin(), cells.end(), 0);
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t j = std::uniform_int_distribution<std::size_t>(i, n - 1)(candidate_rng_);
        std::swap(cells[i], cells[j]);
    }
    candidates_.clear();
    for (std::size_t i = 0; i < count; ++i)
        candidates_.push_back({{cells[i], truth_arrows_[static_cast<std::size_t>(cells[i])]}});
}

void TeachingSession::record_metrics() {
    const IrlModel model(mdp_, state_.rewards, config_.planner, false);
    metrics_.push_back({state_.step, (state_.rewards - truth_).norm(),
                        policy_total_variation(model.policy(), truth_policy_),
                        expected_return(mdp_.tabular(), truth_, model.policy())});
}

void TeachingSession::select(std::size_t index) {
    if (completed_) throw SessionError(409, "session " + id_ + " is completed");
    if (index >= candidates_.size())
        throw SessionError(400, "candidate_index must lie in [0, " + std::to_string(candidates_.size()) + ")");
    std::vector<Demonstration> batch;
    for (const auto& c : candidates_) batch.push_back(c.demo);
    if (config_.learner == SessionLearnerKind::Naive) {
        state_ = irl_naive_update(mdp_, config_.planner, state_, batch[index]);
    } else {
        std::vector<std::size_t> others;
        for (std::size_t i = 0; i < batch.size(); ++i)
            if (i != index) others.push_back(i);
        state_ = irl_ital_update(mdp_, config_.planner, state_, batch, index, others).first;
    }
    if (!state_.rewards.allFinite()) throw NumericError("learner rewards are not finite");
    record_metrics();
    if (state_.step >= static_cast<std::size_t>(config_.max_steps)) {
        completed_ = true;
        candidates_.clear();
    } else {
        draw_candidates();
    }
}

void TeachingSession::finish() {
    completed_ = true;
    candidates_.clear();
}

namespace {

json metrics_record(const SessionMetrics& m) {
    return {{"step", m.step}, {"distance", m.distance}, {"policy_tv", m.policy_tv}, {"expected_return", m.expected_return}};
}

json candidates_array(const GridworldMDP& mdp, const std::vector<Candidate>& cs) {
    json out = json::array();
    for (std::size_t i = 0; i < cs.size(); ++i) {
        const auto& d = cs[i].demo;
        out.push_back({{"index", i},
                       {"state", d.state},
                       {"row", mdp.row(d.state)},
                       {"col", mdp.col(d.state)},
                       {"action", to_string(d.action)}});
    }
    return out;
}

std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

} // namespace

json TeachingSession::candidates_json() const {
    if (completed_) throw SessionError(409, "session " + id_ + " is completed");
    return {{"session_id", id_}, {"step", state_.step}, {"candidates", candidates_array(mdp_, candidates_)}};
}

json TeachingSession::metrics_json() const {
    json out = json::array();
    for (const auto& m : metrics_) out.push_back(metrics_record(m));
    return out;
}

json TeachingSession::view_json() const {
    const IrlModel model(mdp_, state_.rewards, config_.planner, false);
    json arrows = json::array();
    for (Action a : greedy_actions(model.plan().q)) arrows.push_back(to_string(a));
    json truth_arrows = json::array();
    for (Action a : truth_arrows_) truth_arrows.push_back(to_string(a));
    const Vector clipped = state_.rewards.cwiseMax(-2.0).cwiseMin(2.0);
    return {{"session_id", id_},
            {"map_id", config_.map_id},
            {"learner_kind", to_string(config_.learner)},
            {"beta", config_.beta},
            {"eta", config_.eta},
            {"step", state_.step},
            {"max_steps", config_.max_steps},
            {"completed", completed_},
            {"width", mdp_.width()},
            {"height", mdp_.height()},
            {"ground_truth", tiles_},
            {"estimates", to_std(state_.rewards)},
            {"display_estimates", to_std(clipped)},
            {"policy_arrows", arrows},
            {"truth_arrows", truth_arrows},
            {"candidates", candidates_array(mdp_, candidates_)},
            {"metrics", metrics_record(metrics_.back())}};
}

// ---------------------------------------------------------------------------
// Scripted teacher

std::size_t scripted_cooperative_choice(const GridworldMDP& mdp, const Vector& truth, const SoftPlanner& planner,
                                        double eta, const RewardParams& estimates,
                                        const std::vector<Candidate>& candidates) {
    if (candidates.empty()) throw SessionError(409, "no candidates to choose from");
    const IrlTeacher teacher(mdp, mdp.params_from_cells(truth), planner);
    std::vector<Demonstration> demos;
    for (const auto& c : candidates) demos.push_back(c.demo);
    Rng unused(0);
    return select_example(teacher.feedback_volumes(estimates, demos, eta), TeacherMode::FeedbackCooperative, unused);
}

ScriptedTrajectory run_scripted_session(const SessionConfig& config, std::size_t steps) {
    SessionConfig c = config;
    c.max_steps = std::max<int>(c.max_steps, static_cast<int>(steps));
    TeachingSession s("scripted", c);
    ScriptedTrajectory out;
    out.rewards.push_back(s.rewards());
    for (std::size_t t = 0; t < steps; ++t) {
        const std::size_t k =
            scripted_cooperative_choice(s.mdp(), s.truth(), c.planner, c.eta, s.rewards(), s.candidates());
        s.select(k);
        out.choices.push_back(k);
        out.rewards.push_back(s.rewards());
    }
    return out;
}

// ---------------------------------------------------------------------------
// Event log

namespace {

double now_seconds() {
    return std::chrono::duration<double>(std::chrono::system_clock::now().time_since_epoch()).count();
}

} // namespace

json create_event(const TeachingSession& s) {
    return {{"type", "create"},
            {"timestamp", now_seconds()},
            {"session_id", s.id()},
            {"step", s.step()},
            {"config", to_json(s.config())},
            {"init", to_std(s.initial_rewards())},
            {"candidates", candidates_array(s.mdp(), s.candidates())},
            {"metrics", metrics_record(s.metrics().back())}};
}

json select_event(const TeachingSession& s, const std::vector<Candidate>& shown, std::size_t selection) {
    return {{"type", "select"},
            {"timestamp", now_seconds()},
            {"session_id", s.id()},
            {"step", s.step()},
            {"candidates", candidates_array(s.mdp(), shown)},
            {"selection", selection},
            {"metrics", metrics_record(s.metrics().back())}};
}

json finish_event(const TeachingSession& s) {
    return {{"type", "finish"},
            {"timestamp", now_seconds()},
            {"session_id", s.id()},
            {"step", s.step()},
            {"metrics", metrics_record(s.metrics().back())}};
}

namespace {

void check_metrics(const json& stored, const SessionMetrics& m, std::size_t line) {
    try {
        if (stored.at("step").get<std::size_t>() != m.step || stored.at("distance").get<double>() != m.distance ||
            stored.at("policy_tv").get<double>() != m.policy_tv ||
            stored.at("expected_return").get<double>() != m.expected_return)
            throw ParseError("stored metrics disagree with the replayed session", line);
    } catch (const json::exception&) {
        throw ParseError("malformed metrics record", line);
    }
}

void check_candidates(const json& stored, const TeachingSession& s, std::size_t line) {
    const json expect = candidates_array(s.mdp(), s.candidates());
    if (stored != expect) throw ParseError("logged candidates disagree with the replayed session", line);
}

} // namespace

ReplayResult replay_stream(std::istream& in) {
    std::string text;
    std::size_t line = 0;
    std::optional<TeachingSession> session;
    std::size_t events = 0;
    while (std::getline(in, text)) {
        ++line;
        if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
        json ev;
        try {
            ev = json::parse(text);
        } catch (const json::parse_error& e) {
            throw ParseError(std::string("not valid JSON: ") + e.what(), line);
        }
        try {
            const std::string type = ev.at("type").get<std::string>();
            if (!session) {
                if (type != "create") throw ParseError("log must start with a create event", line);
                const SessionConfig c = session_config_from_json(ev.at("config"));
                const auto init = ev.at("init").get<std::vector<double>>();
                session.emplace(ev.at("session_id").get<std::string>(), c,
                                RewardParams(Eigen::Map<const Vector>(init.data(), static_cast<Eigen::Index>(init.size()))));
                check_candidates(ev.at("candidates"), *session, line);
                check_metrics(ev.at("metrics"), session->metrics().back(), line);
            } else if (type == "select") {
                check_candidates(ev.at("candidates"), *session, line);
                session->select(ev.at("selection").get<std::size_t>());
                if (ev.at("step").get<std::size_t>() != session->step()) throw ParseError("step out of sequence", line);
                check_metrics(ev.at("metrics"), session->metrics().back(), line);
            } else if (type == "finish") {
                session->finish();
            } else {
                throw ParseError("unknown event type '" + type + "'", line);
            }
        } catch (const json::exception& e) {
            throw ParseError(std::string("malformed event: ") + e.what(), line);
        } catch (const SessionError& e) {
            throw ParseError(e.what(), line);
        }
        ++events;
    }
    if (!session) throw ParseError("log holds no create event", line);
    return {std::move(*session), events};
}

ReplayResult replay_log(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open session log " + path);
    return replay_stream(in);
}

// ---------------------------------------------------------------------------
// Store

SessionStore::SessionStore(std::string log_dir) : log_dir_(std::move(log_dir)) {}

std::shared_ptr<SessionStore::Entry> SessionStore::find(const std::string& id) const {
    std::shared_lock lock(mutex_);
    const auto it = sessions_.find(id);
    if (it == sessions_.end()) throw SessionError(404, "unknown session '" + id + "'");
    return it->second;
}

void SessionStore::append(Entry& e, const json& event) {
    if (e.log_path.empty()) return;
    std::ofstream out(e.log_path, std::ios::app);
    out << event.dump() << '\n';
    if (!out) throw std::runtime_error("cannot append to " + e.log_path);
}

json SessionStore::create(const json& body) {
    if (!body.is_object()) throw SessionError(400, "request body must be a JSON object");
    std::optional<RewardParams> init;
    SessionConfig base;
    if (body.contains("pair_with") && !body.at("pair_with").is_null()) {
        if (!body.at("pair_with").is_string()) throw SessionError(400, "pair_with must be a session id");
        const auto partner = find(body.at("pair_with").get<std::string>());
        std::lock_guard lock(partner->mutex);
        init = partner->session->initial_rewards();
        base.seed = partner->session->config().seed;
        base.map_id = partner->session->config().map_id;
        base.custom_tiles = partner->session->config().custom_tiles;
    }
    const SessionConfig config = session_config_from_json(body, base);
    if (init && session_tiles(config) != session_tiles(base))
        throw SessionError(400, "paired sessions must use the same map");

    auto entry = std::make_shared<Entry>();
    std::string id;
    {
        std::unique_lock lock(mutex_);
        id = "s" + std::to_string(next_id_++);
    }
    entry->session = std::make_unique<TeachingSession>(id, config, init);
    if (!log_dir_.empty()) entry->log_path = log_dir_ + "/" + id + ".jsonl";
    append(*entry, create_event(*entry->session));
    json view = entry->session->view_json();
    {
        std::unique_lock lock(mutex_);
        sessions_.emplace(id, entry);
    }
    return view;
}

json SessionStore::candidates(const std::string& id) {
    const auto e = find(id);
    std::lock_guard lock(e->mutex);
    return e->session->candidates_json();
}

json SessionStore::select(const std::string& id, const json& body) {
    const auto e = find(id);
    if (!body.is_object() || !body.contains("candidate_index") || !body.at("candidate_index").is_number_integer())
        throw SessionError(400, "body must be {\"candidate_index\": <integer>}");
    const auto raw = body.at("candidate_index").get<long long>();
    std::lock_guard lock(e->mutex);
    if (e->session->completed()) throw SessionError(409, "session " + id + " is completed");
    if (raw < 0) throw SessionError(400, "candidate_index must be nonnegative");
    const auto shown = e->session->candidates();
    e->session->select(static_cast<std::size_t>(raw));
    append(*e, select_event(*e->session, shown, static_cast<std::size_t>(raw)));
    return e->session->view_json();
}

json SessionStore::state(const std::string& id) {
    const auto e = find(id);
    std::lock_guard lock(e->mutex);
    return e->session->view_json();
}

json SessionStore::metrics(const std::string& id) {
    const auto e = find(id);
    std::lock_guard lock(e->mutex);
    return {{"session_id", id}, {"metrics", e->session->metrics_json()}};
}

json SessionStore::finish(const std::string& id) {
    const auto e = find(id);
    std::lock_guard lock(e->mutex);
    if (!e->session->completed()) {
        e->session->finish();
        append(*e, finish_event(*e->session));
    }
    return e->session->view_json();
}

} // namespace ital
