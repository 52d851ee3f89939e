#include "ital/errors.hpp"
#include "ital/session.hpp"

#include <doctest.h>
#include <httplib.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

using namespace ital;
using nlohmann::json;

namespace {

SessionConfig cfg(SessionLearnerKind kind = SessionLearnerKind::Aware, std::uint64_t seed = 7) {
    SessionConfig c;
    c.learner = kind;
    c.seed = seed;
    return c;
}

std::string temp_dir(const std::string& name) {
    const auto p = std::filesystem::temp_directory_path() / ("ital-test-" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p.string();
}

} // namespace

TEST_SUITE("session") {

TEST_CASE("config parsing") {
    const SessionConfig c = session_config_from_json({{"map_id", "C"}, {"learner_kind", "naive"}, {"beta", 5}});
    CHECK(c.map_id == "C");
    CHECK(c.learner == SessionLearnerKind::Naive);
    CHECK(c.beta == 5);
    CHECK(session_config_from_json(json(to_json(c))).beta == 5);
    auto status = [](const json& body) {
        try {
            session_config_from_json(body);
        } catch (const SessionError& e) {
            return e.status();
        }
        return 200;
    };
    CHECK(status({{"map_id", "Z"}}) == 404);
    CHECK(status({{"map_id", 3}}) == 400);
    CHECK(status({{"learner_kind", "greedy"}}) == 400);
    CHECK(status({{"max_steps", 0}}) == 400);
    CHECK(status(json::array()) == 400);
    CHECK(status({{"map_id", "custom"}}) == 400);
    CHECK(status({{"map_id", "custom"}, {"tiles", {"WB", "RX"}}}) == 400);
    CHECK(status({{"map_id", "custom"}, {"tiles", {"WB", "RW"}}}) == 200);
}

TEST_CASE("same seed gives the same start, fresh metrics have length 1") {
    const TeachingSession a("a", cfg()), b("b", cfg());
    CHECK(a.initial_rewards() == b.initial_rewards());
    CHECK(a.initial_rewards().cwiseAbs().maxCoeff() <= 0.5);
    CHECK(a.metrics().size() == 1);
    CHECK(a.metrics_json().size() == 1);
    CHECK(a.metrics().front().distance == doctest::Approx((a.rewards() - a.truth()).norm()));
}

TEST_CASE("candidates are ten distinct grids with ground-truth greedy arrows") {
    TeachingSession s("s", cfg());
    const auto hard = hard_value_iteration(s.mdp().tabular(), s.truth());
    const auto greedy = greedy_actions(hard.q);
    for (int round = 0; round < 5; ++round) {
        REQUIRE(s.candidates().size() == 10);
        std::set<int> cells;
        for (const auto& c : s.candidates()) {
            cells.insert(c.demo.state);
            CHECK(c.demo.action == greedy[static_cast<std::size_t>(c.demo.state)]);
        }
        CHECK(cells.size() == 10);
        const json first = s.candidates_json();
        CHECK(s.candidates_json() == first);
        s.select(0);
    }
}

TEST_CASE("beta zero aware learner equals naive learner") {
    SessionConfig aware = cfg(SessionLearnerKind::Aware);
    aware.beta = 0;
    TeachingSession a("a", aware), n("n", cfg(SessionLearnerKind::Naive));
    for (std::size_t k : {3u, 1u, 9u, 0u, 4u, 4u}) {
        a.select(k);
        n.select(k);
        CHECK(a.candidates().size() == n.candidates().size());
    }
    CHECK((a.rewards() - n.rewards()).cwiseAbs().maxCoeff() <= 1e-15);
}

TEST_CASE("aware and naive differ under a positive beta") {
    TeachingSession a("a", cfg(SessionLearnerKind::Aware)), n("n", cfg(SessionLearnerKind::Naive));
    a.select(2);
    n.select(2);
    CHECK((a.rewards() - n.rewards()).norm() > 1e-9);
}

TEST_CASE("selecting an arrow raises its target relative to its source") {
    for (int k = 0; k < 10; ++k) {
        TeachingSession s("s", cfg(SessionLearnerKind::Naive, 11));
        const Demonstration d = s.candidates()[static_cast<std::size_t>(k)].demo;
        const int target = s.mdp().target(d.state, d.action);
        if (target == d.state) continue;
        const double before = s.rewards()(target) - s.rewards()(d.state);
        s.select(static_cast<std::size_t>(k));
        CHECK(s.rewards()(target) - s.rewards()(d.state) > before);
    }
}

TEST_CASE("step cap, finish and errors") {
    SessionConfig c = cfg();
    c.max_steps = 2;
    TeachingSession s("s", c);
    CHECK_THROWS_AS(s.select(10), SessionError);
    s.select(1);
    CHECK_FALSE(s.completed());
    s.select(1);
    CHECK(s.completed());
    try {
        s.select(0);
        FAIL("expected 409");
    } catch (const SessionError& e) {
        CHECK(e.status() == 409);
    }
    CHECK(s.metrics().size() == 3);
    for (std::size_t i = 0; i < s.metrics().size(); ++i) CHECK(s.metrics()[i].step == i);
}

TEST_CASE("view exposes what the teacher sees") {
    TeachingSession s("s", cfg());
    const json v = s.view_json();
    CHECK(v["estimates"].size() == 25);
    CHECK(v["policy_arrows"].size() == 25);
    CHECK(v["ground_truth"] == json(human_tile_layout('A')));
    CHECK(v["candidates"].size() == 10);
    for (double e : v["display_estimates"]) CHECK(std::abs(e) <= 2.0);
}

TEST_CASE("store: pairing copies the start and logs replay exactly") {
    const std::string dir = temp_dir("store");
    SessionStore store(dir);
    const json a = store.create({{"learner_kind", "aware"}, {"seed", 3}, {"map_id", "B"}});
    const std::string id = a["session_id"];
    CHECK(id == "s1");
    const json b = store.create({{"learner_kind", "naive"}, {"pair_with", id}});
    CHECK(b["estimates"] == a["estimates"]);
    CHECK(b["map_id"] == "B");
    for (int k : {0, 5, 9, 2}) store.select(id, {{"candidate_index", k}});
    store.finish(id);

    const ReplayResult r = replay_log(dir + "/" + id + ".jsonl");
    CHECK(r.events == 6);
    CHECK(r.session.completed());
    CHECK(r.session.metrics_json() == store.metrics(id)["metrics"]);
    CHECK(json(std::vector<double>(r.session.rewards().data(), r.session.rewards().data() + 25)) ==
          store.state(id)["estimates"]);

    std::ifstream in(dir + "/" + id + ".jsonl");
    std::vector<std::string> lines;
    for (std::string l; std::getline(in, l);) lines.push_back(l);

    SUBCASE("truncated log replays to the truncation point") {
        std::istringstream cut(lines[0] + "\n" + lines[1] + "\n" + lines[2] + "\n");
        const ReplayResult t = replay_stream(cut);
        CHECK(t.session.step() == 2);
        const json full = store.metrics(id)["metrics"];
        CHECK(t.session.metrics_json() == json{full[0], full[1], full[2]});
    }
    SUBCASE("corrupt line reports its number") {
        std::istringstream bad(lines[0] + "\n" + lines[1] + "\n{\"type\": \"select\", oops\n");
        try {
            replay_stream(bad);
            FAIL("expected a parse error");
        } catch (const ParseError& e) {
            CHECK(e.line() == 3);
        }
    }
    SUBCASE("tampered metrics are caught") {
        json ev = json::parse(lines[2]);
        ev["metrics"]["distance"] = ev["metrics"]["distance"].get<double>() + 1e-12;
        std::istringstream bad(lines[0] + "\n" + lines[1] + "\n" + ev.dump() + "\n");
        CHECK_THROWS_AS(replay_stream(bad), ParseError);
    }
    CHECK(std::filesystem::file_size(dir + "/" + id + ".jsonl") < 1 << 20);
}

TEST_CASE("store errors map to status codes") {
    SessionStore store;
    auto status = [&](auto&& f) {
        try {
            f();
        } catch (const SessionError& e) {
            return e.status();
        }
        return 200;
    };
    CHECK(status([&] { store.state("nope"); }) == 404);
    CHECK(status([&] { store.create({{"map_id", "Q"}}); }) == 404);
    CHECK(status([&] { store.create({{"pair_with", "s9"}}); }) == 404);
    const std::string id = store.create({{"max_steps", 1}})["session_id"];
    CHECK(status([&] { store.select(id, {{"candidate_index", -1}}); }) == 400);
    CHECK(status([&] { store.select(id, {{"candidate_index", 10}}); }) == 400);
    CHECK(status([&] { store.select(id, {{"index", 0}}); }) == 400);
    CHECK(status([&] { store.select(id, {{"candidate_index", 0}}); }) == 200);
    CHECK(status([&] { store.select(id, {{"candidate_index", 0}}); }) == 409);
    CHECK(status([&] { store.candidates(id); }) == 409);
}

TEST_CASE("http api") {
    ServerOptions o;
    o.port = 0;
    SessionServer server(o);
    const int port = server.start();
    httplib::Client cli("127.0.0.1", port);

    auto res = cli.Post("/api/v1/sessions", R"({"map_id":"A","learner_kind":"aware","seed":1})", "application/json");
    REQUIRE(res);
    CHECK(res->status == 200);
    CHECK(res->get_header_value("Access-Control-Allow-Origin") == "*");
    const json created = json::parse(res->body);
    const std::string id = created["session_id"];

    res = cli.Get("/api/v1/sessions/" + id + "/candidates");
    REQUIRE(res);
    CHECK(json::parse(res->body)["candidates"].size() == 10);

    res = cli.Post("/api/v1/sessions/" + id + "/select", R"({"candidate_index":4})", "application/json");
    REQUIRE(res);
    CHECK(json::parse(res->body)["step"] == 1);

    res = cli.Get("/api/v1/sessions/" + id + "/metrics");
    REQUIRE(res);
    CHECK(json::parse(res->body)["metrics"].size() == 2);

    CHECK(cli.Post("/api/v1/sessions", R"({"map_id":"Q"})", "application/json")->status == 404);
    CHECK(cli.Post("/api/v1/sessions", "{not json", "application/json")->status == 400);
    CHECK(cli.Get("/api/v1/sessions/zzz/state")->status == 404);
    CHECK(cli.Post("/api/v1/sessions/" + id + "/select", R"({"candidate_index":12})", "application/json")->status ==
          400);
    CHECK(cli.Post("/api/v1/sessions/" + id + "/finish", "", "application/json")->status == 200);
    CHECK(cli.Post("/api/v1/sessions/" + id + "/select", R"({"candidate_index":0})", "application/json")->status ==
          409);
    CHECK(cli.Options("/api/v1/sessions")->status == 204);
    server.stop();
}

TEST_CASE("scripted teacher over http matches the in-process driver") {
    SessionConfig c = cfg(SessionLearnerKind::Aware, 5);
    c.max_steps = 12;
    const ScriptedTrajectory local = run_scripted_session(c, 12);

    ServerOptions o;
    o.port = 0;
    SessionServer server(o);
    httplib::Client cli("127.0.0.1", server.start());
    json view = json::parse(cli.Post("/api/v1/sessions", json(to_json(c)).dump(), "application/json")->body);
    const std::string id = view["session_id"];
    const GridworldMDP mdp(5, 5);
    const Vector truth = tiles_to_rewards(session_tiles(c));
    for (std::size_t t = 0; t < 12; ++t) {
        const auto est = view["estimates"].get<std::vector<double>>();
        const RewardParams nu = Eigen::Map<const Vector>(est.data(), 25);
        CHECK(nu == local.rewards[t]);
        std::vector<Candidate> cands;
        for (const auto& k : view["candidates"])
            cands.push_back({{k["state"].get<int>(), action_from_string(k["action"].get<std::string>())}});
        const std::size_t pick = scripted_cooperative_choice(mdp, truth, c.planner, c.eta, nu, cands);
        CHECK(pick == local.choices[t]);
        view = json::parse(cli.Post("/api/v1/sessions/" + id + "/select",
                                    json{{"candidate_index", pick}}.dump(), "application/json")
                               ->body);
    }
    const auto est = view["estimates"].get<std::vector<double>>();
    CHECK(RewardParams(Eigen::Map<const Vector>(est.data(), 25)) == local.rewards.back());
    server.stop();
}

}
