#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <vector>

#include "qgrasp/dqn.hpp"

using namespace qgrasp;

namespace {

Transition make_transition(int tag) {
    Transition t;
    t.observation = {double(tag), double(tag) + 0.5};
    t.action = tag % 14;
    t.reward = 0.1 * tag;
    t.next_observation = {double(tag) + 1.0, double(tag) + 1.5};
    t.terminal = tag % 7 == 0;
    return t;
}

// A tiny fully-connected spec whose outputs are easy to compute by hand.
NetworkSpec linear_spec(size_t inputs, size_t outputs) {
    NetworkSpec spec;
    spec.input_channels = 1;
    spec.input_height = 1;
    spec.input_width = inputs;
    LayerSpec flatten;
    flatten.kind = LayerKind::Flatten;
    spec.layers.push_back(flatten);
    LayerSpec fc;
    fc.kind = LayerKind::Fc;
    fc.out_units = outputs;
    spec.layers.push_back(fc);
    return spec;
}

NetworkSpec tiny_conv_spec() {
    return NetworkSpec::standard(16, 16, {2, 2, 2}, {5, 3, 1}, {1, 1, 1}, 8, 4);
}

std::string tmp_path(const char* name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("replay buffer keeps the newest transitions in FIFO order") {
    ReplayBuffer buf(4);
    CHECK(buf.capacity() == 4);
    for (int i = 0; i < 6; ++i) buf.push(make_transition(i));
    CHECK(buf.size() == 4);
    CHECK(buf.insert_count() == 6);
    // transitions 0 and 1 were evicted; oldest surviving is 2
    for (size_t i = 0; i < 4; ++i) {
        CHECK(buf.at(i).reward == doctest::Approx(0.1 * (i + 2)));
        CHECK(buf.at(i).observation[0] == double(i + 2));
    }
    CHECK_THROWS_AS(buf.at(4), std::out_of_range);
}

TEST_CASE("replay sampling rejects an underfull buffer") {
    ReplayBuffer buf(16);
    Rng rng(1);
    CHECK_THROWS_AS(buf.sample(1, rng), std::invalid_argument);
    buf.push(make_transition(0));
    buf.push(make_transition(1));
    CHECK_THROWS_AS(buf.sample(3, rng), std::invalid_argument);
    CHECK_NOTHROW(buf.sample(2, rng));
}

TEST_CASE("replay sampling is roughly uniform") {
    const int n = 10;
    ReplayBuffer buf(n);
    for (int i = 0; i < n; ++i) buf.push(make_transition(i));
    Rng rng(42);
    const int draws = 50000;
    std::vector<int> counts(n, 0);
    for (int d = 0; d < draws; ++d)
        for (const Transition* t : buf.sample(1, rng))
            counts[int(std::lround(t->reward / 0.1))]++;
    // expected draws/n each; 3-sigma binomial band
    double expect = double(draws) / n;
    double sigma = std::sqrt(draws * (1.0 / n) * (1.0 - 1.0 / n));
    for (int i = 0; i < n; ++i) {
        CHECK(counts[i] > expect - 3 * sigma);
        CHECK(counts[i] < expect + 3 * sigma);
    }
}

TEST_CASE("replay buffer save/load round trip") {
    ReplayBuffer buf(8);
    for (int i = 0; i < 11; ++i) buf.push(make_transition(i));
    std::string path = tmp_path("qgrasp_test_replay.bin");
    buf.save(path);
    ReplayBuffer back(8);
    back.load(path);
    REQUIRE(back.size() == buf.size());
    CHECK(back.insert_count() == buf.insert_count());
    for (size_t i = 0; i < buf.size(); ++i) {
        CHECK(back.at(i).observation == buf.at(i).observation);
        CHECK(back.at(i).action == buf.at(i).action);
        CHECK(back.at(i).reward == buf.at(i).reward);
        CHECK(back.at(i).next_observation == buf.at(i).next_observation);
        CHECK(back.at(i).terminal == buf.at(i).terminal);
    }
    std::filesystem::remove(path);
}

TEST_CASE("epsilon anneals linearly and then stays at the floor") {
    EpsilonSchedule s;
    s.start = 1.0;
    s.end = 0.1;
    s.anneal_span = 1000;
    CHECK(epsilon_at(s, 0) == doctest::Approx(1.0));
    CHECK(epsilon_at(s, 500) == doctest::Approx(0.55));
    CHECK(epsilon_at(s, 1000) == doctest::Approx(0.1));
    CHECK(epsilon_at(s, 5000) == doctest::Approx(0.1));
    CHECK(epsilon_at(s, 250) == doctest::Approx(1.0 - 0.9 * 0.25));
}

TEST_CASE("greedy action selection") {
    Rng rng(3);
    SUBCASE("epsilon 0 picks the argmax") {
        std::vector<double> q = {0.1, 0.9, 0.3, -2.0};
        CHECK(select_action(q, 0.0, rng) == 1);
    }
    SUBCASE("ties break toward the lowest action id") {
        std::vector<double> q = {0.5, 0.9, 0.9, 0.9};
        CHECK(select_action(q, 0.0, rng) == 1);
    }
    SUBCASE("argmax is invariant to a constant shift") {
        std::vector<double> q = {0.2, -0.4, 1.3, 0.7};
        int a = select_action(q, 0.0, rng);
        for (double& v : q) v += 17.25;
        CHECK(select_action(q, 0.0, rng) == a);
    }
    SUBCASE("epsilon 1 explores uniformly") {
        std::vector<double> q = {100.0, 0.0, 0.0, 0.0};  // argmax never matters
        const int draws = 40000;
        std::vector<int> counts(4, 0);
        for (int i = 0; i < draws; ++i) counts[select_action(q, 1.0, rng)]++;
        double expect = draws / 4.0;
        double sigma = std::sqrt(draws * 0.25 * 0.75);
        for (int c : counts) {
            CHECK(c > expect - 3 * sigma);
            CHECK(c < expect + 3 * sigma);
        }
    }
    SUBCASE("empty q-vector is rejected") {
        std::vector<double> q;
        CHECK_THROWS_AS(select_action(q, 0.0, rng), std::invalid_argument);
    }
}

TEST_CASE("td target") {
    CHECK(td_target(100.0, true, 55.0, 0.99) == 100.0);
    CHECK(td_target(1.3, false, 2.0, 0.99) == doctest::Approx(1.3 + 0.99 * 2.0));
    CHECK(td_target(0.5, false, -1.0, 0.5) == doctest::Approx(0.0));
    // monotone in the bootstrap value when non-terminal
    CHECK(td_target(0.0, false, 3.0, 0.9) > td_target(0.0, false, 2.0, 0.9));
    // and flat when terminal
    CHECK(td_target(0.0, true, 3.0, 0.9) == td_target(0.0, true, 2.0, 0.9));
}

TEST_CASE("agent config validation names the bad field") {
    AgentConfig c;
    CHECK_NOTHROW(c.validate());
    c.discount = 1.5;
    CHECK_THROWS_WITH_AS(c.validate(),
                         doctest::Contains("discount"), std::invalid_argument);
    c = AgentConfig{};
    c.batch_size = 0;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c = AgentConfig{};
    c.learning_rate = -1.0;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c = AgentConfig{};
    c.replay_capacity = 0;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}

TEST_CASE("loss is zero when online predictions already equal the targets") {
    // Single Fc layer, identity-ish weights, crafted so prediction == target.
    NetworkSpec spec = linear_spec(2, 2);
    Rng rng(9);
    NetworkParams params = init_params(spec, rng);
    // force known weights: q(s) = W s + b
    params.weights[0].data = {1.0, 0.0, 0.0, 1.0};  // identity
    params.biases[0].data = {0.0, 0.0};
    NetworkParams target = sync_target(params);

    Transition t;
    t.observation = {0.7, -0.2};
    t.action = 0;
    t.terminal = true;
    t.reward = 0.7;  // equals q(s)[0] under the identity weights
    t.next_observation = {0.0, 0.0};
    std::vector<const Transition*> batch = {&t};
    LossResult r = loss_and_gradients(batch, spec, params, target, 0.99);
    CHECK(r.loss == doctest::Approx(0.0));
    for (const Tensor& g : r.gradients.weights)
        for (double v : g.data) CHECK(v == doctest::Approx(0.0));
}

TEST_CASE("loss and gradient of a hand-solvable linear case") {
    // q(s) = W s, one sample, terminal. loss = (q[a] - r)^2.
    NetworkSpec spec = linear_spec(2, 2);
    NetworkParams params;
    Tensor w({2, 2});
    w.data = {2.0, 0.0, 0.0, 3.0};
    Tensor b({2});
    b.data = {0.5, -0.5};
    params.weights = {w};
    params.biases = {b};
    NetworkParams target = sync_target(params);

    Transition t;
    t.observation = {1.0, 2.0};
    t.action = 1;  // q[1] = 3*2 - 0.5 = 5.5
    t.reward = 4.0;
    t.terminal = true;
    t.next_observation = {0.0, 0.0};
    std::vector<const Transition*> batch = {&t};
    LossResult r = loss_and_gradients(batch, spec, params, target, 0.99);
    double err = 5.5 - 4.0;
    CHECK(r.loss == doctest::Approx(err * err));
    // d loss / d q[1] = 2 err; dq[1]/dW[1][j] = s[j]; action 0 row untouched
    CHECK(r.gradients.weights[0].data[0] == doctest::Approx(0.0));
    CHECK(r.gradients.weights[0].data[1] == doctest::Approx(0.0));
    CHECK(r.gradients.weights[0].data[2] == doctest::Approx(2 * err * 1.0));
    CHECK(r.gradients.weights[0].data[3] == doctest::Approx(2 * err * 2.0));
    CHECK(r.gradients.biases[0].data[0] == doctest::Approx(0.0));
    CHECK(r.gradients.biases[0].data[1] == doctest::Approx(2 * err));
}

TEST_CASE("non-terminal targets bootstrap from the target network") {
    NetworkSpec spec = linear_spec(1, 2);
    NetworkParams online;
    Tensor w({2, 1});
    w.data = {1.0, 0.0};
    Tensor b({2});
    b.data = {0.0, 0.0};
    online.weights = {w};
    online.biases = {b};
    // target net differs: q_target(s') = [5 s', 7 s']
    NetworkParams target = online;
    target.weights[0].data = {5.0, 7.0};

    Transition t;
    t.observation = {1.0};  // q_online = [1, 0], taken action 0 -> prediction 1
    t.action = 0;
    t.reward = 0.25;
    t.terminal = false;
    t.next_observation = {1.0};  // q_target = [5, 7] -> max 7
    std::vector<const Transition*> batch = {&t};
    double gamma = 0.5;
    LossResult r = loss_and_gradients(batch, spec, online, target, gamma);
    double y = 0.25 + gamma * 7.0;
    double err = 1.0 - y;
    CHECK(r.loss == doctest::Approx(err * err));
    CHECK(r.gradients.weights[0].data[0] == doctest::Approx(2 * err * 1.0));
    CHECK(r.gradients.weights[0].data[1] == doctest::Approx(0.0));
}

TEST_CASE("batch loss gradients match finite differences") {
    NetworkSpec spec = tiny_conv_spec();
    Rng rng(11);
    NetworkParams online = init_params(spec, rng);
    NetworkParams target = init_params(spec, rng);

    std::vector<Transition> owned;
    for (int i = 0; i < 3; ++i) {
        Transition t;
        t.observation.resize(16 * 16);
        t.next_observation.resize(16 * 16);
        for (double& v : t.observation) v = rng.uniform();
        for (double& v : t.next_observation) v = rng.uniform();
        t.action = i + 1;
        t.reward = rng.uniform(-1, 2);
        t.terminal = i == 2;
        owned.push_back(t);
    }
    std::vector<const Transition*> batch;
    for (const Transition& t : owned) batch.push_back(&t);

    const double gamma = 0.99;
    LossResult r = loss_and_gradients(batch, spec, online, target, gamma);
    auto loss_of = [&]() {
        return loss_and_gradients(batch, spec, online, target, gamma).loss;
    };
    const double h = 1e-5;
    double worst = 0.0;
    for (size_t li = 0; li < online.weights.size(); ++li) {
        for (size_t i = 0; i < online.weights[li].size(); i += 23) {
            double& slot = online.weights[li].data[i];
            double saved = slot;
            slot = saved + h;
            double up = loss_of();
            slot = saved - h;
            double down = loss_of();
            slot = saved;
            double numeric = (up - down) / (2 * h);
            double analytic = r.gradients.weights[li].data[i];
            double denom = std::max({std::abs(numeric), std::abs(analytic), 1e-8});
            worst = std::max(worst, std::abs(numeric - analytic) / denom);
        }
    }
    CHECK(worst < 1e-6);
}

TEST_CASE("empty batch is rejected") {
    NetworkSpec spec = linear_spec(2, 2);
    Rng rng(1);
    NetworkParams p = init_params(spec, rng);
    std::vector<const Transition*> batch;
    CHECK_THROWS_AS(loss_and_gradients(batch, spec, p, p, 0.99),
                    std::invalid_argument);
}

TEST_CASE("target sync copies and stays independent afterwards") {
    NetworkSpec spec = linear_spec(3, 2);
    Rng rng(5);
    NetworkParams online = init_params(spec, rng);
    NetworkParams target = sync_target(online);
    REQUIRE(target.same_shape(online));
    for (size_t li = 0; li < online.weights.size(); ++li)
        CHECK(target.weights[li].data == online.weights[li].data);
    online.weights[0].data[0] += 1.0;
    CHECK(target.weights[0].data[0] != online.weights[0].data[0]);
    // idempotent
    NetworkParams again = sync_target(online);
    CHECK(again.weights[0].data == online.weights[0].data);
}

TEST_CASE("agent learning is gated on replay warmup and update period") {
    AgentConfig cfg;
    cfg.batch_size = 4;
    cfg.min_replay_before_learning = 8;
    cfg.replay_capacity = 64;
    cfg.learning_rate = 1e-3;
    cfg.update_period = 2;
    cfg.target_sync_period = 6;
    EpsilonSchedule sched;
    Agent agent(tiny_conv_spec(), cfg, sched, 99);

    Rng rng(2);
    auto random_transition = [&]() {
        Transition t;
        t.observation.resize(16 * 16);
        t.next_observation.resize(16 * 16);
        for (double& v : t.observation) v = rng.uniform();
        for (double& v : t.next_observation) v = rng.uniform();
        t.action = int(rng.uniform_int(4));
        t.reward = rng.uniform();
        t.terminal = false;
        return t;
    };

    std::uint64_t before = agent.param_checksum();
    for (int i = 0; i < 7; ++i) {
        double loss = agent.train_step(random_transition());
        CHECK(loss == 0.0);  // still warming up
    }
    CHECK(agent.param_checksum() == before);  // no update before min replay
    CHECK(agent.global_step() == 7);

    // step 8 reaches warmup and is even -> first update happens
    agent.train_step(random_transition());
    CHECK(agent.param_checksum() != before);

    // odd steps are skipped by update_period = 2
    std::uint64_t after8 = agent.param_checksum();
    agent.train_step(random_transition());  // step 9
    CHECK(agent.param_checksum() == after8);
    agent.train_step(random_transition());  // step 10 -> update
    CHECK(agent.param_checksum() != after8);
}

TEST_CASE("target network follows the online network at the sync boundary") {
    AgentConfig cfg;
    cfg.batch_size = 2;
    cfg.min_replay_before_learning = 2;
    cfg.replay_capacity = 32;
    cfg.learning_rate = 1e-2;
    cfg.update_period = 1;
    cfg.target_sync_period = 5;
    EpsilonSchedule sched;
    Agent agent(tiny_conv_spec(), cfg, sched, 4);

    Rng rng(6);
    auto random_transition = [&]() {
        Transition t;
        t.observation.resize(16 * 16);
        t.next_observation.resize(16 * 16);
        for (double& v : t.observation) v = rng.uniform();
        for (double& v : t.next_observation) v = rng.uniform();
        t.action = int(rng.uniform_int(4));
        t.reward = rng.uniform();
        return t;
    };

    auto nets_equal = [&]() {
        const NetworkParams& a = agent.params();
        const NetworkParams& b = agent.target_params();
        for (size_t li = 0; li < a.weights.size(); ++li) {
            if (a.weights[li].data != b.weights[li].data) return false;
            if (a.biases[li].data != b.biases[li].data) return false;
        }
        return true;
    };

    CHECK(nets_equal());  // fresh agent starts synced
    for (int i = 0; i < 4; ++i) agent.train_step(random_transition());
    CHECK_FALSE(nets_equal());  // online has moved, target has not
    agent.train_step(random_transition());  // global step 5 -> sync
    CHECK(nets_equal());
}

TEST_CASE("seeded agents reproduce a training run exactly") {
    AgentConfig cfg;
    cfg.batch_size = 4;
    cfg.min_replay_before_learning = 4;
    cfg.replay_capacity = 128;
    cfg.learning_rate = 1e-3;
    EpsilonSchedule sched;
    sched.anneal_span = 50;

    auto run = [&]() {
        Agent agent(tiny_conv_spec(), cfg, sched, 1234);
        Rng rng(77);
        for (int i = 0; i < 100; ++i) {
            Transition t;
            t.observation.resize(16 * 16);
            t.next_observation.resize(16 * 16);
            for (double& v : t.observation) v = rng.uniform();
            for (double& v : t.next_observation) v = rng.uniform();
            Tensor obs({1, 16, 16});
            obs.data = t.observation;
            t.action = agent.act(obs, agent.current_epsilon());
            t.reward = rng.uniform();
            t.terminal = i % 25 == 24;
            agent.train_step(t);
        }
        return agent.param_checksum();
    };
    CHECK(run() == run());
}

TEST_CASE("agent checkpoint restores training exactly") {
    AgentConfig cfg;
    cfg.batch_size = 4;
    cfg.min_replay_before_learning = 4;
    cfg.replay_capacity = 128;
    cfg.learning_rate = 1e-3;
    EpsilonSchedule sched;
    sched.anneal_span = 60;

    Rng scenario(31);
    std::vector<Transition> tape;
    for (int i = 0; i < 80; ++i) {
        Transition t;
        t.observation.resize(16 * 16);
        t.next_observation.resize(16 * 16);
        for (double& v : t.observation) v = scenario.uniform();
        for (double& v : t.next_observation) v = scenario.uniform();
        t.reward = scenario.uniform();
        t.terminal = i % 20 == 19;
        tape.push_back(t);
    }

    auto drive = [&](Agent& agent, int from, int to) {
        for (int i = from; i < to; ++i) {
            Transition t = tape[i];
            Tensor obs({1, 16, 16});
            obs.data = t.observation;
            t.action = agent.act(obs, agent.current_epsilon());
            agent.train_step(t);
        }
    };

    Agent uninterrupted(tiny_conv_spec(), cfg, sched, 500);
    drive(uninterrupted, 0, 80);

    Agent first(tiny_conv_spec(), cfg, sched, 500);
    drive(first, 0, 40);
    std::string ckpt = tmp_path("qgrasp_test_agent.ckpt");
    std::string sidecar = tmp_path("qgrasp_test_agent.sidecar");
    std::string replay = tmp_path("qgrasp_test_agent.replay");
    first.save(ckpt, sidecar, true, replay);

    Agent resumed(tiny_conv_spec(), cfg, sched, 999);  // seed gets overwritten
    resumed.load(ckpt, sidecar, true, replay);
    CHECK(resumed.global_step() == 40);
    drive(resumed, 40, 80);

    CHECK(resumed.param_checksum() == uninterrupted.param_checksum());
    CHECK(resumed.global_step() == uninterrupted.global_step());
    std::filesystem::remove(ckpt);
    std::filesystem::remove(sidecar);
    std::filesystem::remove(replay);
}
