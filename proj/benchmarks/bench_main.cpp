#include <benchmark/benchmark.h>

#include "qgrasp/config.hpp"
#include "qgrasp/harness.hpp"

namespace {

using namespace qgrasp;

RunConfig small_config() {
    RunConfig c;
    c.obs_width = 32;
    c.obs_height = 32;
    c.conv_channels = {8, 16, 16};
    c.conv_kernels = {5, 3, 3};
    c.hidden_units = 64;
    c.camera.scale = 32.0;
    c.agent.min_replay_before_learning = 32;
    c.agent.replay_capacity = 1000;
    return c;
}

void BM_render(benchmark::State& state) {
    RunConfig c = small_config();
    Env env = Env::from_config(c);
    Rng rng(1);
    WorldState world = env.do_reset(rng);
    for (auto _ : state) benchmark::DoNotOptimize(env.observe(world));
}
BENCHMARK(BM_render);

void BM_forward(benchmark::State& state) {
    RunConfig c = small_config();
    NetworkSpec spec = c.network_spec();
    Rng rng(1);
    NetworkParams params = init_params(spec, rng);
    Tensor input({1, 32, 32});
    for (double& v : input.data) v = rng.uniform();
    for (auto _ : state)
        benchmark::DoNotOptimize(network_forward(spec, params, input));
}
BENCHMARK(BM_forward);

void BM_train_step(benchmark::State& state) {
    RunConfig c = small_config();
    Env env = Env::from_config(c);
    Agent agent(c.network_spec(), c.agent, c.schedule, 1);
    Rng rng(2);
    WorldState world = env.do_reset(rng);
    Observation obs = env.observe(world);
    for (auto _ : state) {
        Tensor t = env.observation_tensor(obs);
        int action = agent.act(t, 0.5);
        StepResult sr = env.do_step(world, action);
        Observation next = env.observe(sr.next);
        agent.train_step({obs.pixels, action, sr.reward, next.pixels,
                          sr.status != EpisodeStatus::Continue});
        if (sr.status == EpisodeStatus::Continue) {
            world = sr.next;
            obs = std::move(next);
        } else {
            world = env.do_reset(rng);
            obs = env.observe(world);
        }
    }
}
BENCHMARK(BM_train_step);

}  // namespace

BENCHMARK_MAIN();
