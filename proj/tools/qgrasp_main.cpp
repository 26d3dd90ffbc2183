#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "qgrasp/config.hpp"
#include "qgrasp/harness.hpp"

namespace {

using namespace qgrasp;

int usage() {
    std::cerr
        << "usage: qgrasp <subcommand> [args]\n"
        << "  train <config> [resume_checkpoint]   run training episodes\n"
        << "  eval <config> <checkpoint>           evaluate a checkpoint\n"
        << "  cross-eval <config> <ckpt_A> <ckpt_B>  2x2 success matrix\n"
        << "  trace <config> <checkpoint>          greedy episode value trace\n"
        << "  activations <config> <checkpoint> <image.pgm>  feature maps\n"
        << "  render <config>                      dump one observation\n"
        << "  selftest                             gradient checks + table oracle\n";
    return 2;
}

Agent make_agent(const RunConfig& config) {
    return Agent(config.network_spec(), config.agent, config.schedule,
                 config.seed);
}

int cmd_train(const std::vector<std::string>& args) {
    RunConfig config = parse_config(args.at(0));
    std::string resume = args.size() > 1 ? args[1] : "";
    TrainResult result = train(config, resume);
    long successes =
        result.metrics.empty() ? 0 : result.metrics.back().cumulative_successes;
    std::cout << "episodes=" << config.episodes
              << " cumulative_successes=" << successes << "\n";
    std::cout << "metrics=" << result.metrics_path << "\n";
    if (!result.final_checkpoint.empty())
        std::cout << "checkpoint=" << result.final_checkpoint << "\n";
    return 0;
}

int cmd_eval(const std::vector<std::string>& args) {
    RunConfig config = parse_config(args.at(0));
    Env env = Env::from_config(config);
    Agent agent = make_agent(config);
    agent.load_params_only(args.at(1));
    DqnPolicy policy(agent);
    EvalReport report = evaluate(env, policy, config.eval_episodes,
                                 config.eval_epsilon, config.seed);
    for (const auto& m : report.per_episode)
        std::cout << "episode=" << m.episode << " success=" << (m.success ? 1 : 0)
                  << " length=" << m.length << "\n";
    std::printf("success_rate=%.17g\n", report.success_rate);
    return 0;
}

int cmd_cross_eval(const std::vector<std::string>& args) {
    RunConfig config = parse_config(args.at(0));
    RunConfig config_a = config, config_b = config;
    config_a.reset.mode = ResetMode::Fixed;
    config_b.reset.mode = ResetMode::Randomized;
    Env env_a = Env::from_config(config_a);
    Env env_b = Env::from_config(config_b);

    Agent agent_a = make_agent(config);
    agent_a.load_params_only(args.at(1));
    Agent agent_b = make_agent(config);
    agent_b.load_params_only(args.at(2));
    DqnPolicy policy_a(agent_a), policy_b(agent_b);

    CrossEvalReport report =
        cross_evaluate(policy_a, policy_b, env_a, env_b, config.eval_episodes,
                       config.eval_epsilon, config.seed);
    std::cout << report.to_csv();
    std::string out_dir = resolve_output_dir(config);
    std::filesystem::create_directories(out_dir);
    std::ofstream f(out_dir + "/cross_eval.csv");
    f << report.to_csv();
    return 0;
}

int cmd_trace(const std::vector<std::string>& args) {
    RunConfig config = parse_config(args.at(0));
    Env env = Env::from_config(config);
    Agent agent = make_agent(config);
    agent.load_params_only(args.at(1));
    std::string out_dir = resolve_output_dir(config) + "/trace";
    auto trace = value_trace(env, agent, config.seed, out_dir);
    std::cout << "frames=" << trace.size() << "\n";
    std::cout << "trace=" << out_dir << "/value_trace.csv\n";
    return 0;
}

int cmd_activations(const std::vector<std::string>& args) {
    RunConfig config = parse_config(args.at(0));
    Agent agent = make_agent(config);
    agent.load_params_only(args.at(1));
    Observation obs = read_pgm(args.at(2));
    if (obs.width != config.obs_width || obs.height != config.obs_height)
        throw std::runtime_error("input image size does not match obs config");
    Tensor t;
    t.shape = {1, static_cast<size_t>(obs.height),
               static_cast<size_t>(obs.width)};
    t.data = obs.pixels;
    std::string out_dir = resolve_output_dir(config) + "/activations";
    auto files = activation_dump(agent, t, out_dir);
    std::cout << "feature_maps=" << files.size() << "\n";
    return 0;
}

int cmd_render(const std::vector<std::string>& args) {
    RunConfig config = parse_config(args.at(0));
    Env env = Env::from_config(config);
    Rng rng(config.seed);
    WorldState world = env.do_reset(rng);
    Observation obs = env.observe(world);
    std::string out_dir = resolve_output_dir(config);
    std::filesystem::create_directories(out_dir);
    write_pgm(obs, out_dir + "/observation.pgm");
    std::cout << "wrote " << out_dir << "/observation.pgm\n";
    return 0;
}

// --- selftest -------------------------------------------------------------

double rel_err(double a, double b) {
    double denom = std::max({std::abs(a), std::abs(b), 1e-8});
    return std::abs(a - b) / denom;
}

// Central finite differences of a scalar function of one tensor entry.
template <typename F>
double fd_grad(F loss, double& slot) {
    const double h = 1e-5;
    double saved = slot;
    slot = saved + h;
    double up = loss();
    slot = saved - h;
    double down = loss();
    slot = saved;
    return (up - down) / (2.0 * h);
}

bool gradient_selftest() {
    Rng rng(7);
    NetworkSpec spec = NetworkSpec::standard(16, 16, {4, 4, 4}, {5, 3, 1},
                                             {1, 1, 1}, 16);
    NetworkParams params = init_params(spec, rng);
    Tensor input({1, 16, 16});
    for (double& v : input.data) v = rng.uniform();
    Tensor d_out({14});
    for (double& v : d_out.data) v = rng.uniform(-1, 1);

    auto loss = [&]() {
        Tensor out = network_forward(spec, params, input);
        double s = 0.0;
        for (size_t i = 0; i < out.size(); ++i) s += out.data[i] * d_out.data[i];
        return s;
    };
    ForwardCache cache;
    network_forward(spec, params, input, &cache);
    NetworkGrads g = network_backward(spec, params, cache, d_out);

    double worst = 0.0;
    for (size_t li = 0; li < params.weights.size(); ++li) {
        for (size_t i = 0; i < params.weights[li].size(); i += 17) {
            double analytic = g.weights[li].data[i];
            double numeric = fd_grad(loss, params.weights[li].data[i]);
            worst = std::max(worst, rel_err(analytic, numeric));
        }
        for (size_t i = 0; i < params.biases[li].size(); ++i) {
            double analytic = g.biases[li].data[i];
            double numeric = fd_grad(loss, params.biases[li].data[i]);
            worst = std::max(worst, rel_err(analytic, numeric));
        }
    }
    std::printf("selftest gradients: max relative error %.3g\n", worst);
    return worst < 1e-6;
}

bool tabular_selftest() {
    // 5-state deterministic chain; moving right from the last state pays 1
    // and terminates.
    const int S = 5, A = 2;
    const double gamma = 0.9, lr = 0.5;
    auto next_state = [](int s, int a) { return a == 1 ? s + 1 : std::max(0, s - 1); };
    auto reward = [](int s, int a) { return (s == S - 1 && a == 1) ? 1.0 : 0.0; };
    auto terminal = [](int s, int a) { return s == S - 1 && a == 1; };

    // independent value iteration
    std::vector<std::vector<double>> q_star(S, std::vector<double>(A, 0.0));
    for (int it = 0; it < 1000; ++it) {
        auto prev = q_star;
        for (int s = 0; s < S; ++s)
            for (int a = 0; a < A; ++a) {
                double v = reward(s, a);
                if (!terminal(s, a)) {
                    int ns = std::min(next_state(s, a), S - 1);
                    v += gamma * std::max(prev[ns][0], prev[ns][1]);
                }
                q_star[s][a] = v;
            }
    }

    std::vector<std::vector<double>> q(S, std::vector<double>(A, 0.0));
    auto q_target = q;
    Rng rng(3);
    for (int step = 1; step <= 10000; ++step) {
        int s = static_cast<int>(rng.uniform_int(S));
        int a = static_cast<int>(rng.uniform_int(A));
        int ns = std::min(next_state(s, a), S - 1);
        double max_next = std::max(q_target[ns][0], q_target[ns][1]);
        double y = td_target(reward(s, a), terminal(s, a), max_next, gamma);
        q[s][a] += lr * (y - q[s][a]);
        if (step % 100 == 0) q_target = q;
    }
    double err = 0.0;
    for (int s = 0; s < S; ++s)
        for (int a = 0; a < A; ++a)
            err = std::max(err, std::abs(q[s][a] - q_star[s][a]));
    std::printf("selftest tabular: max |Q - Q*| = %.3g\n", err);
    return err < 1e-2;
}

int cmd_selftest() {
    bool ok = gradient_selftest();
    ok = tabular_selftest() && ok;
    std::cout << (ok ? "selftest passed" : "selftest FAILED") << "\n";
    return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    if (argc < 2) return usage();
    std::string cmd = argv[1];
    std::vector<std::string> args(argv + 2, argv + argc);
    try {
        if (cmd == "train" && args.size() >= 1) return cmd_train(args);
        if (cmd == "eval" && args.size() == 2) return cmd_eval(args);
        if (cmd == "cross-eval" && args.size() == 3) return cmd_cross_eval(args);
        if (cmd == "trace" && args.size() == 2) return cmd_trace(args);
        if (cmd == "activations" && args.size() == 3) return cmd_activations(args);
        if (cmd == "render" && args.size() == 1) return cmd_render(args);
        if (cmd == "selftest") return cmd_selftest();
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return usage();
}
