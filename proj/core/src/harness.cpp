#include "qgrasp/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace qgrasp {

namespace fs = std::filesystem;

Env Env::from_config(const RunConfig& config) {
    Env e;
    e.chain = config.chain;
    e.reset_spec = config.reset;
    e.sim = config.sim;
    e.camera = config.camera;
    e.obs_width = config.obs_width;
    e.obs_height = config.obs_height;
    e.style = config.style;
    e.cube_half_extent = config.cube_half_extent;
    return e;
}

WorldState Env::do_reset(Rng& rng) const {
    WorldState w = reset(chain, reset_spec, rng);
    w.cube.half_extent = cube_half_extent;
    return w;
}

StepResult Env::do_step(const WorldState& world, int action) const {
    return step(world, chain, action, reset_spec, sim);
}

Observation Env::observe(const WorldState& world) const {
    return render(world, chain, camera, obs_width, obs_height, style);
}

Tensor Env::observation_tensor(const Observation& obs) const {
    Tensor t;
    t.shape = {1, static_cast<size_t>(obs.height), static_cast<size_t>(obs.width)};
    t.data = obs.pixels;
    return t;
}

int DqnPolicy::act(const Tensor& obs, const WorldState&, const Env&, Rng&,
                   std::vector<double>* q_out) {
    std::vector<double> q = agent_.q_values(obs);
    int best = 0;
    for (int a = 1; a < static_cast<int>(q.size()); ++a)
        if (q[a] > q[best]) best = a;
    if (q_out) *q_out = std::move(q);
    return best;
}

int RandomPolicy::act(const Tensor&, const WorldState&, const Env&, Rng& rng,
                      std::vector<double>* q_out) {
    if (q_out) q_out->clear();
    return static_cast<int>(rng.uniform_int(kNumActions));
}

int ScriptedOraclePolicy::act(const Tensor&, const WorldState& world,
                              const Env& env, Rng&, std::vector<double>* q_out) {
    if (q_out) q_out->clear();
    FkResult fk = forward_kinematics(env.chain, world.arm);

    auto joint_candidates = [&](auto score) {
        int best_action = -1;
        double best_score = -1e300;
        for (int a = 0; a < kActionOpenGripper; ++a) {
            int k = a / 2;
            if (!env.sim.joint_controlled[static_cast<size_t>(k)]) continue;
            ArmState trial = world.arm;
            const Link& link = env.chain.links[static_cast<size_t>(k)];
            double delta = a % 2 == 0 ? 1.0 : -1.0;
            trial.joint_angles_deg[k] =
                std::clamp(trial.joint_angles_deg[k] + delta, link.joint_min_deg,
                           link.joint_max_deg);
            Vec3 g = forward_kinematics(env.chain, trial).gripper_point;
            double s = score(g);
            if (s > best_score) {
                best_score = s;
                best_action = a;
            }
        }
        return best_action;
    };

    if (world.cube.grasped) {
        // Lift: raise the gripper, avoiding poses the table would block.
        int a = joint_candidates(
            [](const Vec3& g) { return g.y >= 0.0 ? g.y : -1e300; });
        return a >= 0 ? a : kActionCloseGripper;
    }
    double d = distance(fk.gripper_point, world.cube.position);
    if (d <= env.sim.grasp_radius && fk.gripper_point.y >= 0.0) {
        if (!world.arm.gripper_closed) return kActionCloseGripper;
        return kActionOpenGripper;  // closed empty-handed; reopen to retry
    }
    if (world.arm.gripper_closed) return kActionOpenGripper;
    Vec3 cube = world.cube.position;
    // Stay above the table plane while approaching; a grasp attempted from
    // below it would fail.
    int a = joint_candidates([&cube](const Vec3& g) {
        return g.y >= 0.0 ? -distance(g, cube) : -1e6 - distance(g, cube);
    });
    return a >= 0 ? a : kActionOpenGripper;
}

namespace {

double max_of(const std::vector<double>& v) {
    return v.empty() ? 0.0 : *std::max_element(v.begin(), v.end());
}

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

EpisodeMetrics run_train_episode(const Env& env, Agent& agent, Rng& env_rng) {
    EpisodeMetrics m;
    m.epsilon = agent.current_epsilon();
    WorldState world = env.do_reset(env_rng);
    Observation obs = env.observe(world);
    double reward_sum = 0.0, max_q_sum = 0.0;
    while (true) {
        Tensor t = env.observation_tensor(obs);
        std::vector<double> q = agent.q_values(t);
        int action = agent.choose_action(q, agent.current_epsilon());
        StepResult sr = env.do_step(world, action);
        Observation next_obs = env.observe(sr.next);
        bool terminal = sr.status != EpisodeStatus::Continue;
        agent.train_step({obs.pixels, action, sr.reward,
                          next_obs.pixels, terminal});
        reward_sum += sr.reward;
        max_q_sum += max_of(q);
        m.length += 1;
        world = sr.next;
        obs = std::move(next_obs);
        if (terminal) {
            m.success = sr.status == EpisodeStatus::Success;
            break;
        }
    }
    m.mean_reward = reward_sum / static_cast<double>(m.length);
    m.mean_max_q = max_q_sum / static_cast<double>(m.length);
    return m;
}

EpisodeMetrics run_eval_episode(const Env& env, Policy& policy, double epsilon,
                                Rng& env_rng, Rng& policy_rng,
                                std::vector<FrameRecord>* trace,
                                std::vector<Observation>* frames) {
    EpisodeMetrics m;
    m.epsilon = epsilon;
    WorldState world = env.do_reset(env_rng);
    Observation obs = env.observe(world);
    double reward_sum = 0.0, max_q_sum = 0.0;
    while (true) {
        Tensor t = env.observation_tensor(obs);
        std::vector<double> q;
        int action = policy.act(t, world, env, policy_rng, &q);
        if (epsilon > 0.0 && policy_rng.uniform() < epsilon)
            action = static_cast<int>(policy_rng.uniform_int(kNumActions));
        StepResult sr = env.do_step(world, action);
        reward_sum += sr.reward;
        max_q_sum += max_of(q);
        m.length += 1;
        if (trace) trace->push_back({m.length, max_of(q), sr.reward});
        if (frames) frames->push_back(obs);
        world = sr.next;
        obs = env.observe(world);
        if (sr.status != EpisodeStatus::Continue) {
            m.success = sr.status == EpisodeStatus::Success;
            break;
        }
    }
    m.mean_reward = reward_sum / static_cast<double>(m.length);
    m.mean_max_q = max_q_sum / static_cast<double>(m.length);
    return m;
}

std::string metrics_csv_header() {
    return "episode,success,cumulative_successes,mean_reward,mean_max_q,length,"
           "epsilon\n";
}

std::string metrics_csv_row(const EpisodeMetrics& m) {
    std::ostringstream os;
    os << m.episode << "," << (m.success ? 1 : 0) << ","
       << m.cumulative_successes << "," << fmt_double(m.mean_reward) << ","
       << fmt_double(m.mean_max_q) << "," << m.length << ","
       << fmt_double(m.epsilon) << "\n";
    return os.str();
}

namespace {

struct TrainState {
    long episode = 0;
    long cumulative_successes = 0;
    Rng env_rng;
};

std::string ckpt_base(const std::string& dir, long episode) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "ckpt_ep%06ld", episode);
    return dir + "/" + buf;
}

void save_train_checkpoint(const std::string& base, const Agent& agent,
                           const TrainState& state, bool with_replay) {
    agent.save(base + ".ckpt", base + ".sidecar", with_replay, base + ".replay");
    std::ofstream f(base + ".sidecar", std::ios::app);
    f << "train_episode=" << state.episode << "\n";
    f << "cumulative_successes=" << state.cumulative_successes << "\n";
    f << "env_rng=" << state.env_rng.serialize() << "\n";
}

TrainState load_train_state(const std::string& sidecar) {
    TrainState s;
    std::ifstream f(sidecar);
    if (!f) throw std::runtime_error("cannot open checkpoint sidecar " + sidecar);
    std::string line;
    while (std::getline(f, line)) {
        auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        std::string key = line.substr(0, eq);
        std::string value = line.substr(eq + 1);
        if (key == "train_episode") s.episode = std::stol(value);
        else if (key == "cumulative_successes")
            s.cumulative_successes = std::stol(value);
        else if (key == "env_rng") s.env_rng.deserialize(value);
    }
    return s;
}

// Drop metrics rows past the resume point so the continued run rewrites them.
void truncate_metrics(const std::string& path, long keep_up_to) {
    std::ifstream in(path);
    if (!in) return;
    std::vector<std::string> kept;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (first) {
            kept.push_back(line);
            first = false;
            continue;
        }
        long ep = std::stol(line.substr(0, line.find(',')));
        if (ep <= keep_up_to) kept.push_back(line);
    }
    in.close();
    std::ofstream out(path, std::ios::trunc);
    for (const auto& l : kept) out << l << "\n";
}

std::string strip_suffix(const std::string& path, const std::string& suffix) {
    if (path.size() >= suffix.size() &&
        path.compare(path.size() - suffix.size(), suffix.size(), suffix) == 0)
        return path.substr(0, path.size() - suffix.size());
    return path;
}

}  // namespace

TrainResult train(const RunConfig& config, const std::string& resume_checkpoint) {
    config.validate();
    Env env = Env::from_config(config);
    std::string out_dir = resolve_output_dir(config);
    fs::create_directories(out_dir);

    {
        std::ofstream f(out_dir + "/resolved-config.cfg");
        if (!f) throw std::runtime_error("cannot write to output dir " + out_dir);
        f << config.to_text();
    }

    Agent agent(config.network_spec(), config.agent, config.schedule,
                config.seed);
    TrainState state;
    state.env_rng = Rng(config.seed * 2654435761u + 11);

    std::string metrics_path = out_dir + "/metrics.csv";
    if (!resume_checkpoint.empty()) {
        std::string base = strip_suffix(resume_checkpoint, ".ckpt");
        agent.load(base + ".ckpt", base + ".sidecar", config.checkpoint_replay,
                   base + ".replay");
        state = load_train_state(base + ".sidecar");
        truncate_metrics(metrics_path, state.episode);
    } else {
        std::ofstream f(metrics_path, std::ios::trunc);
        f << metrics_csv_header();
    }

    TrainResult result;
    result.metrics_path = metrics_path;
    std::ofstream metrics(metrics_path, std::ios::app);

    for (long ep = state.episode + 1; ep <= config.episodes; ++ep) {
        EpisodeMetrics m = run_train_episode(env, agent, state.env_rng);
        m.episode = ep;
        state.cumulative_successes += m.success ? 1 : 0;
        m.cumulative_successes = state.cumulative_successes;
        state.episode = ep;
        metrics << metrics_csv_row(m);
        metrics.flush();
        result.metrics.push_back(m);
        if (ep % config.checkpoint_every == 0 || ep == config.episodes) {
            std::string base = ckpt_base(out_dir, ep);
            save_train_checkpoint(base, agent, state, config.checkpoint_replay);
            result.final_checkpoint = base + ".ckpt";
        }
    }
    return result;
}

EvalReport evaluate(const Env& env, Policy& policy, long episodes,
                    double epsilon, std::uint64_t seed) {
    EvalReport report;
    report.episodes = episodes;
    report.epsilon = epsilon;
    Rng env_rng(seed * 2654435761u + 21);
    Rng policy_rng(seed * 2654435761u + 22);
    for (long ep = 1; ep <= episodes; ++ep) {
        EpisodeMetrics m =
            run_eval_episode(env, policy, epsilon, env_rng, policy_rng);
        m.episode = ep;
        report.successes += m.success ? 1 : 0;
        m.cumulative_successes = report.successes;
        report.per_episode.push_back(m);
    }
    report.success_rate = static_cast<double>(report.successes) /
                          static_cast<double>(episodes);
    return report;
}

std::string CrossEvalReport::to_csv() const {
    std::ostringstream os;
    os << "environment,agent_a,agent_b\n";
    os << "A," << fmt_double(a_in_a.success_rate) << ","
       << fmt_double(b_in_a.success_rate) << "\n";
    os << "B," << fmt_double(a_in_b.success_rate) << ","
       << fmt_double(b_in_b.success_rate) << "\n";
    return os.str();
}

CrossEvalReport cross_evaluate(Policy& agent_a, Policy& agent_b,
                               const Env& env_a, const Env& env_b,
                               long episodes, double epsilon,
                               std::uint64_t seed) {
    CrossEvalReport r;
    r.a_in_a = evaluate(env_a, agent_a, episodes, epsilon, seed);
    r.b_in_a = evaluate(env_a, agent_b, episodes, epsilon, seed);
    r.a_in_b = evaluate(env_b, agent_a, episodes, epsilon, seed + 1);
    r.b_in_b = evaluate(env_b, agent_b, episodes, epsilon, seed + 1);
    return r;
}

std::vector<FrameRecord> value_trace(const Env& env, Agent& agent,
                                     std::uint64_t seed,
                                     const std::string& out_dir) {
    fs::create_directories(out_dir);
    DqnPolicy policy(agent);
    Rng env_rng(seed * 2654435761u + 31);
    Rng policy_rng(seed * 2654435761u + 32);
    std::vector<FrameRecord> trace;
    std::vector<Observation> frames;
    run_eval_episode(env, policy, 0.0, env_rng, policy_rng, &trace, &frames);

    std::ofstream csv(out_dir + "/value_trace.csv");
    if (!csv) throw std::runtime_error("cannot write to " + out_dir);
    csv << "frame,max_q,reward\n";
    for (const auto& f : trace)
        csv << f.frame << "," << fmt_double(f.max_q) << ","
            << fmt_double(f.reward) << "\n";

    for (size_t i = 0; i < frames.size(); ++i) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "frame_%06zu.pgm", i + 1);
        write_pgm(frames[i], out_dir + "/" + buf);
    }
    return trace;
}

std::vector<std::string> activation_dump(const Agent& agent,
                                         const Tensor& observation,
                                         const std::string& out_dir) {
    fs::create_directories(out_dir);
    const NetworkSpec& spec = agent.spec();
    ForwardCache cache;
    network_forward(spec, agent.params(), observation, &cache);

    std::vector<std::string> written;
    int conv_index = 0;
    for (size_t li = 0; li + 1 < spec.layers.size(); ++li) {
        if (spec.layers[li].kind != LayerKind::Conv ||
            spec.layers[li + 1].kind != LayerKind::Relu)
            continue;
        ++conv_index;
        // relu input at li+1 is the conv output; apply the activation
        Tensor act = relu_forward(cache.layer_inputs[li + 1]);
        size_t C = act.shape[0], H = act.shape[1], W = act.shape[2];
        for (size_t c = 0; c < C; ++c) {
            const double* ch = act.data.data() + c * H * W;
            double lo = ch[0], hi = ch[0];
            for (size_t i = 1; i < H * W; ++i) {
                lo = std::min(lo, ch[i]);
                hi = std::max(hi, ch[i]);
            }
            Observation img;
            img.width = static_cast<int>(W);
            img.height = static_cast<int>(H);
            img.pixels.resize(H * W, 0.0);
            if (hi > lo)
                for (size_t i = 0; i < H * W; ++i)
                    img.pixels[i] = (ch[i] - lo) / (hi - lo);
            char buf[64];
            std::snprintf(buf, sizeof(buf), "activation_conv%d_ch%03zu.pgm",
                          conv_index, c);
            std::string path = out_dir + "/" + buf;
            write_pgm(img, path);
            written.push_back(path);
        }
    }
    return written;
}

}  // namespace qgrasp
