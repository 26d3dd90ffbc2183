#pragma once

#include <memory>
#include <string>
#include <vector>

#include "qgrasp/config.hpp"
#include "qgrasp/dqn.hpp"
#include "qgrasp/render.hpp"
#include "qgrasp/sim.hpp"

namespace qgrasp {

// Simulation, camera and reward parameters bundled into one steppable
// environment.
struct Env {
    KinematicChain chain;
    ResetSpec reset_spec;
    SimParams sim;
    CameraSpec camera;
    int obs_width = 64;
    int obs_height = 64;
    RenderStyle style;
    double cube_half_extent = 0.025;

    static Env from_config(const RunConfig& config);

    WorldState do_reset(Rng& rng) const;
    StepResult do_step(const WorldState& world, int action) const;
    Observation observe(const WorldState& world) const;
    Tensor observation_tensor(const Observation& obs) const;
};

// Action source for evaluation runs. Epsilon-greedy mixing is applied by
// the episode loop, not by the policy.
class Policy {
public:
    virtual ~Policy() = default;
    // q_out is filled with action values when the policy has them.
    virtual int act(const Tensor& obs, const WorldState& world, const Env& env,
                    Rng& rng, std::vector<double>* q_out) = 0;
};

class DqnPolicy : public Policy {
public:
    explicit DqnPolicy(const Agent& agent) : agent_(agent) {}
    int act(const Tensor& obs, const WorldState& world, const Env& env,
            Rng& rng, std::vector<double>* q_out) override;

private:
    const Agent& agent_;
};

class RandomPolicy : public Policy {
public:
    int act(const Tensor& obs, const WorldState& world, const Env& env,
            Rng& rng, std::vector<double>* q_out) override;
};

// Geometry-aware greedy controller: approach the cube, close, lift.
// Used as the known-good reference in evaluation protocol tests.
class ScriptedOraclePolicy : public Policy {
public:
    int act(const Tensor& obs, const WorldState& world, const Env& env,
            Rng& rng, std::vector<double>* q_out) override;
};

struct EpisodeMetrics {
    long episode = 0;
    bool success = false;
    long cumulative_successes = 0;
    double mean_reward = 0.0;
    double mean_max_q = 0.0;
    long length = 0;
    double epsilon = 0.0;
};

struct FrameRecord {
    long frame = 0;
    double max_q = 0.0;
    double reward = 0.0;
};

EpisodeMetrics run_train_episode(const Env& env, Agent& agent, Rng& env_rng);

EpisodeMetrics run_eval_episode(const Env& env, Policy& policy, double epsilon,
                                Rng& env_rng, Rng& policy_rng,
                                std::vector<FrameRecord>* trace = nullptr,
                                std::vector<Observation>* frames = nullptr);

std::string metrics_csv_header();
std::string metrics_csv_row(const EpisodeMetrics& m);

struct TrainResult {
    std::vector<EpisodeMetrics> metrics;
    std::string metrics_path;
    std::string final_checkpoint;
};

// Runs config.episodes training episodes, appending one metrics row per
// episode and checkpointing every config.checkpoint_every episodes.
// resume_checkpoint may name an earlier checkpoint (.ckpt path) to
// continue from; the run then reproduces an uninterrupted one exactly.
TrainResult train(const RunConfig& config,
                  const std::string& resume_checkpoint = "");

struct EvalReport {
    long episodes = 0;
    double epsilon = 0.0;
    long successes = 0;
    double success_rate = 0.0;
    std::vector<EpisodeMetrics> per_episode;
};

EvalReport evaluate(const Env& env, Policy& policy, long episodes,
                    double epsilon, std::uint64_t seed);

// Table-layout success matrix: rows are environments, columns agents.
struct CrossEvalReport {
    EvalReport a_in_a, b_in_a, a_in_b, b_in_b;
    std::string to_csv() const;
};

CrossEvalReport cross_evaluate(Policy& agent_a, Policy& agent_b,
                               const Env& env_a, const Env& env_b,
                               long episodes, double epsilon,
                               std::uint64_t seed);

// One greedy episode; writes frame,max_q,reward rows and a graymap per frame.
std::vector<FrameRecord> value_trace(const Env& env, Agent& agent,
                                     std::uint64_t seed,
                                     const std::string& out_dir);

// Writes every conv layer's post-activation channels as normalized graymaps.
// Returns the written file names.
std::vector<std::string> activation_dump(const Agent& agent,
                                         const Tensor& observation,
                                         const std::string& out_dir);

}  // namespace qgrasp
