#pragma once

#include <string>
#include <vector>

#include "qgrasp/net.hpp"
#include "qgrasp/rng.hpp"

namespace qgrasp {

struct Transition {
    std::vector<double> observation;
    int action = 0;
    double reward = 0.0;
    std::vector<double> next_observation;
    bool terminal = false;
};

// FIFO ring of transitions.
class ReplayBuffer {
public:
    explicit ReplayBuffer(size_t capacity);

    void push(Transition t);
    // Uniform sampling with replacement; rejects an underfull buffer.
    std::vector<const Transition*> sample(size_t batch_size, Rng& rng) const;

    size_t size() const { return storage_.size(); }
    size_t capacity() const { return capacity_; }
    std::uint64_t insert_count() const { return insert_count_; }
    // i = 0 is the oldest element still stored.
    const Transition& at(size_t i) const;

    void save(const std::string& path) const;
    void load(const std::string& path);

private:
    size_t capacity_;
    std::vector<Transition> storage_;
    size_t next_ = 0;
    std::uint64_t insert_count_ = 0;
};

struct EpsilonSchedule {
    double start = 1.0;
    double end = 0.1;
    long anneal_span = 1000000;
};

// Linear interpolation from start to end, constant afterwards.
double epsilon_at(const EpsilonSchedule& schedule, long step);

// epsilon-greedy over q-values; greedy ties break toward the lowest id.
int select_action(const std::vector<double>& q_values, double epsilon, Rng& rng);

double td_target(double reward, bool terminal, double max_next_q, double gamma);

struct AgentConfig {
    double discount = 0.99;
    double learning_rate = 6e-6;
    size_t batch_size = 32;
    long target_sync_period = 1000;
    size_t min_replay_before_learning = 1000;
    size_t replay_capacity = 500000;
    long update_period = 1;   // learn every N environment steps
    double grad_clip = 0.0;   // global gradient-norm cap; 0 disables

    void validate() const;
};

struct LossResult {
    double loss = 0.0;
    NetworkGrads gradients;
};

// Mean squared TD error over the batch; the target side is constant and
// gradient flows only through the taken action's online output.
LossResult loss_and_gradients(const std::vector<const Transition*>& batch,
                              const NetworkSpec& spec,
                              const NetworkParams& online,
                              const NetworkParams& target, double gamma);

NetworkParams sync_target(const NetworkParams& online);

// Online network, target copy, Adam state, and replay glued together.
class Agent {
public:
    Agent(NetworkSpec spec, const AgentConfig& config,
          const EpsilonSchedule& schedule, std::uint64_t seed);

    std::vector<double> q_values(const Tensor& observation) const;
    int act(const Tensor& observation, double epsilon);
    // epsilon-greedy over already computed q-values, using the agent's
    // action stream.
    int choose_action(const std::vector<double>& q, double epsilon);

    // Pushes the transition and, once warm, performs a learning update.
    // Returns the batch loss when an update ran.
    double train_step(Transition transition);

    long global_step() const { return global_step_; }
    double current_epsilon() const { return epsilon_at(schedule_, global_step_); }

    const NetworkSpec& spec() const { return spec_; }
    const NetworkParams& params() const { return params_; }
    const NetworkParams& target_params() const { return target_; }
    const AgentConfig& config() const { return config_; }
    const ReplayBuffer& buffer() const { return buffer_; }

    // Checkpoint: tensor file with online/target/adam groups, plus a text
    // sidecar carrying counters and random-stream state. Loading restores
    // training exactly (the replay buffer travels in its own file).
    void save(const std::string& checkpoint_path,
              const std::string& sidecar_path, bool with_replay,
              const std::string& replay_path) const;
    void load(const std::string& checkpoint_path,
              const std::string& sidecar_path, bool with_replay,
              const std::string& replay_path);

    // Params-only load for evaluation of a checkpoint.
    void load_params_only(const std::string& checkpoint_path);

    // FNV-1a over all parameter bytes; used by no-mutation checks.
    std::uint64_t param_checksum() const;

private:
    NetworkSpec spec_;
    AgentConfig config_;
    EpsilonSchedule schedule_;
    NetworkParams params_;
    NetworkParams target_;
    AdamState adam_;
    ReplayBuffer buffer_;
    Rng act_rng_;
    Rng sample_rng_;
    long global_step_ = 0;
};

}  // namespace qgrasp
