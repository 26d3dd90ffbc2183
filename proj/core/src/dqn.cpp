#include "qgrasp/dqn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace qgrasp {

ReplayBuffer::ReplayBuffer(size_t capacity) : capacity_(capacity) {
    if (capacity_ == 0)
        throw std::invalid_argument("replay buffer capacity must be >= 1");
}

void ReplayBuffer::push(Transition t) {
    if (storage_.size() < capacity_) {
        storage_.push_back(std::move(t));
    } else {
        storage_[next_] = std::move(t);
        next_ = (next_ + 1) % capacity_;
    }
    ++insert_count_;
}

const Transition& ReplayBuffer::at(size_t i) const {
    if (i >= storage_.size())
        throw std::out_of_range("replay buffer index out of range");
    if (storage_.size() < capacity_) return storage_[i];
    return storage_[(next_ + i) % capacity_];
}

std::vector<const Transition*> ReplayBuffer::sample(size_t batch_size,
                                                    Rng& rng) const {
    if (storage_.size() < batch_size)
        throw std::invalid_argument("replay buffer holds " +
                                    std::to_string(storage_.size()) +
                                    " transitions, need " +
                                    std::to_string(batch_size));
    std::vector<const Transition*> batch;
    batch.reserve(batch_size);
    for (size_t i = 0; i < batch_size; ++i)
        batch.push_back(&storage_[rng.uniform_int(storage_.size())]);
    return batch;
}

namespace {

void write_u64_le(std::ostream& os, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t read_u64_le(std::istream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

void write_f64_le(std::ostream& os, double d) {
    std::uint64_t bits;
    std::memcpy(&bits, &d, 8);
    write_u64_le(os, bits);
}

double read_f64_le(std::istream& is) {
    std::uint64_t bits = read_u64_le(is);
    double d;
    std::memcpy(&d, &bits, 8);
    return d;
}

constexpr char kReplayMagic[8] = {'Q', 'G', 'R', 'B', 'U', 'F', '1', '\n'};

}  // namespace

void ReplayBuffer::save(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("replay save: cannot open " + path);
    f.write(kReplayMagic, sizeof(kReplayMagic));
    write_u64_le(f, capacity_);
    write_u64_le(f, storage_.size());
    write_u64_le(f, next_);
    write_u64_le(f, insert_count_);
    for (const auto& t : storage_) {
        write_u64_le(f, t.observation.size());
        for (double v : t.observation) write_f64_le(f, v);
        write_u64_le(f, static_cast<std::uint64_t>(t.action));
        write_f64_le(f, t.reward);
        write_u64_le(f, t.next_observation.size());
        for (double v : t.next_observation) write_f64_le(f, v);
        write_u64_le(f, t.terminal ? 1 : 0);
    }
    if (!f) throw std::runtime_error("replay save: write failed for " + path);
}

void ReplayBuffer::load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("replay load: cannot open " + path);
    char magic[8];
    f.read(magic, 8);
    if (!f || std::memcmp(magic, kReplayMagic, 8) != 0)
        throw std::runtime_error("replay load: bad magic in " + path);
    capacity_ = read_u64_le(f);
    size_t n = read_u64_le(f);
    next_ = read_u64_le(f);
    insert_count_ = read_u64_le(f);
    storage_.assign(n, {});
    for (auto& t : storage_) {
        t.observation.resize(read_u64_le(f));
        for (double& v : t.observation) v = read_f64_le(f);
        t.action = static_cast<int>(read_u64_le(f));
        t.reward = read_f64_le(f);
        t.next_observation.resize(read_u64_le(f));
        for (double& v : t.next_observation) v = read_f64_le(f);
        t.terminal = read_u64_le(f) != 0;
    }
    if (!f) throw std::runtime_error("replay load: truncated file " + path);
}

double epsilon_at(const EpsilonSchedule& s, long step) {
    if (step <= 0) return s.start;
    if (step >= s.anneal_span) return s.end;
    double frac = static_cast<double>(step) / static_cast<double>(s.anneal_span);
    return s.start + (s.end - s.start) * frac;
}

int select_action(const std::vector<double>& q_values, double epsilon, Rng& rng) {
    if (q_values.empty())
        throw std::invalid_argument("select_action: empty q-value vector");
    if (epsilon > 0.0 && rng.uniform() < epsilon)
        return static_cast<int>(rng.uniform_int(q_values.size()));
    int best = 0;
    for (int a = 1; a < static_cast<int>(q_values.size()); ++a)
        if (q_values[a] > q_values[best]) best = a;
    return best;
}

double td_target(double reward, bool terminal, double max_next_q, double gamma) {
    return terminal ? reward : reward + gamma * max_next_q;
}

void AgentConfig::validate() const {
    if (!(discount >= 0.0 && discount < 1.0))
        throw std::invalid_argument("agent: discount must be in [0, 1)");
    if (batch_size < 1)
        throw std::invalid_argument("agent: batch_size must be >= 1");
    if (target_sync_period < 1)
        throw std::invalid_argument("agent: target_sync_period must be >= 1");
    if (update_period < 1)
        throw std::invalid_argument("agent: update_period must be >= 1");
    if (!(learning_rate > 0.0))
        throw std::invalid_argument("agent: learning_rate must be > 0");
    if (grad_clip < 0.0)
        throw std::invalid_argument("agent: grad_clip must be >= 0");
    if (replay_capacity < 1)
        throw std::invalid_argument("agent: replay_capacity must be >= 1");
    if (min_replay_before_learning > replay_capacity)
        throw std::invalid_argument(
            "agent: min_replay_before_learning exceeds replay_capacity");
}

LossResult loss_and_gradients(const std::vector<const Transition*>& batch,
                              const NetworkSpec& spec,
                              const NetworkParams& online,
                              const NetworkParams& target, double gamma) {
    if (batch.empty())
        throw std::invalid_argument("loss_and_gradients: empty batch");
    LossResult result;
    result.gradients = zero_grads_like(online);
    double inv_n = 1.0 / static_cast<double>(batch.size());
    std::vector<size_t> in_shape{spec.input_channels, spec.input_height,
                                 spec.input_width};
    for (const Transition* t : batch) {
        double max_next_q = 0.0;
        if (!t->terminal) {
            Tensor next_obs;
            next_obs.shape = in_shape;
            next_obs.data = t->next_observation;
            Tensor q_next = network_forward(spec, target, next_obs);
            max_next_q = *std::max_element(q_next.data.begin(), q_next.data.end());
        }
        double y = td_target(t->reward, t->terminal, max_next_q, gamma);

        Tensor obs;
        obs.shape = in_shape;
        obs.data = t->observation;
        ForwardCache cache;
        Tensor q = network_forward(spec, online, obs, &cache);
        double err = q.data[static_cast<size_t>(t->action)] - y;
        result.loss += err * err * inv_n;

        Tensor d_out(q.shape);
        d_out.data[static_cast<size_t>(t->action)] = 2.0 * err * inv_n;
        NetworkGrads g = network_backward(spec, online, cache, d_out);
        accumulate(result.gradients, g);
    }
    return result;
}

NetworkParams sync_target(const NetworkParams& online) { return online; }

Agent::Agent(NetworkSpec spec, const AgentConfig& config,
             const EpsilonSchedule& schedule, std::uint64_t seed)
    : spec_(std::move(spec)),
      config_(config),
      schedule_(schedule),
      buffer_(config.replay_capacity),
      act_rng_(seed * 2654435761u + 1),
      sample_rng_(seed * 2654435761u + 2) {
    config_.validate();
    Rng init_rng(seed * 2654435761u + 3);
    params_ = init_params(spec_, init_rng);
    target_ = sync_target(params_);
    adam_ = AdamState::for_params(params_, config_.learning_rate);
}

std::vector<double> Agent::q_values(const Tensor& observation) const {
    return network_forward(spec_, params_, observation).data;
}

int Agent::act(const Tensor& observation, double epsilon) {
    return select_action(q_values(observation), epsilon, act_rng_);
}

int Agent::choose_action(const std::vector<double>& q, double epsilon) {
    return select_action(q, epsilon, act_rng_);
}

double Agent::train_step(Transition transition) {
    buffer_.push(std::move(transition));
    global_step_ += 1;
    double loss = 0.0;
    if (buffer_.size() >= config_.min_replay_before_learning &&
        buffer_.size() >= config_.batch_size &&
        global_step_ % config_.update_period == 0) {
        auto batch = buffer_.sample(config_.batch_size, sample_rng_);
        LossResult lr =
            loss_and_gradients(batch, spec_, params_, target_, config_.discount);
        if (config_.grad_clip > 0.0) {
            double norm = grad_norm(lr.gradients);
            if (norm > config_.grad_clip)
                scale(lr.gradients, config_.grad_clip / norm);
        }
        adam_step(params_, lr.gradients, adam_);
        loss = lr.loss;
    }
    if (global_step_ % config_.target_sync_period == 0)
        target_ = sync_target(params_);
    return loss;
}

void Agent::save(const std::string& checkpoint_path,
                 const std::string& sidecar_path, bool with_replay,
                 const std::string& replay_path) const {
    std::vector<TensorGroup> groups = params_to_groups(params_, "online");
    auto tg = params_to_groups(target_, "target");
    groups.insert(groups.end(), tg.begin(), tg.end());
    groups.push_back({"adam.m_weights", adam_.m_weights});
    groups.push_back({"adam.v_weights", adam_.v_weights});
    groups.push_back({"adam.m_biases", adam_.m_biases});
    groups.push_back({"adam.v_biases", adam_.v_biases});
    save_checkpoint(checkpoint_path, groups);

    std::ofstream f(sidecar_path);
    if (!f) throw std::runtime_error("agent save: cannot open " + sidecar_path);
    f << "global_step=" << global_step_ << "\n";
    f << "adam_t=" << adam_.t << "\n";
    f << "epsilon_step=" << global_step_ << "\n";
    f << "act_rng=" << act_rng_.serialize() << "\n";
    f << "sample_rng=" << sample_rng_.serialize() << "\n";
    if (!f) throw std::runtime_error("agent save: write failed");

    if (with_replay) buffer_.save(replay_path);
}

void Agent::load(const std::string& checkpoint_path,
                 const std::string& sidecar_path, bool with_replay,
                 const std::string& replay_path) {
    auto groups = load_checkpoint(checkpoint_path);
    NetworkParams p = params_from_groups(groups, "online");
    if (!p.same_shape(params_))
        throw std::runtime_error("agent load: checkpoint shapes do not match spec");
    params_ = std::move(p);
    target_ = params_from_groups(groups, "target");
    for (const auto& g : groups) {
        if (g.name == "adam.m_weights") adam_.m_weights = g.tensors;
        if (g.name == "adam.v_weights") adam_.v_weights = g.tensors;
        if (g.name == "adam.m_biases") adam_.m_biases = g.tensors;
        if (g.name == "adam.v_biases") adam_.v_biases = g.tensors;
    }

    std::ifstream f(sidecar_path);
    if (!f) throw std::runtime_error("agent load: cannot open " + sidecar_path);
    std::string line;
    while (std::getline(f, line)) {
        auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        std::string key = line.substr(0, eq);
        std::string value = line.substr(eq + 1);
        if (key == "global_step") global_step_ = std::stol(value);
        else if (key == "adam_t") adam_.t = std::stol(value);
        else if (key == "act_rng") act_rng_.deserialize(value);
        else if (key == "sample_rng") sample_rng_.deserialize(value);
    }

    if (with_replay) buffer_.load(replay_path);
}

void Agent::load_params_only(const std::string& checkpoint_path) {
    auto groups = load_checkpoint(checkpoint_path);
    NetworkParams p = params_from_groups(groups, "online");
    if (!p.same_shape(params_))
        throw std::runtime_error("agent load: checkpoint shapes do not match spec");
    params_ = std::move(p);
    target_ = sync_target(params_);
}

std::uint64_t Agent::param_checksum() const {
    std::uint64_t h = 1469598103934665603ull;
    auto mix = [&h](const std::vector<Tensor>& ts) {
        for (const auto& t : ts)
            for (double v : t.data) {
                std::uint64_t bits;
                std::memcpy(&bits, &v, 8);
                for (int i = 0; i < 8; ++i) {
                    h ^= (bits >> (8 * i)) & 0xff;
                    h *= 1099511628211ull;
                }
            }
    };
    mix(params_.weights);
    mix(params_.biases);
    return h;
}

}  // namespace qgrasp
