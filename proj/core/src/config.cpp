#include "qgrasp/config.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>

namespace qgrasp {

namespace {

std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_commas(const std::string& s) {
    std::vector<std::string> parts;
    std::string cur;
    std::istringstream is(s);
    while (std::getline(is, cur, ',')) parts.push_back(trim(cur));
    return parts;
}

double to_double(const std::string& v) {
    size_t pos = 0;
    double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("bad number '" + v + "'");
    return d;
}

long to_long(const std::string& v) {
    size_t pos = 0;
    long l = std::stol(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("bad integer '" + v + "'");
    return l;
}

bool to_bool(const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw std::invalid_argument("bad boolean '" + v + "'");
}

Vec3 to_vec3(const std::string& v) {
    auto parts = split_commas(v);
    if (parts.size() != 3)
        throw std::invalid_argument("expected 3 comma-separated values");
    return {to_double(parts[0]), to_double(parts[1]), to_double(parts[2])};
}

std::array<double, 6> to_six(const std::string& v) {
    auto parts = split_commas(v);
    if (parts.size() != 6)
        throw std::invalid_argument("expected 6 comma-separated values");
    std::array<double, 6> out{};
    for (size_t i = 0; i < 6; ++i) out[i] = to_double(parts[i]);
    return out;
}

std::array<size_t, 3> to_three_sizes(const std::string& v) {
    auto parts = split_commas(v);
    if (parts.size() != 3)
        throw std::invalid_argument("expected 3 comma-separated values");
    std::array<size_t, 3> out{};
    for (size_t i = 0; i < 3; ++i) {
        long l = to_long(parts[i]);
        if (l < 1) throw std::invalid_argument("value must be >= 1");
        out[i] = static_cast<size_t>(l);
    }
    return out;
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string fmt(const Vec3& v) {
    return fmt(v.x) + "," + fmt(v.y) + "," + fmt(v.z);
}

std::string fmt6(const std::array<double, 6>& a) {
    std::string s;
    for (size_t i = 0; i < 6; ++i) s += (i ? "," : "") + fmt(a[i]);
    return s;
}

using Setter = std::function<void(RunConfig&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
    static const std::map<std::string, Setter> table = [] {
        std::map<std::string, Setter> m;
        m["run.seed"] = [](RunConfig& c, const std::string& v) {
            c.seed = static_cast<std::uint64_t>(std::stoull(v));
        };
        m["run.output_dir"] = [](RunConfig& c, const std::string& v) {
            c.output_dir = v;
        };
        m["run.episodes"] = [](RunConfig& c, const std::string& v) {
            c.episodes = to_long(v);
        };
        m["run.checkpoint_every"] = [](RunConfig& c, const std::string& v) {
            c.checkpoint_every = to_long(v);
        };
        m["run.checkpoint_replay"] = [](RunConfig& c, const std::string& v) {
            c.checkpoint_replay = to_bool(v);
        };
        for (size_t k = 0; k < 6; ++k) {
            m["chain.axis" + std::to_string(k)] =
                [k](RunConfig& c, const std::string& v) {
                    c.chain.links[k].rotation_axis = to_vec3(v);
                };
        }
        m["chain.lengths"] = [](RunConfig& c, const std::string& v) {
            auto a = to_six(v);
            for (size_t k = 0; k < 6; ++k) c.chain.links[k].length = a[k];
        };
        m["chain.joint_min"] = [](RunConfig& c, const std::string& v) {
            auto a = to_six(v);
            for (size_t k = 0; k < 6; ++k) c.chain.links[k].joint_min_deg = a[k];
        };
        m["chain.joint_max"] = [](RunConfig& c, const std::string& v) {
            auto a = to_six(v);
            for (size_t k = 0; k < 6; ++k) c.chain.links[k].joint_max_deg = a[k];
        };
        m["chain.base_position"] = [](RunConfig& c, const std::string& v) {
            c.chain.base_position = to_vec3(v);
        };
        m["chain.gripper_reach"] = [](RunConfig& c, const std::string& v) {
            c.chain.gripper_reach = to_double(v);
        };
        m["sim.grasp_radius"] = [](RunConfig& c, const std::string& v) {
            c.sim.grasp_radius = to_double(v);
        };
        m["sim.reward_decay"] = [](RunConfig& c, const std::string& v) {
            c.sim.reward_decay = to_double(v);
        };
        m["sim.cube_half_extent"] = [](RunConfig& c, const std::string& v) {
            c.cube_half_extent = to_double(v);
        };
        m["sim.controlled_joints"] = [](RunConfig& c, const std::string& v) {
            c.sim.joint_controlled.fill(false);
            for (const auto& p : split_commas(v)) {
                long k = to_long(p);
                if (k < 0 || k > 5)
                    throw std::invalid_argument("joint index out of range");
                c.sim.joint_controlled[static_cast<size_t>(k)] = true;
            }
        };
        m["reset.mode"] = [](RunConfig& c, const std::string& v) {
            if (v == "fixed") c.reset.mode = ResetMode::Fixed;
            else if (v == "randomized") c.reset.mode = ResetMode::Randomized;
            else throw std::invalid_argument("mode must be fixed or randomized");
        };
        m["reset.base_joint_angles"] = [](RunConfig& c, const std::string& v) {
            c.reset.base_joint_angles_deg = to_six(v);
        };
        m["reset.joint_jitter"] = [](RunConfig& c, const std::string& v) {
            c.reset.joint_jitter_deg = to_double(v);
        };
        m["reset.cube_position"] = [](RunConfig& c, const std::string& v) {
            c.reset.cube_base_position = to_vec3(v);
        };
        m["reset.cube_region"] = [](RunConfig& c, const std::string& v) {
            auto parts = split_commas(v);
            if (parts.size() != 2)
                throw std::invalid_argument("expected width,depth");
            c.reset.cube_region_width = to_double(parts[0]);
            c.reset.cube_region_depth = to_double(parts[1]);
        };
        m["reset.lift_height"] = [](RunConfig& c, const std::string& v) {
            c.reset.lift_height = to_double(v);
        };
        m["reset.max_episode_steps"] = [](RunConfig& c, const std::string& v) {
            c.reset.max_episode_steps = to_long(v);
        };
        m["camera.view_direction"] = [](RunConfig& c, const std::string& v) {
            c.camera.view_direction = to_vec3(v);
        };
        m["camera.up"] = [](RunConfig& c, const std::string& v) {
            c.camera.up = to_vec3(v);
        };
        m["camera.center"] = [](RunConfig& c, const std::string& v) {
            c.camera.center = to_vec3(v);
        };
        m["camera.scale"] = [](RunConfig& c, const std::string& v) {
            c.camera.scale = to_double(v);
        };
        m["obs.width"] = [](RunConfig& c, const std::string& v) {
            c.obs_width = static_cast<int>(to_long(v));
        };
        m["obs.height"] = [](RunConfig& c, const std::string& v) {
            c.obs_height = static_cast<int>(to_long(v));
        };
        m["render.background"] = [](RunConfig& c, const std::string& v) {
            c.style.background = to_double(v);
        };
        m["render.table"] = [](RunConfig& c, const std::string& v) {
            c.style.table = to_double(v);
        };
        m["render.arm"] = [](RunConfig& c, const std::string& v) {
            c.style.arm = to_double(v);
        };
        m["render.gripper_open"] = [](RunConfig& c, const std::string& v) {
            c.style.gripper_open = to_double(v);
        };
        m["render.gripper_closed"] = [](RunConfig& c, const std::string& v) {
            c.style.gripper_closed = to_double(v);
        };
        m["render.cube"] = [](RunConfig& c, const std::string& v) {
            c.style.cube = to_double(v);
        };
        m["render.arm_thickness"] = [](RunConfig& c, const std::string& v) {
            c.style.arm_thickness_px = to_double(v);
        };
        m["render.gripper_radius"] = [](RunConfig& c, const std::string& v) {
            c.style.gripper_radius_px = to_double(v);
        };
        m["net.conv_channels"] = [](RunConfig& c, const std::string& v) {
            c.conv_channels = to_three_sizes(v);
        };
        m["net.conv_kernels"] = [](RunConfig& c, const std::string& v) {
            c.conv_kernels = to_three_sizes(v);
        };
        m["net.conv_strides"] = [](RunConfig& c, const std::string& v) {
            c.conv_strides = to_three_sizes(v);
        };
        m["net.hidden"] = [](RunConfig& c, const std::string& v) {
            long l = to_long(v);
            if (l < 1) throw std::invalid_argument("hidden must be >= 1");
            c.hidden_units = static_cast<size_t>(l);
        };
        m["agent.discount"] = [](RunConfig& c, const std::string& v) {
            c.agent.discount = to_double(v);
        };
        m["agent.learning_rate"] = [](RunConfig& c, const std::string& v) {
            c.agent.learning_rate = to_double(v);
        };
        m["agent.batch_size"] = [](RunConfig& c, const std::string& v) {
            long l = to_long(v);
            if (l < 1) throw std::invalid_argument("batch_size must be >= 1");
            c.agent.batch_size = static_cast<size_t>(l);
        };
        m["agent.target_sync_period"] = [](RunConfig& c, const std::string& v) {
            c.agent.target_sync_period = to_long(v);
        };
        m["agent.min_replay"] = [](RunConfig& c, const std::string& v) {
            long l = to_long(v);
            if (l < 0) throw std::invalid_argument("min_replay must be >= 0");
            c.agent.min_replay_before_learning = static_cast<size_t>(l);
        };
        m["agent.replay_capacity"] = [](RunConfig& c, const std::string& v) {
            long l = to_long(v);
            if (l < 1) throw std::invalid_argument("replay_capacity must be >= 1");
            c.agent.replay_capacity = static_cast<size_t>(l);
        };
        m["agent.update_period"] = [](RunConfig& c, const std::string& v) {
            c.agent.update_period = to_long(v);
        };
        m["agent.grad_clip"] = [](RunConfig& c, const std::string& v) {
            c.agent.grad_clip = to_double(v);
        };
        m["schedule.eps_start"] = [](RunConfig& c, const std::string& v) {
            c.schedule.start = to_double(v);
        };
        m["schedule.eps_end"] = [](RunConfig& c, const std::string& v) {
            c.schedule.end = to_double(v);
        };
        m["schedule.anneal_span"] = [](RunConfig& c, const std::string& v) {
            c.schedule.anneal_span = to_long(v);
        };
        m["eval.episodes"] = [](RunConfig& c, const std::string& v) {
            c.eval_episodes = to_long(v);
        };
        m["eval.epsilon"] = [](RunConfig& c, const std::string& v) {
            c.eval_epsilon = to_double(v);
        };
        return m;
    }();
    return table;
}

}  // namespace

KinematicChain RunConfig::default_chain() {
    KinematicChain c;
    c.base_position = {0, 0, 0};
    c.gripper_reach = 0.05;
    std::array<Vec3, 6> axes = {Vec3{0, 1, 0}, Vec3{0, 0, 1}, Vec3{0, 0, 1},
                                Vec3{0, 0, 1}, Vec3{1, 0, 0}, Vec3{0, 0, 1}};
    std::array<double, 6> lengths = {0.30, 0.25, 0.20, 0.15, 0.10, 0.08};
    for (size_t k = 0; k < 6; ++k) {
        c.links[k].rotation_axis = axes[k];
        c.links[k].length = lengths[k];
        c.links[k].joint_min_deg = -135.0;
        c.links[k].joint_max_deg = 135.0;
    }
    return c;
}

ResetSpec RunConfig::default_reset() {
    ResetSpec r;
    r.mode = ResetMode::Fixed;
    r.base_joint_angles_deg = {0, 45, -60, -45, 0, 0};
    r.joint_jitter_deg = 20.0;
    r.cube_base_position = {0.3, 0.0, 0.0};
    r.lift_height = 0.30;
    r.max_episode_steps = 1000;
    return r;
}

NetworkSpec RunConfig::network_spec() const {
    return NetworkSpec::standard(static_cast<size_t>(obs_height),
                                 static_cast<size_t>(obs_width), conv_channels,
                                 conv_kernels, conv_strides, hidden_units,
                                 kNumActions);
}

void RunConfig::validate() const {
    chain.validate();
    reset.validate();
    camera.validate();
    agent.validate();
    if (obs_width < 1 || obs_height < 1)
        throw std::invalid_argument("obs: image size must be positive");
    if (!(sim.grasp_radius > 0.0))
        throw std::invalid_argument("sim: grasp_radius must be > 0");
    if (!(sim.reward_decay > 0.0))
        throw std::invalid_argument("sim: reward_decay must be > 0");
    if (!(cube_half_extent > 0.0))
        throw std::invalid_argument("sim: cube_half_extent must be > 0");
    if (!(schedule.end >= 0.0 && schedule.end <= schedule.start &&
          schedule.start <= 1.0))
        throw std::invalid_argument(
            "schedule: need 0 <= eps_end <= eps_start <= 1");
    if (schedule.anneal_span < 1)
        throw std::invalid_argument("schedule: anneal_span must be >= 1");
    if (episodes < 1) throw std::invalid_argument("run: episodes must be >= 1");
    if (checkpoint_every < 1)
        throw std::invalid_argument("run: checkpoint_every must be >= 1");
    if (eval_episodes < 1)
        throw std::invalid_argument("eval: episodes must be >= 1");
    if (!(eval_epsilon >= 0.0 && eval_epsilon <= 1.0))
        throw std::invalid_argument("eval: epsilon must be in [0, 1]");
    if (std::abs(reset.cube_base_position.y) > 0.0)
        throw std::invalid_argument("reset: cube_position must have y = 0");
    network_spec();  // validates layer shape chaining
}

std::string RunConfig::to_text() const {
    std::ostringstream os;
    os << "run.seed = " << seed << "\n";
    os << "run.output_dir = " << output_dir << "\n";
    os << "run.episodes = " << episodes << "\n";
    os << "run.checkpoint_every = " << checkpoint_every << "\n";
    os << "run.checkpoint_replay = " << (checkpoint_replay ? "true" : "false")
       << "\n";
    for (size_t k = 0; k < 6; ++k)
        os << "chain.axis" << k << " = " << fmt(chain.links[k].rotation_axis)
           << "\n";
    std::array<double, 6> lengths{}, mins{}, maxs{};
    for (size_t k = 0; k < 6; ++k) {
        lengths[k] = chain.links[k].length;
        mins[k] = chain.links[k].joint_min_deg;
        maxs[k] = chain.links[k].joint_max_deg;
    }
    os << "chain.lengths = " << fmt6(lengths) << "\n";
    os << "chain.joint_min = " << fmt6(mins) << "\n";
    os << "chain.joint_max = " << fmt6(maxs) << "\n";
    os << "chain.base_position = " << fmt(chain.base_position) << "\n";
    os << "chain.gripper_reach = " << fmt(chain.gripper_reach) << "\n";
    os << "sim.grasp_radius = " << fmt(sim.grasp_radius) << "\n";
    os << "sim.reward_decay = " << fmt(sim.reward_decay) << "\n";
    os << "sim.cube_half_extent = " << fmt(cube_half_extent) << "\n";
    os << "sim.controlled_joints = ";
    bool first = true;
    for (size_t k = 0; k < 6; ++k)
        if (sim.joint_controlled[k]) {
            os << (first ? "" : ",") << k;
            first = false;
        }
    os << "\n";
    os << "reset.mode = "
       << (reset.mode == ResetMode::Fixed ? "fixed" : "randomized") << "\n";
    os << "reset.base_joint_angles = " << fmt6(reset.base_joint_angles_deg)
       << "\n";
    os << "reset.joint_jitter = " << fmt(reset.joint_jitter_deg) << "\n";
    os << "reset.cube_position = " << fmt(reset.cube_base_position) << "\n";
    os << "reset.cube_region = " << fmt(reset.cube_region_width) << ","
       << fmt(reset.cube_region_depth) << "\n";
    os << "reset.lift_height = " << fmt(reset.lift_height) << "\n";
    os << "reset.max_episode_steps = " << reset.max_episode_steps << "\n";
    os << "camera.view_direction = " << fmt(camera.view_direction) << "\n";
    os << "camera.up = " << fmt(camera.up) << "\n";
    os << "camera.center = " << fmt(camera.center) << "\n";
    os << "camera.scale = " << fmt(camera.scale) << "\n";
    os << "obs.width = " << obs_width << "\n";
    os << "obs.height = " << obs_height << "\n";
    os << "render.background = " << fmt(style.background) << "\n";
    os << "render.table = " << fmt(style.table) << "\n";
    os << "render.arm = " << fmt(style.arm) << "\n";
    os << "render.gripper_open = " << fmt(style.gripper_open) << "\n";
    os << "render.gripper_closed = " << fmt(style.gripper_closed) << "\n";
    os << "render.cube = " << fmt(style.cube) << "\n";
    os << "render.arm_thickness = " << fmt(style.arm_thickness_px) << "\n";
    os << "render.gripper_radius = " << fmt(style.gripper_radius_px) << "\n";
    os << "net.conv_channels = " << conv_channels[0] << "," << conv_channels[1]
       << "," << conv_channels[2] << "\n";
    os << "net.conv_kernels = " << conv_kernels[0] << "," << conv_kernels[1]
       << "," << conv_kernels[2] << "\n";
    os << "net.conv_strides = " << conv_strides[0] << "," << conv_strides[1]
       << "," << conv_strides[2] << "\n";
    os << "net.hidden = " << hidden_units << "\n";
    os << "agent.discount = " << fmt(agent.discount) << "\n";
    os << "agent.learning_rate = " << fmt(agent.learning_rate) << "\n";
    os << "agent.batch_size = " << agent.batch_size << "\n";
    os << "agent.target_sync_period = " << agent.target_sync_period << "\n";
    os << "agent.min_replay = " << agent.min_replay_before_learning << "\n";
    os << "agent.replay_capacity = " << agent.replay_capacity << "\n";
    os << "agent.update_period = " << agent.update_period << "\n";
    os << "agent.grad_clip = " << fmt(agent.grad_clip) << "\n";
    os << "schedule.eps_start = " << fmt(schedule.start) << "\n";
    os << "schedule.eps_end = " << fmt(schedule.end) << "\n";
    os << "schedule.anneal_span = " << schedule.anneal_span << "\n";
    os << "eval.episodes = " << eval_episodes << "\n";
    os << "eval.epsilon = " << fmt(eval_epsilon) << "\n";
    return os.str();
}

RunConfig parse_config_text(const std::string& text) {
    RunConfig config;
    std::istringstream is(text);
    std::string line;
    int line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config line " + std::to_string(line_no) +
                                        ": expected key = value");
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        auto it = setters().find(key);
        if (it == setters().end())
            throw std::invalid_argument("config line " + std::to_string(line_no) +
                                        ": unknown key '" + key + "'");
        try {
            it->second(config, value);
        } catch (const std::exception& e) {
            throw std::invalid_argument("config line " + std::to_string(line_no) +
                                        " (" + key + "): " + e.what());
        }
    }
    config.validate();
    return config;
}

RunConfig parse_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("config file not found: " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return parse_config_text(ss.str());
}

std::string resolve_output_dir(const RunConfig& config) {
    const char* root = std::getenv("QGRASP_OUTPUT_ROOT");
    if (root && root[0] != '\0' && !config.output_dir.empty() &&
        config.output_dir[0] != '/')
        return std::string(root) + "/" + config.output_dir;
    return config.output_dir;
}

}  // namespace qgrasp
