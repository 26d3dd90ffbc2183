#pragma once

#include <array>
#include <string>

#include "qgrasp/dqn.hpp"
#include "qgrasp/net.hpp"
#include "qgrasp/render.hpp"
#include "qgrasp/sim.hpp"

namespace qgrasp {

// Everything a run needs, aggregated from a line-oriented
// "section.key = value" text file. Omitted keys keep their defaults.
struct RunConfig {
    // run
    std::uint64_t seed = 1;
    std::string output_dir = "out";
    long episodes = 100;
    long checkpoint_every = 100;
    bool checkpoint_replay = true;

    // chain
    KinematicChain chain = default_chain();

    // sim
    SimParams sim;
    double cube_half_extent = 0.025;

    // reset
    ResetSpec reset = default_reset();

    // camera / observation
    CameraSpec camera;
    int obs_width = 64;
    int obs_height = 64;
    RenderStyle style;

    // network
    std::array<size_t, 3> conv_channels{16, 32, 32};
    std::array<size_t, 3> conv_kernels{5, 3, 3};
    std::array<size_t, 3> conv_strides{1, 1, 1};
    size_t hidden_units = 256;

    // agent + schedule
    AgentConfig agent;
    EpsilonSchedule schedule;

    // eval
    long eval_episodes = 50;
    double eval_epsilon = 0.1;

    static KinematicChain default_chain();
    static ResetSpec default_reset();

    NetworkSpec network_spec() const;

    // Throws std::invalid_argument naming the offending field.
    void validate() const;

    // All keys materialized, parseable back into an equal config.
    std::string to_text() const;
};

// Throws std::runtime_error for a missing file, std::invalid_argument with a
// line number for parse errors and unknown keys.
RunConfig parse_config(const std::string& path);
RunConfig parse_config_text(const std::string& text);

// Applies the output-root override environment variable (QGRASP_OUTPUT_ROOT)
// to a relative output directory.
std::string resolve_output_dir(const RunConfig& config);

}  // namespace qgrasp
