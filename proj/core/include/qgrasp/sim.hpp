#pragma once

#include <array>
#include <string>

#include "qgrasp/geom.hpp"
#include "qgrasp/rng.hpp"

namespace qgrasp {

// A controllable revolute joint followed by a rigid link. At zero joint
// angle every link extends along its parent frame's +y axis.
struct Link {
    Vec3 rotation_axis{0, 0, 1};  // unit vector, parent frame
    double length = 0.1;          // meters
    double joint_min_deg = -180.0;
    double joint_max_deg = 180.0;
};

struct KinematicChain {
    std::array<Link, 6> links;
    Vec3 base_position{0, 0, 0};
    double gripper_reach = 0.05;  // meters past the last link end

    // Throws std::invalid_argument on any violated invariant.
    void validate() const;
};

struct ArmState {
    std::array<double, 6> joint_angles_deg{};
    bool gripper_closed = false;
};

struct CubeState {
    Vec3 position{};  // y is height above the table plane (y = 0)
    double half_extent = 0.025;
    bool grasped = false;
};

struct WorldState {
    ArmState arm;
    CubeState cube;
    long step_count = 0;
    bool succeeded = false;
};

// 14 discrete actions: 2k / 2k+1 rotate joint k by +1 / -1 degree,
// 12 opens the gripper, 13 closes it.
inline constexpr int kNumActions = 14;
inline constexpr int kActionOpenGripper = 12;
inline constexpr int kActionCloseGripper = 13;

enum class ResetMode { Fixed, Randomized };

struct ResetSpec {
    ResetMode mode = ResetMode::Fixed;
    std::array<double, 6> base_joint_angles_deg{};
    double joint_jitter_deg = 20.0;
    Vec3 cube_base_position{0.3, 0.0, 0.0};
    double cube_region_width = 0.1414213562373095;  // 200 cm^2 square
    double cube_region_depth = 0.1414213562373095;
    double lift_height = 0.30;
    long max_episode_steps = 1000;

    void validate() const;
};

// Simulation constants that sit outside the reset specification.
struct SimParams {
    double grasp_radius = 0.03;
    double reward_decay = 0.25;  // beta in exp(-beta * d)
    std::array<bool, 6> joint_controlled{true, true, true, true, true, true};
};

enum class EpisodeStatus { Continue, Success, Timeout };

struct FkResult {
    std::array<Vec3, 7> segment_endpoints;  // base, then each link end
    Vec3 gripper_point;
};

FkResult forward_kinematics(const KinematicChain& chain, const ArmState& arm);

// True iff the gripper point lies within grasp_radius of the cube
// (boundary inclusive) and the cube is not already grasped.
bool grasp_check(const WorldState& world, const KinematicChain& chain,
                 double grasp_radius);

WorldState apply_action(const WorldState& world, const KinematicChain& chain,
                        int action, const ResetSpec& spec,
                        const SimParams& params);

double compute_reward(const WorldState& world, const KinematicChain& chain,
                      const ResetSpec& spec, const SimParams& params);

EpisodeStatus is_terminal(const WorldState& world, const ResetSpec& spec);

WorldState reset(const KinematicChain& chain, const ResetSpec& spec, Rng& rng);

struct StepResult {
    WorldState next;
    double reward = 0.0;
    EpisodeStatus status = EpisodeStatus::Continue;
};

StepResult step(const WorldState& world, const KinematicChain& chain,
                int action, const ResetSpec& spec, const SimParams& params);

// Flat key-value text record, one "key=value" per line.
std::string world_to_kv(const WorldState& world);

}  // namespace qgrasp
