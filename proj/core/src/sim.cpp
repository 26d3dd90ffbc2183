#include "qgrasp/sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace qgrasp {

namespace {

constexpr double kKnockEps = 1e-9;

bool inside_cube(const Vec3& p, const CubeState& cube) {
    return std::abs(p.x - cube.position.x) < cube.half_extent &&
           std::abs(p.y - cube.position.y) < cube.half_extent &&
           std::abs(p.z - cube.position.z) < cube.half_extent;
}

// Push the cube horizontally along the dominant contact axis until the
// point sits on a face. Minimal stand-in for knocking the cube around.
void push_cube_out(CubeState& cube, const Vec3& gripper) {
    double dx = cube.position.x - gripper.x;
    double dz = cube.position.z - gripper.z;
    if (std::abs(dx) >= std::abs(dz)) {
        double sign = dx >= 0.0 ? 1.0 : -1.0;
        cube.position.x = gripper.x + sign * (cube.half_extent + kKnockEps);
    } else {
        double sign = dz >= 0.0 ? 1.0 : -1.0;
        cube.position.z = gripper.z + sign * (cube.half_extent + kKnockEps);
    }
}

}  // namespace

void KinematicChain::validate() const {
    for (size_t k = 0; k < links.size(); ++k) {
        const Link& l = links[k];
        if (std::abs(l.rotation_axis.norm() - 1.0) > 1e-9)
            throw std::invalid_argument("chain: rotation_axis of link " +
                                        std::to_string(k) + " is not unit length");
        if (!(l.joint_min_deg < l.joint_max_deg))
            throw std::invalid_argument("chain: joint_min >= joint_max for link " +
                                        std::to_string(k));
        if (!(l.length > 0.0))
            throw std::invalid_argument("chain: non-positive length for link " +
                                        std::to_string(k));
    }
    if (!(gripper_reach >= 0.0))
        throw std::invalid_argument("chain: gripper_reach must be >= 0");
}

void ResetSpec::validate() const {
    if (joint_jitter_deg < 0.0)
        throw std::invalid_argument("reset: joint_jitter must be >= 0");
    if (mode == ResetMode::Randomized &&
        !(cube_region_width > 0.0 && cube_region_depth > 0.0))
        throw std::invalid_argument("reset: cube_region must have positive area");
    if (!(lift_height > 0.0))
        throw std::invalid_argument("reset: lift_height must be > 0");
    if (max_episode_steps < 1)
        throw std::invalid_argument("reset: max_episode_steps must be >= 1");
}

FkResult forward_kinematics(const KinematicChain& chain, const ArmState& arm) {
    FkResult out;
    Vec3 p = chain.base_position;
    Mat3 r = Mat3::identity();
    out.segment_endpoints[0] = p;
    Vec3 dir{0, 1, 0};
    for (size_t k = 0; k < chain.links.size(); ++k) {
        r = r * Mat3::axis_angle(chain.links[k].rotation_axis,
                                 deg_to_rad(arm.joint_angles_deg[k]));
        dir = r * Vec3{0, 1, 0};
        p += dir * chain.links[k].length;
        out.segment_endpoints[k + 1] = p;
    }
    out.gripper_point = p + dir * chain.gripper_reach;
    return out;
}

bool grasp_check(const WorldState& world, const KinematicChain& chain,
                 double grasp_radius) {
    if (world.cube.grasped) return false;
    Vec3 g = forward_kinematics(chain, world.arm).gripper_point;
    return distance(g, world.cube.position) <= grasp_radius;
}

WorldState apply_action(const WorldState& world, const KinematicChain& chain,
                        int action, const ResetSpec& spec,
                        const SimParams& params) {
    if (action < 0 || action >= kNumActions)
        throw std::invalid_argument("apply_action: action id " +
                                    std::to_string(action) + " out of range");
    WorldState next = world;

    if (action < kActionOpenGripper) {
        int k = action / 2;
        if (params.joint_controlled[static_cast<size_t>(k)]) {
            const Link& link = chain.links[static_cast<size_t>(k)];
            double delta = action % 2 == 0 ? 1.0 : -1.0;
            double proposed = std::clamp(next.arm.joint_angles_deg[k] + delta,
                                         link.joint_min_deg, link.joint_max_deg);
            double saved = next.arm.joint_angles_deg[k];
            next.arm.joint_angles_deg[k] = proposed;
            if (next.cube.grasped) {
                Vec3 g = forward_kinematics(chain, next.arm).gripper_point;
                if (g.y < 0.0) {
                    // Table blocks the grasped cube; the move is refused.
                    next.arm.joint_angles_deg[k] = saved;
                }
            }
        }
    } else if (action == kActionOpenGripper) {
        next.arm.gripper_closed = false;
        if (next.cube.grasped) {
            next.cube.grasped = false;
            next.cube.position.y = 0.0;  // drops straight down
        }
    } else {  // close gripper
        if (!next.arm.gripper_closed) {
            next.arm.gripper_closed = true;
            // The table blocks grasps from below: a close with the gripper
            // under the plane grabs nothing, keeping the cube at y >= 0.
            if (grasp_check(next, chain, params.grasp_radius) &&
                forward_kinematics(chain, next.arm).gripper_point.y >= 0.0)
                next.cube.grasped = true;
        }
    }

    Vec3 gripper = forward_kinematics(chain, next.arm).gripper_point;
    if (next.cube.grasped) {
        next.cube.position = gripper;
    } else if (!next.arm.gripper_closed && inside_cube(gripper, next.cube)) {
        push_cube_out(next.cube, gripper);
    }

    next.step_count = world.step_count + 1;
    if (next.cube.grasped && next.cube.position.y >= spec.lift_height)
        next.succeeded = true;
    return next;
}

double compute_reward(const WorldState& world, const KinematicChain& chain,
                      const ResetSpec& spec, const SimParams& params) {
    (void)spec;
    if (world.succeeded) return 100.0;
    if (world.cube.grasped) return 1.0 + world.cube.position.y;
    Vec3 g = forward_kinematics(chain, world.arm).gripper_point;
    return std::exp(-params.reward_decay * distance(g, world.cube.position));
}

EpisodeStatus is_terminal(const WorldState& world, const ResetSpec& spec) {
    if (world.succeeded) return EpisodeStatus::Success;
    if (world.step_count >= spec.max_episode_steps) return EpisodeStatus::Timeout;
    return EpisodeStatus::Continue;
}

WorldState reset(const KinematicChain& chain, const ResetSpec& spec, Rng& rng) {
    WorldState w;
    w.arm.gripper_closed = false;
    w.cube.grasped = false;
    w.step_count = 0;
    w.succeeded = false;
    if (spec.mode == ResetMode::Fixed) {
        w.arm.joint_angles_deg = spec.base_joint_angles_deg;
        w.cube.position = spec.cube_base_position;
    } else {
        for (size_t k = 0; k < 6; ++k) {
            const Link& link = chain.links[k];
            double a = spec.base_joint_angles_deg[k] +
                       rng.uniform(-spec.joint_jitter_deg, spec.joint_jitter_deg);
            w.arm.joint_angles_deg[k] =
                std::clamp(a, link.joint_min_deg, link.joint_max_deg);
        }
        w.cube.position.x =
            spec.cube_base_position.x +
            rng.uniform(-spec.cube_region_width / 2, spec.cube_region_width / 2);
        w.cube.position.z =
            spec.cube_base_position.z +
            rng.uniform(-spec.cube_region_depth / 2, spec.cube_region_depth / 2);
        w.cube.position.y = 0.0;
    }
    return w;
}

StepResult step(const WorldState& world, const KinematicChain& chain,
                int action, const ResetSpec& spec, const SimParams& params) {
    StepResult r;
    r.next = apply_action(world, chain, action, spec, params);
    r.reward = compute_reward(r.next, chain, spec, params);
    r.status = is_terminal(r.next, spec);
    return r;
}

std::string world_to_kv(const WorldState& world) {
    char buf[128];
    std::string out;
    for (size_t k = 0; k < 6; ++k) {
        std::snprintf(buf, sizeof(buf), "arm.joint%zu=%.17g\n", k,
                      world.arm.joint_angles_deg[k]);
        out += buf;
    }
    out += std::string("arm.gripper_closed=") +
           (world.arm.gripper_closed ? "1" : "0") + "\n";
    std::snprintf(buf, sizeof(buf), "cube.x=%.17g\ncube.y=%.17g\ncube.z=%.17g\n",
                  world.cube.position.x, world.cube.position.y,
                  world.cube.position.z);
    out += buf;
    std::snprintf(buf, sizeof(buf), "cube.half_extent=%.17g\n",
                  world.cube.half_extent);
    out += buf;
    out += std::string("cube.grasped=") + (world.cube.grasped ? "1" : "0") + "\n";
    out += "step_count=" + std::to_string(world.step_count) + "\n";
    out += std::string("succeeded=") + (world.succeeded ? "1" : "0") + "\n";
    return out;
}

}  // namespace qgrasp
