#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "qgrasp/sim.hpp"

using namespace qgrasp;

namespace {

KinematicChain planar_chain(double length = 0.1) {
    KinematicChain c;
    for (auto& l : c.links) {
        l.rotation_axis = {0, 0, 1};
        l.length = length;
        l.joint_min_deg = -180.0;
        l.joint_max_deg = 180.0;
    }
    c.base_position = {0, 0, 0};
    c.gripper_reach = 0.05;
    return c;
}

ResetSpec basic_spec() {
    ResetSpec s;
    s.mode = ResetMode::Fixed;
    s.base_joint_angles_deg = {0, 0, 0, 0, 0, 0};
    s.cube_base_position = {0.3, 0.0, 0.0};
    return s;
}

}  // namespace

TEST_CASE("chain invariants are enforced") {
    KinematicChain c = planar_chain();
    CHECK_NOTHROW(c.validate());
    KinematicChain bad_axis = c;
    bad_axis.links[2].rotation_axis = {0, 0, 2};
    CHECK_THROWS_AS(bad_axis.validate(), std::invalid_argument);
    KinematicChain bad_limits = c;
    bad_limits.links[0].joint_min_deg = 10;
    bad_limits.links[0].joint_max_deg = 10;
    CHECK_THROWS_AS(bad_limits.validate(), std::invalid_argument);
    KinematicChain bad_len = c;
    bad_len.links[4].length = 0.0;
    CHECK_THROWS_AS(bad_len.validate(), std::invalid_argument);
}

TEST_CASE("fk: zero angles stack links along the reference direction") {
    KinematicChain c = planar_chain();
    std::array<double, 6> lengths = {0.1, 0.2, 0.3, 0.1, 0.2, 0.3};
    for (size_t k = 0; k < 6; ++k) c.links[k].length = lengths[k];
    ArmState arm;
    FkResult fk = forward_kinematics(c, arm);
    double sum = 0.0;
    for (size_t k = 0; k < 6; ++k) {
        sum += lengths[k];
        CHECK(fk.segment_endpoints[k + 1].x == doctest::Approx(0.0));
        CHECK(fk.segment_endpoints[k + 1].y == doctest::Approx(sum));
        CHECK(fk.segment_endpoints[k + 1].z == doctest::Approx(0.0));
    }
    CHECK(fk.gripper_point.y == doctest::Approx(sum + c.gripper_reach));
}

TEST_CASE("fk: inverse rotations return the identical gripper point") {
    KinematicChain c = planar_chain();
    ArmState arm;
    arm.joint_angles_deg = {13, -40, 77, 5, -90, 31};
    Vec3 before = forward_kinematics(c, arm).gripper_point;
    arm.joint_angles_deg[0] += 25;
    arm.joint_angles_deg[0] -= 25;
    Vec3 after = forward_kinematics(c, arm).gripper_point;
    CHECK(distance(before, after) < 1e-12);
}

TEST_CASE("fk: planar 90 degree bend matches 2D trigonometry") {
    // independent oracle: planar arm, direction angle measured from +y,
    // positive counterclockwise about z
    KinematicChain c = planar_chain(0.1);
    ArmState arm;
    arm.joint_angles_deg = {90, 0, 0, 0, 0, 0};
    FkResult fk = forward_kinematics(c, arm);

    double total = 0.0;
    double x = 0.0, y = 0.0;
    for (size_t k = 0; k < 6; ++k) {
        total += arm.joint_angles_deg[k] * kPi / 180.0;
        x += -std::sin(total) * 0.1;
        y += std::cos(total) * 0.1;
        CHECK(fk.segment_endpoints[k + 1].x == doctest::Approx(x).epsilon(1e-12));
        CHECK(fk.segment_endpoints[k + 1].y == doctest::Approx(y).epsilon(1e-12));
    }
    CHECK(fk.gripper_point.x ==
          doctest::Approx(x - std::sin(total) * 0.05).epsilon(1e-12));
    CHECK(fk.gripper_point.y ==
          doctest::Approx(y + std::cos(total) * 0.05).epsilon(1e-12));
}

TEST_CASE("apply_action: joint clamp at the limit") {
    KinematicChain c = planar_chain();
    c.links[0].joint_max_deg = 30;
    ResetSpec spec = basic_spec();
    SimParams params;
    WorldState w;
    w.arm.joint_angles_deg[0] = 30;
    WorldState next = apply_action(w, c, 0, spec, params);
    CHECK(next.arm.joint_angles_deg[0] == 30);
    CHECK(next.step_count == w.step_count + 1);
}

TEST_CASE("apply_action: rejects out-of-range actions") {
    KinematicChain c = planar_chain();
    ResetSpec spec = basic_spec();
    SimParams params;
    WorldState w;
    CHECK_THROWS_AS(apply_action(w, c, 14, spec, params), std::invalid_argument);
    CHECK_THROWS_AS(apply_action(w, c, -1, spec, params), std::invalid_argument);
}

TEST_CASE("grasp, lift, and success at lift height") {
    KinematicChain c = planar_chain(0.1);
    ResetSpec spec = basic_spec();
    SimParams params;
    WorldState w;
    w.arm.joint_angles_deg = {-90, 0, 0, 0, 0, 0};  // arm along +x at y=0
    w.cube.position = forward_kinematics(c, w.arm).gripper_point;

    w = apply_action(w, c, kActionCloseGripper, spec, params);
    CHECK(w.cube.grasped);
    // rotate joint 0 back towards vertical; gripper rises
    bool succeeded = false;
    for (int i = 0; i < 200 && !succeeded; ++i) {
        w = apply_action(w, c, 1, spec, params);  // joint 0 -1 deg... or +1?
        succeeded = w.succeeded;
        if (w.arm.joint_angles_deg[0] <= -180) break;
    }
    if (!succeeded) {
        // try the other direction
        for (int i = 0; i < 400 && !succeeded; ++i) {
            w = apply_action(w, c, 0, spec, params);
            succeeded = w.succeeded;
        }
    }
    CHECK(succeeded);
    CHECK(w.cube.position.y >= spec.lift_height);
}

TEST_CASE("opening the gripper drops the cube to the table") {
    KinematicChain c = planar_chain(0.1);
    ResetSpec spec = basic_spec();
    SimParams params;
    WorldState w;
    w.arm.joint_angles_deg = {-90, 0, 0, 0, 0, 0};
    w.cube.position = forward_kinematics(c, w.arm).gripper_point;
    w = apply_action(w, c, kActionCloseGripper, spec, params);
    REQUIRE(w.cube.grasped);
    for (int i = 0; i < 30; ++i) w = apply_action(w, c, 0, spec, params);
    REQUIRE(w.cube.position.y > 0.1);
    Vec3 before = w.cube.position;
    w = apply_action(w, c, kActionOpenGripper, spec, params);
    CHECK(!w.cube.grasped);
    CHECK(w.cube.position.y == 0.0);
    CHECK(w.cube.position.x == doctest::Approx(before.x));
    CHECK(w.cube.position.z == doctest::Approx(before.z));
}

TEST_CASE("grasp_check boundary convention") {
    KinematicChain c = planar_chain(0.1);
    WorldState w;
    FkResult fk = forward_kinematics(c, w.arm);

    SUBCASE("zero distance") {
        w.cube.position = fk.gripper_point;
        CHECK(grasp_check(w, c, 0.03));
    }
    SUBCASE("outside radius") {
        w.cube.position = fk.gripper_point + Vec3{0.05, 0, 0};
        CHECK(!grasp_check(w, c, 0.03));
    }
    SUBCASE("boundary inclusive") {
        w.cube.position = fk.gripper_point + Vec3{0.03, 0, 0};
        CHECK(grasp_check(w, c, 0.03));
    }
    SUBCASE("already grasped") {
        w.cube.position = fk.gripper_point;
        w.cube.grasped = true;
        CHECK(!grasp_check(w, c, 0.03));
    }
}

TEST_CASE("reward function cases") {
    KinematicChain c = planar_chain(0.1);
    ResetSpec spec = basic_spec();
    SimParams params;
    WorldState w;

    SUBCASE("terminal success pays 100") {
        w.succeeded = true;
        CHECK(compute_reward(w, c, spec, params) == 100.0);
    }
    SUBCASE("grasped pays 1 plus height") {
        w.cube.grasped = true;
        w.cube.position = {0.2, 0.12, 0.0};
        CHECK(compute_reward(w, c, spec, params) ==
              doctest::Approx(1.12).epsilon(1e-14));
    }
    SUBCASE("contact distance pays exp(0) = 1") {
        w.cube.position = forward_kinematics(c, w.arm).gripper_point;
        CHECK(compute_reward(w, c, spec, params) == doctest::Approx(1.0));
    }
    SUBCASE("distance 4 pays e^-1") {
        Vec3 g = forward_kinematics(c, w.arm).gripper_point;
        w.cube.position = g + Vec3{4.0, 0, 0};
        CHECK(compute_reward(w, c, spec, params) ==
              doctest::Approx(std::exp(-1.0)).epsilon(1e-12));
    }
}

TEST_CASE("termination rules") {
    ResetSpec spec = basic_spec();
    WorldState w;
    SUBCASE("timeout at the cap") {
        w.step_count = 1000;
        CHECK(is_terminal(w, spec) == EpisodeStatus::Timeout);
    }
    SUBCASE("success mid-episode") {
        w.step_count = 112;
        w.succeeded = true;
        CHECK(is_terminal(w, spec) == EpisodeStatus::Success);
    }
    SUBCASE("fresh reset continues") {
        CHECK(is_terminal(w, spec) == EpisodeStatus::Continue);
    }
    SUBCASE("success dominates timeout") {
        w.step_count = 1000;
        w.succeeded = true;
        CHECK(is_terminal(w, spec) == EpisodeStatus::Success);
    }
}

TEST_CASE("reset: fixed mode is rng-independent") {
    KinematicChain c = planar_chain();
    ResetSpec spec = basic_spec();
    Rng a(1), b(99);
    WorldState w1 = reset(c, spec, a);
    WorldState w2 = reset(c, spec, b);
    CHECK(w1.arm.joint_angles_deg == w2.arm.joint_angles_deg);
    CHECK(w1.cube.position.x == w2.cube.position.x);
    CHECK(w1.step_count == 0);
    CHECK(!w1.arm.gripper_closed);
    CHECK(!w1.cube.grasped);
}

TEST_CASE("reset: randomized jitter stays within 20 degrees") {
    KinematicChain c = planar_chain();
    ResetSpec spec = basic_spec();
    spec.mode = ResetMode::Randomized;
    spec.base_joint_angles_deg = {10, -20, 30, 0, 5, -5};
    Rng rng(7);
    for (int i = 0; i < 500; ++i) {
        WorldState w = reset(c, spec, rng);
        for (size_t k = 0; k < 6; ++k) {
            CHECK(w.arm.joint_angles_deg[k] >=
                  spec.base_joint_angles_deg[k] - 20.0);
            CHECK(w.arm.joint_angles_deg[k] <=
                  spec.base_joint_angles_deg[k] + 20.0);
        }
    }
}

TEST_CASE("reset: cube positions cover all four region quadrants") {
    KinematicChain c = planar_chain();
    ResetSpec spec = basic_spec();
    spec.mode = ResetMode::Randomized;
    Rng rng(11);
    int quadrants[4] = {0, 0, 0, 0};
    for (int i = 0; i < 1000; ++i) {
        WorldState w = reset(c, spec, rng);
        double dx = w.cube.position.x - spec.cube_base_position.x;
        double dz = w.cube.position.z - spec.cube_base_position.z;
        CHECK(std::abs(dx) <= spec.cube_region_width / 2);
        CHECK(std::abs(dz) <= spec.cube_region_depth / 2);
        CHECK(w.cube.position.y == 0.0);
        quadrants[(dx >= 0 ? 1 : 0) + (dz >= 0 ? 2 : 0)] += 1;
    }
    for (int q = 0; q < 4; ++q) CHECK(quadrants[q] > 0);
}

TEST_CASE("step composes action, reward, and termination") {
    KinematicChain c = planar_chain();
    ResetSpec spec = basic_spec();
    SimParams params;
    WorldState w;
    w.arm.joint_angles_deg = {20, 10, 0, 0, 0, 0};

    SUBCASE("inverse action pair restores the pose") {
        StepResult r1 = step(w, c, 0, spec, params);
        StepResult r2 = step(r1.next, c, 1, spec, params);
        for (size_t k = 0; k < 6; ++k)
            CHECK(r2.next.arm.joint_angles_deg[k] ==
                  doctest::Approx(w.arm.joint_angles_deg[k]));
        CHECK(r2.next.step_count == w.step_count + 2);
    }
    SUBCASE("grasping step pays 1 + cube height") {
        WorldState g = w;
        g.arm.joint_angles_deg = {-90, 0, 0, 0, 0, 0};
        g.cube.position = forward_kinematics(c, g.arm).gripper_point;
        StepResult r = step(g, c, kActionCloseGripper, spec, params);
        CHECK(r.next.cube.grasped);
        CHECK(r.reward ==
              doctest::Approx(1.0 + r.next.cube.position.y).epsilon(1e-14));
    }
    SUBCASE("cap rule forces timeout") {
        spec.max_episode_steps = 50;
        WorldState cur = w;
        EpisodeStatus status = EpisodeStatus::Continue;
        for (int i = 0; i < 50; ++i) {
            StepResult r = step(cur, c, kActionOpenGripper, spec, params);
            cur = r.next;
            status = r.status;
        }
        CHECK(status == EpisodeStatus::Timeout);
        CHECK(cur.step_count == 50);
    }
}

TEST_CASE("fuzz: invariants over 100000 random actions") {
    KinematicChain c = planar_chain(0.12);
    c.links[3].rotation_axis = {1, 0, 0};
    for (auto& l : c.links) {
        l.joint_min_deg = -120;
        l.joint_max_deg = 120;
    }
    ResetSpec spec = basic_spec();
    spec.max_episode_steps = 1000000;
    SimParams params;
    Rng rng(12345);
    WorldState w;
    w.cube.position = {0.2, 0.0, 0.0};
    for (int i = 0; i < 100000; ++i) {
        int action = static_cast<int>(rng.uniform_int(kNumActions));
        WorldState next = apply_action(w, c, action, spec, params);

        // determinism: identical inputs give bit-identical outputs
        WorldState again = apply_action(w, c, action, spec, params);
        CHECK(world_to_kv(next) == world_to_kv(again));
        CHECK(compute_reward(next, c, spec, params) ==
              compute_reward(again, c, spec, params));

        for (size_t k = 0; k < 6; ++k) {
            REQUIRE(next.arm.joint_angles_deg[k] >= c.links[k].joint_min_deg);
            REQUIRE(next.arm.joint_angles_deg[k] <= c.links[k].joint_max_deg);
        }
        REQUIRE(next.cube.position.y >= 0.0);
        if (next.cube.grasped) {
            Vec3 g = forward_kinematics(c, next.arm).gripper_point;
            REQUIRE(distance(g, next.cube.position) < 1e-12);
        }
        double r = compute_reward(next, c, spec, params);
        if (next.succeeded) {
            REQUIRE(r == 100.0);
        } else if (next.cube.grasped) {
            REQUIRE(r >= 1.0);
            REQUIRE(r <= 1.0 + spec.lift_height + 1e-12);
        } else {
            REQUIRE(r > 0.0);
            REQUIRE(r <= 1.0);
        }
        REQUIRE(next.step_count == w.step_count + 1);
        if (next.succeeded) {
            Rng reset_rng(1);
            next = reset(c, spec, reset_rng);
            next.cube.position = {0.2, 0.0, 0.0};
        }
        w = next;
    }
}

TEST_CASE("world state serializes to a flat key-value record") {
    WorldState w;
    w.arm.joint_angles_deg = {1, 2, 3, 4, 5, 6};
    w.step_count = 42;
    std::string kv = world_to_kv(w);
    CHECK(kv.find("arm.joint0=1\n") != std::string::npos);
    CHECK(kv.find("step_count=42\n") != std::string::npos);
    CHECK(kv.find("succeeded=0\n") != std::string::npos);
}
