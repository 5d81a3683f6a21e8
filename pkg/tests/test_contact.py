import numpy as np
import pytest

from propriosim.articulation import part_pose, prismatic_joint, revolute_joint
from propriosim.contact import (
    ForceLimitExceeded,
    GraspCoupling,
    GraspLost,
    MechanismForces,
    World,
    apply_slip,
    contact_wrench,
    step_joint,
    step_world,
)
from propriosim.se3 import Pose, so3_exp


def make_drawer_world(**kwargs) -> World:
    joint = prismatic_joint([0, 0, -1], q_limits=(0, 0.3))
    defaults = dict(
        joint=joint,
        grasp=GraspCoupling(),
        mech=MechanismForces(damping=50.0),
        gripper_pose=part_pose(joint, 0.0),
        q=0.0,
        force_limit=80.0,
    )
    defaults.update(kwargs)
    return World(**defaults)


class TestContactWrench:
    def test_zero_at_grasped_pose(self):
        w = make_drawer_world()
        np.testing.assert_array_equal(contact_wrench(w), np.zeros(6))

    def test_translational_spring_law(self):
        w = make_drawer_world(grasp=GraspCoupling(k_couple_trans=1000.0))
        w.gripper_pose = Pose(np.eye(3), np.array([0.01, 0.0, 0.0]))
        wrench = contact_wrench(w)
        np.testing.assert_allclose(wrench[3:], [-10.0, 0.0, 0.0], atol=1e-12)
        np.testing.assert_allclose(wrench[:3], np.zeros(3), atol=1e-12)

    def test_rotational_spring_law(self):
        w = make_drawer_world(grasp=GraspCoupling(k_couple_rot=20.0))
        w.gripper_pose = Pose(so3_exp([0.1, 0, 0]), np.zeros(3))
        wrench = contact_wrench(w)
        np.testing.assert_allclose(wrench[:3], [-2.0, 0.0, 0.0], atol=1e-12)
        np.testing.assert_allclose(wrench[3:], np.zeros(3), atol=1e-12)

    def test_newton_third_law_about_common_point(self):
        # the handle-side wrench is the exact negation at the same point, so
        # their sum vanishes identically; check the origin-moment mapping too
        rng = np.random.default_rng(8)
        w = make_drawer_world()
        w.gripper_pose = Pose(so3_exp(rng.normal(size=3) * 0.05), rng.normal(size=3) * 0.01)
        wrench_g = contact_wrench(w)
        wrench_h = -wrench_g
        np.testing.assert_array_equal(wrench_g + wrench_h, np.zeros(6))


class TestSlip:
    def rotated_world(self, angle, limit, k_rot=20.0):
        grasp = GraspCoupling(k_couple_rot=k_rot, slip_torque_limit=limit, slip_viscosity_rot=1.0)
        w = make_drawer_world(grasp=grasp)
        w.gripper_pose = Pose(so3_exp([angle, 0, 0]), np.zeros(3))
        return w

    def test_below_limit_is_static(self):
        w = self.rotated_world(0.05, limit=2.0)  # torque 1.0 < limit
        before = w.grasp.grasp_transform.matrix().copy()
        apply_slip(w, contact_wrench(w), 0.002)
        np.testing.assert_array_equal(w.grasp.grasp_transform.matrix(), before)
        assert w.grasp.accumulated_slip_angle == 0.0

    def test_excess_torque_converges_to_limit(self):
        # gripper held rotated so the spring torque starts at 2x the limit;
        # the viscous-regularized slip makes the orientation error decay as
        # e(t) = lim/k + (e0 - lim/k) exp(-k t / c), so the residual torque
        # converges to the limit from above
        k, c, limit, e0 = 20.0, 1.0, 1.0, 0.1
        w = self.rotated_world(e0, limit=limit, k_rot=k)
        dt = 0.001
        torques = []
        times = []
        for n in range(4000):
            wrench = contact_wrench(w)
            torques.append(-wrench[0])  # restoring torque magnitude
            times.append(n * dt)
            apply_slip(w, wrench, dt)
        torques = np.array(torques)
        oracle = limit + (k * e0 - limit) * np.exp(-k * np.array(times) / c)
        assert torques[0] == pytest.approx(2.0 * limit, abs=1e-9)
        assert torques[-1] == pytest.approx(limit, rel=0.01)
        np.testing.assert_allclose(torques, oracle, atol=0.02 * limit)
        assert np.all(np.diff(torques) <= 1e-12)
        assert w.grasp.accumulated_slip_angle > 0.0

    def test_slip_counters_monotone(self):
        w = self.rotated_world(0.3, limit=0.5)
        w.grasp.slip_force_limit = 1.0
        w.gripper_pose = Pose(w.gripper_pose.rotation, np.array([0.0, -0.004, 0.0]))
        last_angle, last_dist = 0.0, 0.0
        for _ in range(200):
            apply_slip(w, contact_wrench(w), 0.002)
            assert w.grasp.accumulated_slip_angle >= last_angle
            assert w.grasp.accumulated_slip_dist >= last_dist
            last_angle = w.grasp.accumulated_slip_angle
            last_dist = w.grasp.accumulated_slip_dist
        assert last_dist > 0.0

    def test_grasp_lost_after_sliding_off_handle(self):
        grasp = GraspCoupling(slip_force_limit=1.0, handle_half_length=0.005, slip_viscosity_trans=10.0)
        w = make_drawer_world(grasp=grasp)
        w.gripper_pose = Pose(np.eye(3), np.array([0.0, -0.05, 0.0]))  # 100 N along -Y
        with pytest.raises(GraspLost):
            for _ in range(10000):
                apply_slip(w, contact_wrench(w), 0.002)

    def test_infinite_limits_bit_for_bit_firm(self):
        # with infinite limits the slip stage must not touch any state, so a
        # run through step_world equals a run that skips apply_slip entirely
        ja = prismatic_joint([0, 0, -1], q_limits=(0, 0.3))
        wa = make_drawer_world(joint=ja)
        wb = make_drawer_world(joint=ja)
        rng = np.random.default_rng(4)
        commands = [
            Pose(so3_exp(rng.normal(size=3) * 0.02), np.array([0, 0, -0.001 * i]))
            for i in range(200)
        ]
        for cmd in commands:
            step_world(wa, cmd, 0.002)
        for cmd in commands:  # manual variant without the slip stage
            wb.gripper_pose = cmd
            wrench = contact_wrench(wb)
            p = wb.gripper_pose.translation
            torque_h = -wrench[:3] + np.cross(p, -wrench[3:])
            step_joint(wb, np.concatenate([torque_h, -wrench[3:]]), 0.002)
            wb.last_wrench = wrench
        assert wa.q == wb.q
        np.testing.assert_array_equal(wa.last_wrench, wb.last_wrench)
        np.testing.assert_array_equal(
            wa.grasp.grasp_transform.matrix(), wb.grasp.grasp_transform.matrix()
        )
        np.testing.assert_array_equal(wa.grasp.grasp_transform.matrix(), np.eye(4))


class TestStepJoint:
    def test_aligned_prismatic_projection(self):
        w = make_drawer_world()
        wrench = np.array([0, 0, 0, 0, 0, -5.0])
        step_joint(w, wrench, 0.01)
        # tau = (0,0,-1) . (0,0,-5) = 5, qdot = 5/50 = 0.1 m/s
        assert w.q == pytest.approx(0.001, abs=1e-15)

    def test_latch_holds_below_breakaway(self):
        mech = MechanismForces(damping=50.0, latch_breakaway=5.0, latch_disengage_q=0.02)
        w = make_drawer_world(mech=mech)
        step_joint(w, np.array([0, 0, 0, 0, 0, -3.0]), 0.01)  # tau = 3 <= 5
        assert w.q == 0.0

    def test_latch_breaks_above_breakaway(self):
        mech = MechanismForces(damping=50.0, latch_breakaway=5.0, latch_disengage_q=0.02)
        w = make_drawer_world(mech=mech)
        step_joint(w, np.array([0, 0, 0, 0, 0, -8.0]), 0.01)
        # tau = 8, net = 8 - 5 = 3, qdot = 0.06
        assert w.q == pytest.approx(0.0006, abs=1e-15)

    def test_orthogonal_wrench_does_nothing(self):
        joint = revolute_joint([0, 0, 1], [0.4, 0, 0], q_limits=(0, np.pi))
        w = World(
            joint=joint,
            grasp=GraspCoupling(),
            mech=MechanismForces(damping=5.0),
            gripper_pose=part_pose(joint, 0.0),
        )
        # radial pull through the axis: zero reciprocal product
        wrench = np.array([0, 0, 0, -1.0, 0, 0])
        wrench_origin = np.concatenate([np.cross([0.4, 0, 0], wrench[3:]), wrench[3:]])
        # handle sits at the origin: moment of a force applied there is zero
        step_joint(w, np.array([0, 0, 0, -1.0, 0, 0]), 0.01)
        assert w.q == 0.0

    def test_force_limit_exceeded(self):
        w = make_drawer_world(force_limit=4.9)
        with pytest.raises(ForceLimitExceeded):
            step_joint(w, np.array([0, 0, 0, 0, 0, -5.0]), 0.01)

    def test_q_respects_limits(self):
        w = make_drawer_world()
        for _ in range(1000):
            step_joint(w, np.array([0, 0, 0, 0, 0, -50.0]), 0.01)
        assert w.q == 0.3


class TestStepWorld:
    def test_tracking_drawer_builds_low_force(self):
        w = make_drawer_world()
        dt = 0.002
        speed = 0.05  # m/s along the opening direction
        qs = []
        forces = []
        for n in range(3500):
            q_cmd = min(speed * (n + 1) * dt, 0.25)
            cmd = Pose(np.eye(3), np.array([0, 0, -q_cmd]))
            step_world(w, cmd, dt)
            qs.append(w.q)
            forces.append(np.linalg.norm(w.last_wrench[3:]))
        assert all(b >= a for a, b in zip(qs[:-1], qs[1:]))
        assert w.q == pytest.approx(0.25, abs=5e-3)
        # quasi-static drag force is damping * speed = 2.5 N
        assert max(forces) < 2.0 * 50.0 * speed
        assert forces[-1] < 0.5

    def test_closing_spring_pulls_shut(self):
        joint = revolute_joint([0, 0, 1], [0.4, 0, 0], q_limits=(0, np.pi / 2))
        mech = MechanismForces(damping=5.0, closing_spring_k=2.0, closing_spring_range_q=0.6)
        grasp = GraspCoupling(k_couple_trans=0.0, k_couple_rot=0.0)  # free handle
        w = World(joint=joint, grasp=grasp, mech=mech, gripper_pose=part_pose(joint, 0.4), q=0.4)
        stationary = w.gripper_pose
        qs = [w.q]
        for _ in range(6000):  # spring time constant is damping/k = 2.5 s
            step_world(w, stationary, 0.002)
            qs.append(w.q)
        assert all(b <= a for a, b in zip(qs[:-1], qs[1:]))
        assert w.q < 0.01

    def test_dt_refinement(self):
        def run(dt, T=2.0):
            w = make_drawer_world()
            n = int(round(T / dt))
            for i in range(n):
                cmd = Pose(np.eye(3), np.array([0, 0, -0.05 * (i + 1) * dt]))
                step_world(w, cmd, dt)
            return w.q

        q1, q2, q4 = run(4e-3), run(2e-3), run(1e-3)
        e1, e2 = abs(q1 - q2), abs(q2 - q4)
        assert 1.5 < e1 / e2 < 3.0

    def test_propagates_force_limit(self):
        w = make_drawer_world(force_limit=0.5)
        with pytest.raises(ForceLimitExceeded):
            step_world(w, Pose(np.eye(3), np.array([0.01, 0, 0])), 0.002)
