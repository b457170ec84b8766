"""Tests for the descent loop, the render-and-compare optimizers and multi-start."""
import math
import os
import time

import numpy as np
import pytest

from models import LandmarkMap2D, OptimizerConfig, RegistrationProblem, RigidPose
from services.mesh_service import make_liver_blob
from services.render_service import rasterize
from services.synthetic_case_service import default_camera, synth_case
from models.errors import AllRestartsFailed, ConfigurationError, EmptyProjection, MissingAsset
from services.metrics_service import reprojection_error
from services.registration_service import registration_service
from services.render_registration_service import (
    CentredFrame,
    _candidate_steps,
    chamfer_register,
    descend,
    descent_step,
    silhouette_register,
    smooth_l1,
    smooth_l1_derivative,
)

TARGET = np.array([10.0, -4.0, 2.0])


def translation_objective(pose: RigidPose, iteration: int, with_gradient: bool):
    """Squared distance of the translation from TARGET; no rotation dependence."""
    offset = pose.t - TARGET
    gradient = np.concatenate([np.zeros(3), 2.0 * offset]) if with_gradient else None
    return float(offset @ offset), gradient, False


def problem_from(bundle, with_mask: bool = True, target2d=None) -> RegistrationProblem:
    return RegistrationProblem(
        bundle.mesh,
        bundle.landmarks3d,
        bundle.landmarks2d if target2d is None else target2d,
        bundle.intr,
        bundle.mask if with_mask else None,
    )


def is_non_increasing(trace) -> bool:
    return all(b <= a for a, b in zip(trace, trace[1:]))


def perturbed(pose: RigidPose, mesh, degrees: float, translation, axis) -> RigidPose:
    """`pose` turned by `degrees` about `axis` through the mesh centroid, then shifted by `translation` mm."""
    frame = CentredFrame(mesh)
    axis = np.asarray(axis, dtype=float) / np.linalg.norm(axis)
    xi = np.concatenate([np.radians(degrees) * axis, np.asarray(translation, dtype=float)])
    return frame.from_centred(frame.to_centred(pose).retract(xi))


def iou(a: np.ndarray, b: np.ndarray) -> float:
    return float((a & b).sum() / (a | b).sum())


@pytest.fixture
def wide(liver):
    """Synthetic case seen by a 640x480 camera."""
    return synth_case(liver, default_camera(), seed=3)


class TestSmoothL1:
    def test_quadratic_below_beta(self):
        assert smooth_l1(np.array([0.5]), 1.0)[0] == pytest.approx(0.125)

    def test_linear_above_beta(self):
        assert smooth_l1(np.array([-3.0]), 1.0)[0] == pytest.approx(2.5)

    def test_derivative_is_clipped(self):
        assert smooth_l1_derivative(np.array([-4.0, 0.25, 4.0]), 0.5).tolist() == [-1.0, 0.5, 1.0]


class TestDescend:
    def test_zero_iterations_keep_the_start(self):
        start = RigidPose.identity()
        outcome = descend(translation_objective, start, OptimizerConfig(iterations=0), 0)
        assert outcome.pose is start
        assert outcome.trace == [pytest.approx(float(TARGET @ TARGET))]
        assert outcome.converged

    def test_loss_never_increases(self):
        cfg = OptimizerConfig(iterations=20, translation_step=2.0)
        outcome = descend(translation_objective, RigidPose.identity(), cfg, cfg.iterations)
        assert len(outcome.trace) == 21
        assert is_non_increasing(outcome.trace)
        assert outcome.trace[-1] < 0.1 * outcome.trace[0]

    def test_numeric_gradient_also_descends(self):
        cfg = OptimizerConfig(iterations=10, translation_step=2.0, gradient="numeric")
        outcome = descend(translation_objective, RigidPose.identity(), cfg, cfg.iterations)
        assert outcome.trace[-1] < outcome.trace[0]

    def test_rotation_is_left_alone_without_a_rotation_gradient(self):
        cfg = OptimizerConfig(iterations=5)
        start = RigidPose.from_rotvec([0.1, 0.2, 0.3])
        outcome = descend(translation_objective, start, cfg, cfg.iterations)
        assert np.allclose(outcome.pose.R, start.R)

    def test_non_finite_start(self):
        def objective(pose, iteration, with_gradient):
            return math.inf, None, False

        with pytest.raises(EmptyProjection):
            descend(objective, RigidPose.identity(), OptimizerConfig(iterations=3), 3)

    def test_accepted_candidate_carries_its_gradient(self):
        calls = []

        def objective(pose, iteration, with_gradient):
            calls.append(with_gradient)
            return translation_objective(pose, iteration, with_gradient)

        cfg = OptimizerConfig(iterations=5, translation_step=1.0, final_step_fraction=1.0)
        outcome = descend(objective, RigidPose.identity(), cfg, cfg.iterations)
        assert is_non_increasing(outcome.trace)
        assert len(calls) == 1 + cfg.iterations
        assert all(calls)

    def test_iteration_dependent_objective_is_reevaluated(self):
        calls = []

        class Scheduled:
            varies_with_iteration = True

            def __call__(self, pose, iteration, with_gradient):
                calls.append((iteration, with_gradient))
                return translation_objective(pose, iteration, with_gradient)

        cfg = OptimizerConfig(iterations=3, translation_step=1.0, final_step_fraction=1.0)
        descend(Scheduled(), RigidPose.identity(), cfg, cfg.iterations)
        assert calls[0] == (0, False)
        assert [c for c in calls if c[1]] == [(0, True), (1, True), (2, True)]

    def test_halving_resumes_one_level_above_the_last_accepted(self):
        step = np.array([0.0, 0.0, 0.1, 4.0, 0.0, 0.0])
        levels = [level for level, _ in _candidate_steps(step, 4, first_halving=2)]
        assert levels == [2, 3, 4, 0, 0, 0, 0]
        first = next(_candidate_steps(step, 4, first_halving=2))[1]
        assert np.allclose(first, step / 4)

    def test_step_lengths_follow_the_schedule(self):
        cfg = OptimizerConfig(iterations=11, rotation_step=0.02, translation_step=5.0, final_step_fraction=0.1)
        gradient = np.array([3.0, 0.0, 4.0, 0.0, -2.0, 0.0])
        first, last = descent_step(gradient, cfg, 0), descent_step(gradient, cfg, 10)
        assert np.linalg.norm(first[:3]) == pytest.approx(0.02)
        assert np.linalg.norm(first[3:]) == pytest.approx(5.0)
        assert np.linalg.norm(last[3:]) == pytest.approx(0.5)
        assert first[4] > 0


class TestCentredFrame:
    def test_same_camera_points(self, liver):
        frame = CentredFrame(liver)
        pose = RigidPose.from_rotvec([0.3, -0.1, 0.6], t=(5.0, 8.0, 400.0))
        assert np.allclose(frame.to_centred(pose).apply(frame.mesh.vertices), pose.apply(liver.vertices))

    def test_round_trip(self, liver):
        frame = CentredFrame(liver)
        pose = RigidPose.from_rotvec([1.0, 0.0, -0.4], t=(0.0, 0.0, 300.0))
        assert frame.from_centred(frame.to_centred(pose)).allclose(pose, atol=1e-9)


class TestChamferRegistration:
    def test_zero_iterations_return_the_start(self, synthetic):
        cfg = OptimizerConfig.for_method("chamfer-dr", iterations=0, phase2_iterations=0)
        result = chamfer_register(problem_from(synthetic.bundle), cfg, synthetic.gt_pose)
        assert result.pose.allclose(synthetic.gt_pose, atol=1e-9)
        assert len(result.loss_trace) == 1

    @pytest.mark.slow
    def test_descent_from_the_true_pose_does_not_increase_the_loss(self, synthetic):
        cfg = OptimizerConfig.for_method("chamfer-dr", iterations=5, phase2_iterations=0)
        result = chamfer_register(problem_from(synthetic.bundle), cfg, synthetic.gt_pose)
        assert len(result.loss_trace) == 6
        assert is_non_increasing(result.loss_trace)

    @pytest.mark.slow
    def test_correspondence_phase_extends_the_trace(self, synthetic):
        cfg = OptimizerConfig.for_method("chamfer-dr", iterations=2, phase2_iterations=3)
        result = chamfer_register(problem_from(synthetic.bundle), cfg, synthetic.gt_pose)
        assert len(result.loss_trace) > 3
        assert result.converged


class TestSilhouetteRegistration:
    def test_needs_a_mask(self, synthetic):
        cfg = OptimizerConfig.for_method("silhouette", iterations=2)
        with pytest.raises(MissingAsset):
            registration_service.run("silhouette", problem_from(synthetic.bundle, with_mask=False), cfg,
                                     init=synthetic.gt_pose)

    @pytest.mark.slow
    def test_few_iterations_from_a_shifted_pose(self, synthetic):
        cfg = OptimizerConfig.for_method("silhouette", iterations=8)
        start = synthetic.gt_pose.retract([0.0, 0.0, 0.0, 15.0, -10.0, 0.0])
        result = registration_service.run("silhouette", problem_from(synthetic.bundle), cfg, init=start)
        assert is_non_increasing(result.loss_trace)
        assert result.final_loss < result.loss_trace[0]


class TestLandmarkRegistration:
    def test_empty_target_fails_every_restart(self, synthetic):
        bundle = synthetic.bundle
        cfg = OptimizerConfig.for_method("landmark-dr", iterations=2, restarts=2)
        problem = problem_from(bundle, target2d=LandmarkMap2D.empty(bundle.intr.width, bundle.intr.height))
        with pytest.raises(AllRestartsFailed):
            registration_service.run("landmark-dr", problem, cfg)

    @pytest.mark.slow
    def test_single_restart_from_the_true_pose(self, synthetic):
        cfg = OptimizerConfig.for_method("landmark-dr", iterations=5, restarts=1)
        result = registration_service.run("landmark-dr", problem_from(synthetic.bundle), cfg, init=synthetic.gt_pose)
        assert result.restart_index == 0
        assert result.final_loss <= result.loss_trace[0]

    @pytest.mark.slow
    def test_restarts_are_deterministic(self, synthetic):
        cfg = OptimizerConfig.for_method("landmark-dr", iterations=3, restarts=3, seed=5)
        problem = problem_from(synthetic.bundle)
        first = registration_service.run("landmark-dr", problem, cfg, init=synthetic.gt_pose)
        second = registration_service.run("landmark-dr", problem, cfg, init=synthetic.gt_pose)
        assert first.restart_index == second.restart_index
        assert first.pose.allclose(second.pose, atol=0.0)
        assert [r.seed for r in first.restart_results] == [5 + r.restart_index for r in first.restart_results]


class TestRun:
    def test_unknown_method(self, synthetic):
        with pytest.raises(ConfigurationError):
            registration_service.run("icp", problem_from(synthetic.bundle), OptimizerConfig())

    def test_unknown_selection(self, synthetic):
        with pytest.raises(ConfigurationError):
            registration_service.multi_start(problem_from(synthetic.bundle), "landmark-dr", OptimizerConfig(restarts=1),
                                             selection="median")

    def test_pnp_reports_its_residual(self, synthetic):
        result = registration_service.run("pnp", problem_from(synthetic.bundle), OptimizerConfig())
        assert result.converged
        assert result.loss_trace == (result.final_loss,)
        assert np.isfinite(result.final_loss)
        assert np.linalg.det(result.pose.R) == pytest.approx(1.0)


class TestRegistrationAccuracy:
    @pytest.mark.slow
    def test_silhouette_recovers_the_mask_from_a_perturbed_pose(self, wide, liver):
        cfg = OptimizerConfig.for_method("silhouette", render_scale=0.5)
        start = perturbed(wide.gt_pose, liver, 10.0, [12.0, -16.0, 0.0], axis=[0.3, -0.4, 1.0])
        intr = wide.bundle.intr
        truth = wide.bundle.mask.hard()
        assert iou(rasterize(liver, start, intr).mask, truth) < 0.95

        result = registration_service.run("silhouette", problem_from(wide.bundle), cfg, init=start)
        assert iou(rasterize(liver, result.pose, intr).mask, truth) >= 0.95

    @pytest.mark.slow
    def test_landmark_restarts_reproject_within_five_pixels(self, wide, liver):
        cfg = OptimizerConfig.for_method("landmark-dr", restarts=3, render_scale=0.5)
        start = perturbed(wide.gt_pose, liver, 5.0, [6.0, 8.0, 0.0], axis=[1.0, 0.5, -0.2])
        bundle = wide.bundle
        result = registration_service.run("landmark-dr", problem_from(bundle), cfg, init=start)
        report = reprojection_error(result.pose, bundle.landmarks3d, liver, bundle.landmarks2d, bundle.intr)
        assert report.rpe_ridge <= 5.0
        assert report.rpe_ligament <= 5.0

    @pytest.mark.slow
    def test_chamfer_from_the_default_start_fits_the_landmarks(self, liver):
        facing = liver.with_vertices(RigidPose.from_euler("x", 180.0).apply(liver.vertices))
        axis = np.array([1.0, 2.0, 0.5]) / np.linalg.norm([1.0, 2.0, 0.5])
        truth = RigidPose.from_rotvec(np.radians(10.0) * axis, t=(10.0, -8.0, 530.0))
        case = synth_case(facing, default_camera(), pose=truth, seed=3)
        cfg = OptimizerConfig.for_method("chamfer-dr")

        result = registration_service.run("chamfer-dr", problem_from(case.bundle), cfg)
        assert len(result.loss_trace) > cfg.iterations + 1
        assert math.sqrt(result.final_loss) <= 5.0

    @pytest.mark.slow
    def test_planted_restart_wins(self, wide, liver):
        cfg = OptimizerConfig.for_method("landmark-dr", restarts=8, iterations=20, seed=11)
        bundle = wide.bundle
        result = registration_service.multi_start(problem_from(bundle), "landmark-dr", cfg, init=wide.gt_pose)
        assert all(result.final_loss <= r.final_loss for r in result.restart_results)
        report = reprojection_error(result.pose, bundle.landmarks3d, liver, bundle.landmarks2d, bundle.intr)
        assert report.rpe_ridge <= 5.0
        assert report.rpe_ligament <= 5.0


class TestGauge:
    Q = RigidPose.from_rotvec([0.4, -0.2, 0.3], t=(30.0, -20.0, 10.0))

    def moved(self, bundle) -> RegistrationProblem:
        mesh = bundle.mesh.with_vertices(self.Q.apply(bundle.mesh.vertices))
        return RegistrationProblem(mesh, bundle.landmarks3d, bundle.landmarks2d, bundle.intr, bundle.mask)

    def test_silhouette_pose_follows_the_mesh_transform(self, synthetic):
        cfg = OptimizerConfig.for_method("silhouette", iterations=6, render_scale=0.5)
        start = synthetic.gt_pose.retract([0.0, 0.0, 0.02, 6.0, -4.0, 0.0])
        original = silhouette_register(problem_from(synthetic.bundle), start, cfg)
        moved = silhouette_register(self.moved(synthetic.bundle), start.compose(self.Q.inverse()), cfg)
        assert moved.pose.allclose(original.pose.compose(self.Q.inverse()), atol=1e-6)
        assert np.allclose(moved.loss_trace, original.loss_trace, rtol=1e-9)


class TestRuntime:
    @pytest.mark.slow
    @pytest.mark.skipif((os.cpu_count() or 1) < 8, reason="timed on an 8-core machine")
    def test_two_hundred_silhouette_steps_at_one_fifth_scale(self):
        mesh = make_liver_blob(subdivisions=4, seed=0)
        assert mesh.face_count >= 5000
        case = synth_case(mesh, default_camera(1920, 1080, 1400.0), seed=3)
        cfg = OptimizerConfig.for_method("silhouette", iterations=200, render_scale=0.2, tolerance=0.0)
        start = perturbed(case.gt_pose, mesh, 10.0, [12.0, -16.0, 0.0], axis=[0.3, -0.4, 1.0])

        began = time.perf_counter()
        result = silhouette_register(problem_from(case.bundle), start, cfg)
        elapsed = time.perf_counter() - began
        assert len(result.loss_trace) == 201
        assert elapsed <= 30.0
