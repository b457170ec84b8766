"""Render-and-compare pose optimizers.

All three optimizers share one descent loop: at every iteration the
objective returns a loss and its derivative with respect to the 6-DoF pose
increment, a step of fixed length per block (rotation, translation) is
taken against the gradient, and the step is halved until the loss drops.
Poses are optimized for the mesh recentred on its vertex centroid, so
rotation steps turn the model about its own centre.
"""
import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree
from scipy.special import huber

from models import (
    LabelledMesh,
    LANDMARK_CLASSES,
    OptimizerConfig,
    RegistrationProblem,
    RegistrationResult,
    RigidPose,
)
from models.errors import EmptyProjection, MissingAsset, NonPositiveDepth
from .geometry_service import project_camera_points, projection_jacobian
from .pnp_service import refine_pose
from .render_service import (
    rasterize,
    resize_map,
    resize_mask,
    soft_silhouette,
    upper_contour_samples,
    visible_vertices,
)

logger = logging.getLogger(__name__)

KERNEL_REACH_SIGMAS = 5.0
PREALIGN_ROUNDS = 2


class CentredFrame:
    """Converts poses between a mesh and the same mesh recentred on its vertex centroid."""

    def __init__(self, mesh: LabelledMesh):
        self.centroid = mesh.vertices.mean(axis=0)
        self.mesh = mesh.with_vertices(mesh.vertices - self.centroid)

    def to_centred(self, pose: RigidPose) -> RigidPose:
        return RigidPose(pose.R, pose.t + pose.R @ self.centroid)

    def from_centred(self, pose: RigidPose) -> RigidPose:
        return RigidPose(pose.R, pose.t - pose.R @ self.centroid)


@dataclass
class DescentOutcome:
    pose: RigidPose
    trace: list
    converged: bool


# ── Shared descent loop ────────────────────────────────────────────────

def _evaluate(objective, pose: RigidPose, iteration: int, with_gradient: bool):
    try:
        loss, gradient, degenerate = objective(pose, iteration, with_gradient)
    except (EmptyProjection, NonPositiveDepth):
        return math.inf, None, False
    if not np.isfinite(loss):
        return math.inf, None, False
    return float(loss), gradient, degenerate


def _loss_or_inf(objective, pose: RigidPose, iteration: int) -> float:
    return _evaluate(objective, pose, iteration, False)[0]


def numeric_gradient(objective, pose: RigidPose, iteration: int, step: float) -> np.ndarray:
    """Central differences along each coordinate of the increment."""
    gradient = np.zeros(6)
    for k in range(6):
        offset = np.zeros(6)
        offset[k] = step
        plus = _loss_or_inf(objective, pose.retract(offset), iteration)
        minus = _loss_or_inf(objective, pose.retract(-offset), iteration)
        if np.isfinite(plus) and np.isfinite(minus):
            gradient[k] = (plus - minus) / (2.0 * step)
    return gradient


def descent_step(gradient: np.ndarray, cfg: OptimizerConfig, iteration: int) -> np.ndarray:
    """Unit gradient direction per block, scaled to the scheduled step lengths."""
    step = np.zeros(6)
    scale = cfg.step_scale(iteration)
    for block, length in ((slice(0, 3), cfg.rotation_step), (slice(3, 6), cfg.translation_step)):
        norm = np.linalg.norm(gradient[block])
        if norm > 0 and np.isfinite(norm):
            step[block] = -gradient[block] / norm * length * scale
    return step


def _candidate_steps(step: np.ndarray, max_halvings: int, first_halving: int = 0):
    """(halving level, step) pairs: the full step halved from `first_halving`, then single-block steps.

    Single-block steps carry level 0.
    """
    rotation_only = step * np.repeat([1.0, 0.0], 3)
    translation_only = step * np.repeat([0.0, 1.0], 3)
    for k in range(min(first_halving, max_halvings), max_halvings + 1):
        yield k, step / 2 ** k
    for k in (0, max_halvings):
        yield 0, translation_only / 2 ** k
        yield 0, rotation_only / 2 ** k


def descend(objective, pose: RigidPose, cfg: OptimizerConfig, iterations: int, label: str = "") -> DescentOutcome:
    """Gradient descent with step halving; the trace starts with the initial loss.

    `objective(pose, iteration, with_gradient)` returns (loss, gradient,
    degenerate). Exceptions raised for the initial pose propagate.

    Unless the objective sets `varies_with_iteration`, candidates are
    evaluated with their analytic gradient and the accepted one carries its
    loss and gradient into the next iteration. Halving resumes one level
    above the level accepted last time.
    """
    analytic = cfg.gradient == "analytic"
    reuse = analytic and not getattr(objective, "varies_with_iteration", False)
    current = pose
    loss, gradient, degenerate = objective(current, 0, reuse)
    if not np.isfinite(loss):
        raise EmptyProjection(f"{label} loss is not finite at the initial pose")
    trace = [float(loss)]
    carried = (gradient, degenerate) if reuse else None
    converged = iterations == 0
    warned = False
    first_halving = 0

    for iteration in range(iterations):
        if carried is not None:
            gradient, degenerate = carried
        else:
            loss, gradient, degenerate = objective(current, iteration, analytic)
        if not analytic or degenerate or gradient is None:
            if analytic and not warned:
                logger.warning(f"{label}: degenerate contour, using finite-difference gradients")
                warned = True
            gradient = numeric_gradient(objective, current, iteration, cfg.fd_step)

        step = descent_step(gradient, cfg, iteration)
        accepted = None
        if np.any(step):
            for level, candidate_step in _candidate_steps(step, cfg.max_halvings, first_halving):
                candidate = current.retract(candidate_step)
                evaluation = _evaluate(objective, candidate, iteration, reuse)
                if evaluation[0] < loss:
                    accepted = (level, candidate, evaluation)
                    break

        if accepted is None:
            trace.append(float(loss))
            converged = True
            first_halving = 0
            logger.debug(f"{label} iteration {iteration}: no decrease, loss {loss:.6g}")
            continue

        previous = loss
        level, current, (loss, gradient, degenerate) = accepted
        if reuse:
            carried = (gradient, degenerate)
        first_halving = max(0, level - 1)
        trace.append(float(loss))
        converged = abs(previous - loss) <= cfg.tolerance * max(1.0, abs(previous))
        logger.debug(f"{label} iteration {iteration}: loss {loss:.6g}")

    return DescentOutcome(current, trace, converged)


# ── Silhouette objective ───────────────────────────────────────────────

def smooth_l1(x: np.ndarray, beta: float) -> np.ndarray:
    """Quadratic below `beta`, linear above; continuous first derivative."""
    return huber(beta, x) / beta


def smooth_l1_derivative(x: np.ndarray, beta: float) -> np.ndarray:
    return np.clip(x / beta, -1.0, 1.0)


class SilhouetteObjective:
    """Mean smooth-L1 difference between the soft render and the target mask."""

    def __init__(self, problem: RegistrationProblem, cfg: OptimizerConfig, frame: CentredFrame):
        self.mesh = frame.mesh
        self.cfg = cfg
        self.intr = problem.intr.scaled(cfg.render_scale)
        self.target = resize_mask(problem.silhouette_target, self.intr.shape).values

    def __call__(self, pose: RigidPose, iteration: int, with_gradient: bool):
        soft = soft_silhouette(self.mesh, pose, self.intr, self.cfg.softness, with_gradient=with_gradient)
        diff = soft.mask.values - self.target
        loss = float(np.mean(smooth_l1(diff, self.cfg.smooth_l1_beta)))
        if not with_gradient:
            return loss, None, soft.degenerate
        weights = smooth_l1_derivative(diff[soft.band_rows, soft.band_cols], self.cfg.smooth_l1_beta)
        gradient = weights @ soft.band_gradient / diff.size
        return loss, gradient, soft.degenerate


def silhouette_register(problem: RegistrationProblem, init: RigidPose, cfg: OptimizerConfig) -> RegistrationResult:
    """Fit the rendered silhouette to the target mask from `init`."""
    if problem.silhouette_target is None:
        raise MissingAsset("the silhouette method needs a liver mask (--mask)")
    frame = CentredFrame(problem.mesh)
    objective = SilhouetteObjective(problem, cfg, frame)
    outcome = descend(objective, frame.to_centred(init), cfg, cfg.iterations, label="silhouette")
    logger.info(f"Silhouette registration finished: loss {outcome.trace[0]:.6g} -> {outcome.trace[-1]:.6g}")
    return RegistrationResult(
        pose=frame.from_centred(outcome.pose),
        final_loss=outcome.trace[-1],
        loss_trace=outcome.trace,
        converged=outcome.converged,
        seed=cfg.seed,
    )


# ── Landmark-map objective ─────────────────────────────────────────────

@dataclass
class RenderedPoints:
    """Projected landmark samples with their pose Jacobians, per class."""
    points: dict
    jacobians: dict

    def count(self) -> int:
        return sum(len(p) for p in self.points.values())


def render_landmark_points(
    mesh: LabelledMesh,
    landmarks,
    pose: RigidPose,
    intr,
    classes,
    raster=None,
) -> RenderedPoints:
    """Visible ridge/ligament vertices and upper-contour samples for the silhouette."""
    raster = raster or rasterize(mesh, pose, intr)
    points, jacobians = {}, {}
    for name in classes:
        if name == "silhouette":
            samples, pairs, t = upper_contour_samples(mesh, raster)
            if len(samples):
                jac_a = projection_jacobian(intr, pose, mesh.vertices[pairs[:, 0]])
                jac_b = projection_jacobian(intr, pose, mesh.vertices[pairs[:, 1]])
                jacobians[name] = (1.0 - t)[:, None, None] * jac_a + t[:, None, None] * jac_b
            else:
                jacobians[name] = np.zeros((0, 2, 6))
            points[name] = samples
        else:
            visible = visible_vertices(mesh, pose, intr, raster=raster, indices=landmarks.indices(name))
            points[name] = raster.uv[visible]
            jacobians[name] = projection_jacobian(intr, pose, mesh.vertices[visible]) if len(visible) else np.zeros((0, 2, 6))
    return RenderedPoints(points, jacobians)


class LandmarkMapObjective:
    """Weighted per-pixel squared error between blurred rendered and target landmark maps.

    Both maps are Gaussian kernels of width sigma around their landmark
    pixels; sigma shrinks over the run so early iterations see far-off
    curves.
    """

    varies_with_iteration = True

    def __init__(self, problem: RegistrationProblem, cfg: OptimizerConfig, frame: CentredFrame):
        self.mesh = frame.mesh
        self.landmarks = problem.landmarks3d
        self.cfg = cfg
        self.intr = problem.intr.scaled(cfg.render_scale)
        target = resize_map(problem.target2d, self.intr.shape)
        self.classes = [
            name for name in ("ridge", "ligament", "silhouette")
            if cfg.weights.get(name, 0.0) > 0 and target.has_class(name)
        ]
        self.target_points = {name: target.pixels(name) for name in self.classes}
        self.target_distance = {
            name: ndimage.distance_transform_edt(~target.channel(name)).reshape(-1) for name in self.classes
        }
        height, width = self.intr.shape
        rows, cols = np.mgrid[0:height, 0:width]
        self.grid = np.stack([cols.reshape(-1), rows.reshape(-1)], axis=1).astype(float)

    def _pixels(self, iteration: int) -> np.ndarray:
        if self.cfg.pixel_fraction >= 1.0:
            return np.arange(len(self.grid))
        rng = np.random.default_rng([self.cfg.seed, iteration])
        count = max(1, int(round(self.cfg.pixel_fraction * len(self.grid))))
        return np.sort(rng.choice(len(self.grid), size=count, replace=False))

    def __call__(self, pose: RigidPose, iteration: int, with_gradient: bool):
        sigma = self.cfg.sigma_at(iteration)
        rendered = render_landmark_points(self.mesh, self.landmarks, pose, self.intr, self.classes)
        if not rendered.count():
            raise EmptyProjection("no landmark is visible in the render")

        pixels = self._pixels(iteration)
        grid = self.grid[pixels]
        loss = 0.0
        gradient = np.zeros(6)
        for name in self.classes:
            weight = self.cfg.weights[name]
            target = np.exp(-self.target_distance[name][pixels] ** 2 / (2.0 * sigma * sigma))
            points = rendered.points[name]
            response = np.zeros(len(grid))
            nearest = np.full(len(grid), -1)
            if len(points):
                distance, nearest = cKDTree(points).query(grid, distance_upper_bound=KERNEL_REACH_SIGMAS * sigma)
                hit = np.isfinite(distance)
                response[hit] = np.exp(-distance[hit] ** 2 / (2.0 * sigma * sigma))
                nearest = np.where(hit, nearest, -1)
            diff = response - target
            loss += weight * float(np.mean(diff * diff))

            if with_gradient and len(points):
                hit = nearest >= 0
                owner = nearest[hit]
                # d response / d point = response · (pixel − point) / sigma²
                coefficient = 2.0 * weight * diff[hit] * response[hit] / (sigma * sigma * len(grid))
                offset = grid[hit] - points[owner]
                d_points = np.stack([
                    np.bincount(owner, coefficient * offset[:, 0], minlength=len(points)),
                    np.bincount(owner, coefficient * offset[:, 1], minlength=len(points)),
                ], axis=1)
                gradient += np.einsum("ki,kij->j", d_points, rendered.jacobians[name])

        return loss, (gradient if with_gradient else None), False


def prealign(problem: RegistrationProblem, pose: RigidPose, cfg: OptimizerConfig, frame: CentredFrame) -> RigidPose:
    """Slide the model parallel to the image plane until the rendered ligament centroid meets the target's.

    Falls back to all landmark classes when either side lacks a ligament.
    """
    intr = problem.intr.scaled(cfg.render_scale)
    target = resize_map(problem.target2d, intr.shape)
    for _ in range(PREALIGN_ROUNDS):
        try:
            rendered = render_landmark_points(frame.mesh, problem.landmarks3d, pose, intr, ("ridge", "ligament", "silhouette"))
        except EmptyProjection:
            return pose
        if len(rendered.points["ligament"]) and target.has_class("ligament"):
            ours, theirs = rendered.points["ligament"], target.pixels("ligament")
        else:
            ours = np.concatenate([p for p in rendered.points.values() if len(p)] or [np.zeros((0, 2))])
            theirs = np.concatenate([target.pixels(name) for name in ("ridge", "ligament", "silhouette")])
        if not len(ours) or not len(theirs):
            return pose
        shift = theirs.mean(axis=0) - ours.mean(axis=0)
        depth = pose.t[2]
        pose = RigidPose(pose.R, pose.t + np.array([shift[0] * depth / intr.fx, shift[1] * depth / intr.fy, 0.0]))
    return pose


def landmark_render_run(problem: RegistrationProblem, init: RigidPose, cfg: OptimizerConfig) -> RegistrationResult:
    """One restart of the landmark-map optimizer: pre-alignment, then descent."""
    frame = CentredFrame(problem.mesh)
    objective = LandmarkMapObjective(problem, cfg, frame)
    if not objective.classes:
        raise EmptyProjection("the target map carries no weighted landmark class")
    start = prealign(problem, frame.to_centred(init), cfg, frame)
    outcome = descend(objective, start, cfg, cfg.iterations, label=f"landmark-dr seed {cfg.seed}")
    return RegistrationResult(
        pose=frame.from_centred(outcome.pose),
        final_loss=outcome.trace[-1],
        loss_trace=outcome.trace,
        converged=outcome.converged,
        seed=cfg.seed,
    )


# ── Two-phase Chamfer objective ────────────────────────────────────────

class ChamferObjective:
    """Soft-silhouette image loss plus symmetric 2D Chamfer distance of projected landmarks.

    Landmarks are projected at full resolution; the silhouette term and the
    visibility test use the reduced render resolution.
    """

    def __init__(self, problem: RegistrationProblem, cfg: OptimizerConfig, frame: CentredFrame):
        self.mesh = frame.mesh
        self.landmarks = problem.landmarks3d
        self.cfg = cfg
        self.intr = problem.intr
        self.render_intr = problem.intr.scaled(cfg.render_scale)
        self.silhouette_target = None
        if problem.silhouette_target is not None:
            self.silhouette_target = resize_mask(problem.silhouette_target, self.render_intr.shape).values

        self.classes = [
            name for name in LANDMARK_CLASSES
            if problem.target2d.has_class(name) and problem.landmarks3d.indices(name)
        ]
        self.nearest_target = {}
        self.target_samples = {}
        for name in self.classes:
            channel = problem.target2d.channel(name)
            _, (rows, cols) = ndimage.distance_transform_edt(~channel, return_indices=True)
            self.nearest_target[name] = np.stack([cols, rows], axis=-1).astype(float)
            pixels = problem.target2d.pixels(name)
            if len(pixels) > cfg.chamfer_samples:
                pixels = pixels[np.linspace(0, len(pixels) - 1, cfg.chamfer_samples).astype(np.int64)]
            self.target_samples[name] = pixels

    def visible_landmarks(self, pose: RigidPose, raster=None) -> dict:
        raster = raster or rasterize(self.mesh, pose, self.render_intr)
        return {
            name: visible_vertices(self.mesh, pose, self.render_intr, raster=raster, indices=self.landmarks.indices(name))
            for name in self.classes
        }

    def nearest_target_pixels(self, name: str, points: np.ndarray) -> np.ndarray:
        height, width = self.intr.shape
        cols = np.clip(np.floor(points[:, 0] + 0.5), 0, width - 1).astype(np.int64)
        rows = np.clip(np.floor(points[:, 1] + 0.5), 0, height - 1).astype(np.int64)
        return self.nearest_target[name][rows, cols]

    def __call__(self, pose: RigidPose, iteration: int, with_gradient: bool):
        raster = rasterize(self.mesh, pose, self.render_intr)
        loss = 0.0
        gradient = np.zeros(6)
        degenerate = False

        if self.silhouette_target is not None:
            soft = soft_silhouette(self.mesh, pose, self.render_intr, self.cfg.softness,
                                   with_gradient=with_gradient, raster=raster)
            diff = soft.mask.values - self.silhouette_target
            loss += float(np.mean(diff * diff))
            degenerate = soft.degenerate
            if with_gradient:
                gradient += 2.0 * diff[soft.band_rows, soft.band_cols] @ soft.band_gradient / diff.size

        visible = self.visible_landmarks(pose, raster)
        for name in self.classes:
            indices = visible[name]
            if not len(indices):
                continue
            vertices = self.mesh.vertices[indices]
            points = project_camera_points(self.intr, pose.apply(vertices))

            forward = points - self.nearest_target_pixels(name, points)
            samples = self.target_samples[name]
            _, owner = cKDTree(points).query(samples)
            backward = points[owner] - samples
            loss += self.cfg.chamfer_weight * (
                float(np.mean(np.sum(forward * forward, axis=1)))
                + float(np.mean(np.sum(backward * backward, axis=1)))
            )

            if with_gradient:
                d_points = 2.0 * forward / len(points)
                d_points[:, 0] += np.bincount(owner, 2.0 * backward[:, 0] / len(samples), minlength=len(points))
                d_points[:, 1] += np.bincount(owner, 2.0 * backward[:, 1] / len(samples), minlength=len(points))
                jac = projection_jacobian(self.intr, pose, vertices)
                gradient += self.cfg.chamfer_weight * np.einsum("ki,kij->j", d_points, jac)

        return loss, (gradient if with_gradient else None), degenerate


def phase_two(objective: ChamferObjective, pose: RigidPose, cfg: OptimizerConfig):
    """Freeze nearest-neighbour pairs found at `pose` and minimise their reprojection residuals.

    Returns (pose, trace of mean squared residuals) or None when fewer than
    four pairs exist.
    """
    try:
        visible = objective.visible_landmarks(pose)
    except EmptyProjection:
        return None
    model_points, pixels = [], []
    for name, indices in visible.items():
        if not len(indices):
            continue
        vertices = objective.mesh.vertices[indices]
        projected = project_camera_points(objective.intr, pose.apply(vertices))
        model_points.append(vertices)
        pixels.append(objective.nearest_target_pixels(name, projected))
    if not model_points or sum(len(p) for p in model_points) < 4:
        logger.debug("Too few visible landmark pairs for the correspondence phase")
        return None
    refined, trace, _ = refine_pose(
        np.concatenate(model_points),
        np.concatenate(pixels),
        objective.intr,
        pose,
        iterations=cfg.phase2_iterations,
        distortion=True,
        strict=False,
    )
    return refined, trace


def default_chamfer_init(cfg: OptimizerConfig) -> RigidPose:
    return RigidPose(np.eye(3), np.array([0.0, 0.0, cfg.initial_depth]))


def chamfer_register(problem: RegistrationProblem, cfg: OptimizerConfig, init: Optional[RigidPose] = None) -> RegistrationResult:
    """Image loss plus Chamfer descent, then frozen-correspondence refinement.

    The trace holds the phase-one losses followed by the mean squared
    residuals of the correspondence phase.
    """
    init = default_chamfer_init(cfg) if init is None else init
    frame = CentredFrame(problem.mesh)
    objective = ChamferObjective(problem, cfg, frame)
    outcome = descend(objective, frame.to_centred(init), cfg, cfg.iterations, label="chamfer-dr")
    pose, trace, converged = outcome.pose, list(outcome.trace), outcome.converged

    if cfg.phase2_iterations > 0:
        refined = phase_two(objective, pose, cfg)
        if refined is not None:
            pose, residuals = refined
            trace.extend(residuals)
            converged = True

    logger.info(f"Chamfer registration finished after {len(trace) - 1} steps, loss {trace[-1]:.6g}")
    return RegistrationResult(
        pose=frame.from_centred(pose),
        final_loss=trace[-1],
        loss_trace=trace,
        converged=converged,
        seed=cfg.seed,
    )
