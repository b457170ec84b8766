import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from typing import Optional

from models import OptimizerConfig, RegistrationProblem, RegistrationResult, RigidPose
from models.errors import (
    AllRestartsFailed,
    ConfigurationError,
    EmptyProjection,
    NoConvergence,
    NonPositiveDepth,
)
from models.registration import METHODS
from .initialization_service import init_canonical_pose, init_random_pose
from .metrics_service import reprojection_error
from .pnp_service import curve_correspondences, landmark_pools, pnp_ransac_register, pnp_register, pnp_rms
from .render_registration_service import (
    chamfer_register,
    default_chamfer_init,
    landmark_render_run,
    silhouette_register,
)

logger = logging.getLogger(__name__)

SELECTIONS = ("loss", "hausdorff")
RESTART_FAILURES = (EmptyProjection, NonPositiveDepth, NoConvergence)


class RegistrationService:
    """Service running the registration methods, including multi-start."""

    def _run_method(self, problem: RegistrationProblem, method: str, init: RigidPose, cfg: OptimizerConfig) -> RegistrationResult:
        if method == "silhouette":
            return silhouette_register(problem, init, cfg)
        if method == "landmark-dr":
            return landmark_render_run(problem, init, cfg)
        if method == "chamfer-dr":
            return chamfer_register(problem, cfg, init)
        raise ConfigurationError(f"'{method}' is not a render-and-compare method")

    def _score(self, problem: RegistrationProblem, result: RegistrationResult, selection: str) -> float:
        if selection == "loss":
            return result.final_loss
        report = reprojection_error(result.pose, problem.landmarks3d, problem.mesh, problem.target2d, problem.intr)
        return math.inf if report.hausdorff is None else report.hausdorff

    def multi_start(
        self,
        problem: RegistrationProblem,
        method: str,
        cfg: OptimizerConfig,
        init: Optional[RigidPose] = None,
        selection: str = "loss",
    ) -> RegistrationResult:
        """Run `method` from cfg.restarts seeds and keep the best restart.

        Restart i uses seed cfg.seed + i. Restart 0 starts from `init` when
        given; every other restart starts from a random pose. Ties are broken
        by restart index, so the outcome does not depend on scheduling.
        """
        if selection not in SELECTIONS:
            raise ConfigurationError(f"selection must be one of {', '.join(SELECTIONS)}")

        def run_one(index: int) -> Optional[RegistrationResult]:
            seed = cfg.seed + index
            restart_cfg = replace(cfg, seed=seed)
            try:
                if index == 0 and init is not None:
                    start = init
                else:
                    start = init_random_pose(
                        problem.mesh,
                        problem.intr,
                        rng_seed=seed,
                        depth_range=cfg.depth_range,
                        max_angle_deg=cfg.max_init_angle_deg,
                        anterior=problem.landmarks3d.anterior,
                    )
                result = self._run_method(problem, method, start, restart_cfg)
            except RESTART_FAILURES as e:
                logger.warning(f"{method} restart {index} (seed {seed}) failed: {type(e).__name__}: {e}")
                return None
            if not math.isfinite(result.final_loss):
                logger.warning(f"{method} restart {index} (seed {seed}) ended with a non-finite loss")
                return None
            logger.info(f"{method} restart {index} (seed {seed}): loss {result.final_loss:.6g}")
            return replace(result, restart_index=index, seed=seed)

        if cfg.jobs > 1 and cfg.restarts > 1:
            with ThreadPoolExecutor(max_workers=cfg.jobs) as executor:
                outcomes = list(executor.map(run_one, range(cfg.restarts)))
        else:
            outcomes = [run_one(index) for index in range(cfg.restarts)]

        results = [r for r in outcomes if r is not None]
        if not results:
            raise AllRestartsFailed(f"all {cfg.restarts} {method} restarts failed")

        ranked = sorted(results, key=lambda r: (self._score(problem, r, selection), r.restart_index))
        best = ranked[0]
        logger.info(
            f"Best {method} restart: {best.restart_index} of {cfg.restarts} "
            f"({len(results)} succeeded), loss {best.final_loss:.6g}"
        )
        return best.with_restarts(sorted(results, key=lambda r: r.restart_index))

    def landmark_render_register(
        self,
        problem: RegistrationProblem,
        cfg: OptimizerConfig,
        init: Optional[RigidPose] = None,
        selection: str = "loss",
    ) -> RegistrationResult:
        """Weighted landmark-map registration from cfg.restarts random poses."""
        weighted = [name for name, weight in cfg.weights.items() if weight > 0 and problem.target2d.has_class(name)]
        if not weighted:
            raise AllRestartsFailed("the target landmark map carries no weighted landmark class")
        return self.multi_start(problem, "landmark-dr", cfg, init=init, selection=selection)

    def register_pnp(self, problem: RegistrationProblem, cfg: OptimizerConfig, ransac: bool = False,
                     threshold: float = 3.0, max_iters: int = 1000) -> RegistrationResult:
        """PnP on curve correspondences; the loss is the reprojection RMS in pixels."""
        corrs = curve_correspondences(problem.mesh, problem.landmarks3d, problem.target2d, problem.intr)
        if ransac:
            pools = landmark_pools(problem.mesh, problem.landmarks3d, problem.target2d, problem.intr)
            pose, inliers = pnp_ransac_register(corrs, problem.intr, threshold=threshold, max_iters=max_iters,
                                                seed=cfg.seed, pools=pools)
            rms = pnp_rms(inliers, problem.intr, pose)
            logger.info(f"PnP-RANSAC: {len(inliers)} inliers, RMS {rms:.4g} px")
        else:
            pose = pnp_register(corrs, problem.intr)
            rms = pnp_rms(corrs, problem.intr, pose)
            logger.info(f"PnP: {len(corrs)} correspondences, RMS {rms:.4g} px")
        return RegistrationResult(pose=pose, final_loss=rms, loss_trace=(rms,), converged=True, seed=cfg.seed)

    def run(
        self,
        method: str,
        problem: RegistrationProblem,
        cfg: OptimizerConfig,
        init: Optional[RigidPose] = None,
        selection: str = "loss",
        ransac_threshold: float = 3.0,
    ) -> RegistrationResult:
        """Dispatch to one of the registration methods."""
        if method not in METHODS:
            raise ConfigurationError(f"unknown method '{method}'; choose from {', '.join(METHODS)}")
        logger.info(f"Registering with {method}")
        if method in ("pnp", "pnp-ransac"):
            return self.register_pnp(problem, cfg, ransac=method == "pnp-ransac", threshold=ransac_threshold)
        if method == "silhouette":
            return self.multi_start(problem, method, cfg, init=init_canonical_pose(init), selection=selection)
        if method == "chamfer-dr":
            return self.multi_start(problem, method, cfg, init=init or default_chamfer_init(cfg), selection=selection)
        return self.landmark_render_register(problem, cfg, init=init, selection=selection)


# Global service instance
registration_service = RegistrationService()
