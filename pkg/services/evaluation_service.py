import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Optional, Sequence

from config import Config
from models import Metric2DReport, Metric3DReport, RegistrationReport
from .camera_repository import camera_repository
from .case_repository import case_repository
from .landmark_repository import landmark_repository
from .mesh_repository import mesh_repository
from .metrics_service import batch_means, evaluate_2d, mean_chamfer, reprojection_error

logger = logging.getLogger(__name__)


class EvaluationService:
    """Service computing per-case metric reports from files, alone or in batches."""

    def eval_2d_case(self, case_id: str, pred_path, gt_path, tolerance: float = 0.0,
                     d_max: Optional[float] = None) -> Metric2DReport:
        pred = landmark_repository.load_label_map(pred_path)
        gt = landmark_repository.load_label_map(gt_path)
        return evaluate_2d(pred, gt, tolerance=tolerance, d_max=d_max, case_id=case_id)

    def eval_3d_case(self, case_id: str, mesh_path, pred_path, gt_path) -> Metric3DReport:
        mesh = mesh_repository.load(mesh_path)
        pred = landmark_repository.load_landmarks3d(pred_path, vertex_count=mesh.vertex_count)
        gt = landmark_repository.load_landmarks3d(gt_path, vertex_count=mesh.vertex_count)
        return mean_chamfer(pred, gt, mesh, case_id=case_id)

    def eval_reg_case(self, manifest_path, pose_path) -> RegistrationReport:
        bundle = case_repository.load_bundle(manifest_path)
        pose = camera_repository.load_pose(pose_path)
        return reprojection_error(pose, bundle.landmarks3d, bundle.mesh, bundle.landmarks2d, bundle.intr,
                                  case_id=bundle.case_id)

    def run_batch(self, tasks: Sequence[Callable[[], object]], jobs: Optional[int] = None) -> list:
        """Run independent per-case evaluations and order the reports by case id.

        The first failing case (in submission order) re-raises its error.
        """
        jobs = Config.JOBS if jobs is None else jobs
        if jobs > 1 and len(tasks) > 1:
            with ThreadPoolExecutor(max_workers=jobs) as executor:
                futures = [executor.submit(task) for task in tasks]
                reports = [future.result() for future in futures]
        else:
            reports = [task() for task in tasks]
        reports.sort(key=lambda report: report.case_id)
        logger.info(f"Evaluated {len(reports)} case(s)")
        return reports

    def with_mean_row(self, reports: list) -> list:
        if len(reports) < 2:
            return reports
        return reports + [batch_means(reports)]


# Global service instance
evaluation_service = EvaluationService()
