"""Tests for file-based metric evaluation and batches."""
import numpy as np
import pytest

from models import LandmarkMap2D, LandmarkSet3D, RegistrationReport
from models.errors import MissingAsset
from services.camera_repository import camera_repository
from services.evaluation_service import evaluation_service
from services.landmark_repository import landmark_repository
from services.mesh_repository import mesh_repository


class TestSingleCases:
    def test_eval_2d_from_files(self, tmp_path):
        ridge = np.zeros((100, 100), dtype=bool)
        ridge[40, 10:60] = True
        gt = LandmarkMap2D.from_channels((100, 100), ridge=ridge)
        landmark_repository.save_label_map(gt, tmp_path / "gt.png")
        landmark_repository.save_label_map(gt, tmp_path / "pred.png")
        report = evaluation_service.eval_2d_case("1_1", tmp_path / "pred.png", tmp_path / "gt.png")
        assert report.ridge.precision == pytest.approx(1.0)
        assert report.ridge.symmetric_score == pytest.approx(0.0)
        assert report.csv_row()[2] == "NA"

    def test_eval_3d_from_files(self, triangle, tmp_path):
        mesh_repository.save(triangle, tmp_path / "mesh.obj")
        landmark_repository.save_landmarks3d(LandmarkSet3D(ridge={0}, ligament={2}), tmp_path / "pred.json")
        landmark_repository.save_landmarks3d(LandmarkSet3D(ridge={0}, ligament={2}), tmp_path / "gt.json")
        report = evaluation_service.eval_3d_case("2_1", tmp_path / "mesh.obj", tmp_path / "pred.json", tmp_path / "gt.json")
        assert report.mean_chamfer == 0.0

    def test_eval_reg_at_the_true_pose(self, synthetic, tmp_path):
        pose_path = tmp_path / "estimate.json"
        camera_repository.save_pose(synthetic.gt_pose, pose_path)
        report = evaluation_service.eval_reg_case(synthetic.bundle.manifest_path, pose_path)
        assert report.case_id == "4_7"
        assert report.rpe_ridge <= 1.0

    def test_missing_prediction(self, tmp_path):
        landmark_repository.save_label_map(LandmarkMap2D.empty(4, 4), tmp_path / "gt.png")
        with pytest.raises(MissingAsset):
            evaluation_service.eval_2d_case("1_1", tmp_path / "absent.png", tmp_path / "gt.png")


class TestBatches:
    @staticmethod
    def tasks():
        return [
            lambda: RegistrationReport("3_1", rpe_ridge=3.0),
            lambda: RegistrationReport("1_1", rpe_ridge=1.0),
            lambda: RegistrationReport("2_1", rpe_ridge=2.0),
        ]

    @pytest.mark.parametrize("jobs", [1, 3])
    def test_reports_are_ordered_by_case(self, jobs):
        reports = evaluation_service.run_batch(self.tasks(), jobs=jobs)
        assert [r.case_id for r in reports] == ["1_1", "2_1", "3_1"]

    def test_failing_case_is_raised(self):
        def broken():
            raise MissingAsset("file not found", path="gone.png")

        with pytest.raises(MissingAsset):
            evaluation_service.run_batch(self.tasks() + [broken], jobs=2)

    def test_mean_row(self):
        reports = evaluation_service.with_mean_row(evaluation_service.run_batch(self.tasks(), jobs=1))
        assert reports[-1].case_id == "mean"
        assert reports[-1].rpe_ridge == pytest.approx(2.0)

    def test_single_case_has_no_mean_row(self):
        reports = [RegistrationReport("1_1", rpe_ridge=1.0)]
        assert evaluation_service.with_mean_row(reports) == reports
