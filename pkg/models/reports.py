from dataclasses import dataclass, field
from typing import Optional

NA = "NA"
FAILED = "F"


def _cell(value: Optional[float], sentinel: str) -> str:
    return sentinel if value is None else f"{value:.6f}"


@dataclass(frozen=True)
class ClassScores2D:
    precision: Optional[float] = None
    dsc: Optional[float] = None
    symmetric_score: Optional[float] = None
    present: bool = True


@dataclass(frozen=True)
class Metric2DReport:
    """2D landmark scores per class; absent ground truth is reported as NA."""
    case_id: str = ""
    ridge: ClassScores2D = field(default_factory=ClassScores2D)
    ligament: ClassScores2D = field(default_factory=ClassScores2D)
    silhouette: ClassScores2D = field(default_factory=ClassScores2D)

    CSV_HEADER = (
        "case",
        "precision_ridge", "precision_ligament", "precision_silhouette",
        "dsc_ridge", "dsc_ligament", "dsc_silhouette",
        "g_ridge", "g_ligament", "g_silhouette",
    )

    def scores(self, name: str) -> ClassScores2D:
        return getattr(self, name)

    def csv_row(self) -> list[str]:
        classes = ("ridge", "ligament", "silhouette")
        row = [self.case_id]
        for metric in ("precision", "dsc", "symmetric_score"):
            for name in classes:
                scores = self.scores(name)
                value = getattr(scores, metric) if scores.present else None
                row.append(_cell(value, NA))
        return row


@dataclass(frozen=True)
class Metric3DReport:
    """Chamfer distances (mm²) per class; F marks a failed class."""
    case_id: str = ""
    chamfer_ridge: Optional[float] = None
    chamfer_ligament: Optional[float] = None

    CSV_HEADER = ("case", "chamfer_ridge", "chamfer_ligament", "mean_chamfer")

    @property
    def ridge_failed(self) -> bool:
        return self.chamfer_ridge is None

    @property
    def ligament_failed(self) -> bool:
        return self.chamfer_ligament is None

    @property
    def mean_chamfer(self) -> Optional[float]:
        values = [v for v in (self.chamfer_ridge, self.chamfer_ligament) if v is not None]
        return sum(values) / len(values) if values else None

    def csv_row(self) -> list[str]:
        return [
            self.case_id,
            _cell(self.chamfer_ridge, FAILED),
            _cell(self.chamfer_ligament, FAILED),
            _cell(self.mean_chamfer, FAILED),
        ]


@dataclass(frozen=True)
class RegistrationReport:
    """Reprojection errors and 2D Hausdorff distance in pixels."""
    case_id: str = ""
    rpe_ridge: Optional[float] = None
    rpe_ligament: Optional[float] = None
    hausdorff: Optional[float] = None

    CSV_HEADER = ("case", "rpe_ridge", "rpe_ligament", "hausdorff")

    @property
    def failed(self) -> bool:
        return self.rpe_ridge is None and self.rpe_ligament is None

    def csv_row(self) -> list[str]:
        return [
            self.case_id,
            _cell(self.rpe_ridge, FAILED),
            _cell(self.rpe_ligament, FAILED),
            _cell(self.hausdorff, FAILED),
        ]
