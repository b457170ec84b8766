from functools import partial

from models import Metric3DReport
from models.errors import UsageError
from services.case_repository import case_repository
from services.evaluation_service import evaluation_service


class Eval3DCommand:
    name = "eval-3d"
    help = "Chamfer distances between predicted and ground-truth 3D landmarks."

    def __init__(self, cli):
        self.cli = cli

    def configure(self, parser):
        parser.add_argument("--mesh", help="OBJ mesh the landmarks index")
        parser.add_argument("--pred", help="predicted 3D landmark JSON")
        parser.add_argument("--gt", help="ground-truth 3D landmark JSON")
        parser.add_argument("--case-id", default="case")
        parser.add_argument("--batch", help="CSV with columns case, mesh, pred, gt")
        parser.add_argument("--jobs", type=int)
        parser.add_argument("--out", help="report CSV (default: stdout)")

    def run(self, args) -> int:
        if args.batch:
            rows = case_repository.read_batch(args.batch, ("case", "mesh", "pred", "gt"))
            tasks = [
                partial(evaluation_service.eval_3d_case, row["case"], row["mesh"], row["pred"], row["gt"])
                for row in rows
            ]
        elif args.mesh and args.pred and args.gt:
            tasks = [partial(evaluation_service.eval_3d_case, args.case_id, args.mesh, args.pred, args.gt)]
        else:
            raise UsageError("eval-3d needs --mesh, --pred and --gt, or --batch")

        reports = evaluation_service.with_mean_row(evaluation_service.run_batch(tasks, args.jobs))
        case_repository.write_report(Metric3DReport.CSV_HEADER, [r.csv_row() for r in reports], args.out)
        return 0


def setup(cli):
    cli.add_command(Eval3DCommand(cli))
