from functools import partial

from models import Metric2DReport
from models.errors import UsageError
from services.case_repository import case_repository
from services.evaluation_service import evaluation_service


class Eval2DCommand:
    name = "eval-2d"
    help = "Precision, DSC and symmetric distance score of predicted 2D landmark maps."

    def __init__(self, cli):
        self.cli = cli

    def configure(self, parser):
        parser.add_argument("--pred", help="predicted label-map PNG")
        parser.add_argument("--gt", help="ground-truth label-map PNG")
        parser.add_argument("--case-id", default="case")
        parser.add_argument("--batch", help="CSV with columns case, pred, gt")
        parser.add_argument("--tolerance", type=float, default=0.0, help="precision tolerance in px")
        parser.add_argument("--d-max", type=float, help="symmetric score band radius in px")
        parser.add_argument("--jobs", type=int)
        parser.add_argument("--out", help="report CSV (default: stdout)")

    def run(self, args) -> int:
        evaluate = partial(evaluation_service.eval_2d_case, tolerance=args.tolerance, d_max=args.d_max)
        if args.batch:
            rows = case_repository.read_batch(args.batch, ("case", "pred", "gt"))
            tasks = [partial(evaluate, row["case"], row["pred"], row["gt"]) for row in rows]
        elif args.pred and args.gt:
            tasks = [partial(evaluate, args.case_id, args.pred, args.gt)]
        else:
            raise UsageError("eval-2d needs --pred and --gt, or --batch")

        reports = evaluation_service.with_mean_row(evaluation_service.run_batch(tasks, args.jobs))
        case_repository.write_report(Metric2DReport.CSV_HEADER, [r.csv_row() for r in reports], args.out)
        return 0


def setup(cli):
    cli.add_command(Eval2DCommand(cli))
