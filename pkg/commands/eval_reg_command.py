from functools import partial

from models import RegistrationReport
from models.errors import UsageError
from services.case_repository import case_repository
from services.evaluation_service import evaluation_service


class EvalRegCommand:
    name = "eval-reg"
    help = "Reprojection error and 2D Hausdorff distance of registered poses."

    def __init__(self, cli):
        self.cli = cli

    def configure(self, parser):
        parser.add_argument("--case", help="case manifest JSON")
        parser.add_argument("--pose", help="estimated pose JSON")
        parser.add_argument("--batch", help="CSV with columns manifest, pose")
        parser.add_argument("--jobs", type=int)
        parser.add_argument("--out", help="report CSV (default: stdout)")

    def run(self, args) -> int:
        if args.batch:
            rows = case_repository.read_batch(args.batch, ("manifest", "pose"))
            tasks = [partial(evaluation_service.eval_reg_case, row["manifest"], row["pose"]) for row in rows]
        elif args.case and args.pose:
            tasks = [partial(evaluation_service.eval_reg_case, args.case, args.pose)]
        else:
            raise UsageError("eval-reg needs --case and --pose, or --batch")

        reports = evaluation_service.with_mean_row(evaluation_service.run_batch(tasks, args.jobs))
        case_repository.write_report(RegistrationReport.CSV_HEADER, [r.csv_row() for r in reports], args.out)
        return 0


def setup(cli):
    cli.add_command(EvalRegCommand(cli))
