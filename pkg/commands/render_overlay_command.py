from models.errors import MissingAsset
from services.camera_repository import camera_repository
from services.case_repository import case_repository
from services.overlay_service import render_overlay


class RenderOverlayCommand:
    name = "render-overlay"
    help = "Draw the registered silhouette, ridge and ligament over the case image."

    def __init__(self, cli):
        self.cli = cli

    def configure(self, parser):
        parser.add_argument("--case", required=True, help="case manifest JSON")
        parser.add_argument("--pose", help="pose JSON (default: the case's own pose)")
        parser.add_argument("--out", required=True, help="output PNG")
        parser.add_argument("--failure-log", help="append warning records to this file")

    def run(self, args) -> int:
        bundle = case_repository.load_bundle(args.case)
        if args.pose:
            pose = camera_repository.load_pose(args.pose)
        elif bundle.pose is not None:
            pose = bundle.pose
        else:
            raise MissingAsset("the case has no pose; pass --pose", path=args.case)

        render_overlay(bundle, pose, out_path=args.out, record_path=args.failure_log)
        return 0


def setup(cli):
    cli.add_command(RenderOverlayCommand(cli))
