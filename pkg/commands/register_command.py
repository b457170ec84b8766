import logging
from pathlib import Path

from models import OptimizerConfig, RegistrationProblem
from models.errors import ConfigurationError
from models.registration import METHODS
from services.camera_repository import camera_repository
from services.case_repository import case_repository, check_shape
from services.landmark_repository import landmark_repository
from services.mesh_repository import mesh_repository
from services.registration_service import SELECTIONS, registration_service

logger = logging.getLogger(__name__)


class RegisterCommand:
    name = "register"
    help = "Estimate the pose placing the mesh over the image landmarks."

    def __init__(self, cli):
        self.cli = cli

    def configure(self, parser):
        parser.add_argument("--method", required=True, choices=METHODS)
        parser.add_argument("--mesh", required=True, help="OBJ mesh (mm)")
        parser.add_argument("--landmarks3d", required=True, help="3D landmark JSON")
        parser.add_argument("--landmarks2d", required=True, help="label-map PNG or polyline JSON")
        parser.add_argument("--camera", required=True, help="camera intrinsics JSON")
        parser.add_argument("--mask", help="liver mask PNG (silhouette and chamfer-dr methods)")
        parser.add_argument("--init-pose", help="initial pose JSON (restart 0)")
        parser.add_argument("--restarts", type=int)
        parser.add_argument("--iterations", type=int)
        parser.add_argument("--seed", type=int)
        parser.add_argument("--render-scale", type=float)
        parser.add_argument("--gradient", choices=("analytic", "numeric"))
        parser.add_argument("--selection", choices=SELECTIONS, default="loss")
        parser.add_argument("--ransac-threshold", type=float, default=3.0, help="inlier threshold in px")
        parser.add_argument("--jobs", type=int, help="parallel restarts")
        parser.add_argument("--out", required=True, help="output pose JSON")
        parser.add_argument("--trace", help="output loss trace CSV")

    def load_problem(self, args) -> RegistrationProblem:
        intr = camera_repository.load_camera(args.camera)
        mesh = mesh_repository.load(args.mesh)
        landmarks3d = landmark_repository.load_landmarks3d(args.landmarks3d, vertex_count=mesh.vertex_count)
        mesh = mesh.with_labels(landmarks3d)

        if Path(args.landmarks2d).suffix.lower() == ".json":
            target = landmark_repository.load_polylines(args.landmarks2d, intr.shape)
        else:
            target = landmark_repository.load_label_map(args.landmarks2d)
            check_shape(target.shape, intr, args.landmarks2d, "label map")

        mask = None
        if args.mask:
            mask = landmark_repository.load_mask(args.mask)
            check_shape(mask.shape, intr, args.mask, "mask")
        return RegistrationProblem(mesh, landmarks3d, target, intr, silhouette_target=mask)

    def optimizer_config(self, args) -> OptimizerConfig:
        try:
            return OptimizerConfig.for_method(
                args.method,
                restarts=args.restarts,
                iterations=args.iterations,
                seed=args.seed,
                render_scale=args.render_scale,
                gradient=args.gradient,
                jobs=args.jobs,
            )
        except ValueError as e:
            raise ConfigurationError(str(e)) from e

    def run(self, args) -> int:
        cfg = self.optimizer_config(args)
        problem = self.load_problem(args)
        init = camera_repository.load_pose(args.init_pose) if args.init_pose else None

        result = registration_service.run(
            args.method,
            problem,
            cfg,
            init=init,
            selection=args.selection,
            ransac_threshold=args.ransac_threshold,
        )
        camera_repository.save_pose(result.pose, args.out)
        if args.trace:
            case_repository.write_trace(result, args.trace)

        logger.info(f"Wrote pose to {args.out}")
        print(f"{args.method}: restart {result.restart_index}, final loss {result.final_loss:.6g}, pose {args.out}")
        return 0


def setup(cli):
    cli.add_command(RegisterCommand(cli))
