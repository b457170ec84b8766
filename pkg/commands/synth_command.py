import logging

from config import Config
from models.errors import UsageError

from services.camera_repository import camera_repository
from services.landmark_repository import landmark_repository
from services.mesh_repository import mesh_repository
from services.mesh_service import make_liver_blob
from services.synthetic_case_service import default_camera, synth_case

logger = logging.getLogger(__name__)


class SynthCommand:
    name = "synth"
    help = "Render a synthetic case with a known pose."

    def __init__(self, cli):
        self.cli = cli

    def configure(self, parser):
        parser.add_argument("--out-dir", required=True)
        parser.add_argument("--case-id", default="synthetic")
        parser.add_argument("--seed", type=int)
        parser.add_argument("--mesh", help="OBJ mesh (default: a synthetic liver blob)")
        parser.add_argument("--landmarks3d", help="3D landmark JSON for --mesh")
        parser.add_argument("--subdivisions", type=int, default=3, help="blob icosphere subdivisions")
        parser.add_argument("--camera", help="camera JSON (default: 640x480, f=700 px)")
        parser.add_argument("--pose", help="pose JSON (default: drawn from --seed)")

    def run(self, args) -> int:
        seed = Config.SEED if args.seed is None else args.seed
        if args.mesh:
            if not args.landmarks3d:
                raise UsageError("--mesh needs --landmarks3d")
            mesh = mesh_repository.load(args.mesh)
            landmarks = landmark_repository.load_landmarks3d(args.landmarks3d, vertex_count=mesh.vertex_count)
            mesh = mesh.with_labels(landmarks)
        else:
            mesh = make_liver_blob(subdivisions=args.subdivisions, seed=seed)
        intr = camera_repository.load_camera(args.camera) if args.camera else default_camera()
        pose = camera_repository.load_pose(args.pose) if args.pose else None

        case = synth_case(mesh, intr, pose=pose, seed=seed, out_dir=args.out_dir, case_id=args.case_id)
        manifest = case.bundle.manifest_path
        logger.info(f"Synthetic case {args.case_id} written to {manifest}")
        print(manifest)
        return 0


def setup(cli):
    cli.add_command(SynthCommand(cli))
