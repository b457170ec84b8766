from .register_command import RegisterCommand
from .eval_2d_command import Eval2DCommand
from .eval_3d_command import Eval3DCommand
from .eval_reg_command import EvalRegCommand
from .render_overlay_command import RenderOverlayCommand
from .synth_command import SynthCommand

__all__ = [
    'RegisterCommand',
    'Eval2DCommand',
    'Eval3DCommand',
    'EvalRegCommand',
    'RenderOverlayCommand',
    'SynthCommand',
]
