"""Forward-mode lifting, transposition and the vjp/jvp/hessian recipes."""

from .forward import DUAL, dual_of, lift_jvp
from .roles import analyze
from .transpose import TransposeResult, transpose, transpose_names
from .vjp import VjpRecord, build_vjp, hessian, jvp, vjp, vjp_pair
