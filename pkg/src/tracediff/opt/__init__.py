"""Simplification of transformed definitions."""

from .pipeline import finalize_transposed, optimize_def
from .simplify import DEFAULT, PassConfig, simplify
from .tapes import compact, retype
from .inline import inline_all
