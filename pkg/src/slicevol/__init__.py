"""Upper bounds on maximal affine slice volumes of compact semialgebraic sets.

The pipeline: describe a set by polynomial inequalities inside a ball of
known radius, lift the slicing geometry onto an explicit coordinate frame,
compile the slice-volume bounding programs (indicator or Stokes-augmented)
into weighted-SOS semidefinite programs, solve them with the embedded
interior-point solver, and cross-check against a Monte-Carlo slicing oracle.
"""

from .polyalg import Polynomial, RewriteRule, RuleSet, VarSpace, parse_polynomial
from .geometry import (
    BallMomentTable,
    Frame,
    FrameMode,
    SemialgebraicSet,
    ball_moment,
    build_frame,
    lift_set,
)

__version__ = "0.1.0"
