"""Thompson sampling for combinatorial semi-bandits.

Thin Python layer over the C++ core: exact solvers over feasible sets,
posterior models, the Thompson loop, regret bounds and randomization tests.
Option indices are zero-based, as in the C++ API.
"""

from ._core import *  # noqa: F401,F403
from ._core import __doc__  # noqa: F401

__version__ = "0.1.0"


def solve_top_m(theta_hat, m):
    """Indices of the m largest entries, ties to the lower index."""
    return solve(TopM(len(theta_hat), m), list(theta_hat)).action.selected()  # noqa: F405
