"""Point-process multi-layer depth estimation.

Laplace max-mixture intensity functions over the depth axis, permutation
invariant likelihood and coverage losses with analytic gradients, a recurrent
feature decomposition, peak-extraction inference, and the tuple/point metric
suite, all backed by the C++ core.
"""

try:
    from mldepth._mldepth import *  # noqa: F401,F403  (installed layout)
    from mldepth._mldepth import __version__  # noqa: F401
except ImportError:  # pragma: no cover - build-tree layout
    from _mldepth import *  # noqa: F401,F403
    from _mldepth import __version__  # noqa: F401
