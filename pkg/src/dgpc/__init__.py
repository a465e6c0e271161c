"""Restarted (dynamical) polynomial chaos for SPDEs driven by white noise."""

import os as _os

# BLAS threads must be fixed before numpy loads its backend
if _os.environ.get("DGPC_THREADS"):
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        _os.environ.setdefault(_var, _os.environ["DGPC_THREADS"])

__version__ = "0.1.0"
