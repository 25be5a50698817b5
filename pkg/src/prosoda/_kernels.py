"""Select the compiled kernels when available, else the numpy fallback.

Set ``PROSODA_KERNELS=python`` to force the fallback.
"""

import os

if os.environ.get("PROSODA_KERNELS", "").lower() == "python":
    from ._pykernels import nccf_matrix, nearest_centroid, viterbi

    BACKEND = "python"
else:
    try:
        from ._ckernels import nccf_matrix, nearest_centroid, viterbi

        BACKEND = "cython"
    except ImportError:
        from ._pykernels import nccf_matrix, nearest_centroid, viterbi

        BACKEND = "python"

__all__ = ["BACKEND", "nccf_matrix", "nearest_centroid", "viterbi"]
