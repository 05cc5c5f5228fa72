"""Kernel backend selection.

The compiled extension ``magberry._ckernels`` is used when importable;
otherwise (or with ``MAGBERRY_PURE_PYTHON=1``) the NumPy fallback in
``magberry._pykernels`` is used. Both expose ``stencil_apply``,
``cn_jacobi_solve`` and ``tql2``.
"""

import os

from magberry import _pykernels

python_backend = _pykernels

if os.environ.get("MAGBERRY_PURE_PYTHON", "") not in ("", "0"):
    compiled_backend = None
else:
    try:
        from magberry import _ckernels as compiled_backend
    except ImportError:  # extension not built
        compiled_backend = None

backend = compiled_backend if compiled_backend is not None else python_backend
BACKEND = "cython" if compiled_backend is not None else "python"

stencil_apply = backend.stencil_apply
cn_jacobi_solve = backend.cn_jacobi_solve
tql2 = backend.tql2
