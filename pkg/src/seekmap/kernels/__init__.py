"""Kernel backend selection: compiled extension if built, pure Python otherwise.

Set SEEKMAP_PURE_KERNELS=1 to force the fallback (used by the benchmark).
"""

import os

BLOCK = 8
BLOCK_VOL = 512

if os.environ.get("SEEKMAP_PURE_KERNELS") == "1":
    from seekmap.kernels.pure import SubmapCore, pack_key, unpack_key

    BACKEND = "pure"
else:
    try:
        from seekmap.kernels._compiled import SubmapCore, pack_key, unpack_key

        BACKEND = "compiled"
    except ImportError:
        from seekmap.kernels.pure import SubmapCore, pack_key, unpack_key

        BACKEND = "pure"

__all__ = ["SubmapCore", "pack_key", "unpack_key", "BACKEND", "BLOCK", "BLOCK_VOL"]
