# csmil/core/seeding.py
import hashlib

import numpy as np

MAX_SEED = 2**64 - 1


def derive_seed(root: int, *names: object) -> int:
    """64-bit child seed for a named component of a run"""
    if not 0 <= int(root) <= MAX_SEED:
        raise ValueError(f"seed must fit in 64 bits, got {root}")
    path = "/".join(str(name) for name in names)
    digest = hashlib.blake2b(f"{int(root)}:{path}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def make_rng(root: int, *names: object) -> np.random.Generator:
    if not names:
        return np.random.default_rng(int(root))
    return np.random.default_rng(derive_seed(root, *names))
