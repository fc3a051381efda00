"""Deterministic seed derivation.

All randomness in a run flows from one user-visible 64-bit seed. Child seeds
for independent units of work (grid configurations, final evaluation, dropout
streams) are derived by hashing the parent seed together with a string tag and
integer indices, so parallel execution order cannot change any result. Fold
seeds inside cross-validation are the plain XOR ``seed ^ fold_index``.
"""

import hashlib

_MASK = (1 << 63) - 1


def derive_seed(base: int, *parts) -> int:
    """Derive a child seed from ``base`` and a tuple of str/int components."""
    h = hashlib.sha256()
    h.update(str(int(base)).encode())
    for p in parts:
        h.update(b"\x1f")
        h.update(str(p).encode())
    return int.from_bytes(h.digest()[:8], "little") & _MASK
