"""Deterministic seed derivation so one global seed drives every generator."""

import hashlib


def derive_seed(root_seed: int, *scope) -> int:
    """Stable 63-bit seed for a named sub-stream of ``root_seed``."""
    text = ":".join([str(int(root_seed))] + [str(part) for part in scope])
    digest = hashlib.sha256(text.encode()).digest()
    return int.from_bytes(digest[:8], "big") >> 1
