"""Deterministic seed derivation.

One top-level seed per data pool is expanded into independent, namespaced
sub-seeds (pool split, random demonstration picks, test subsampling, ...) so
that no two stages share a random stream and no global RNG state is used.
"""

from __future__ import annotations

import hashlib

_SEED_BITS = 63


def derive_seed(master: int, namespace: str, counter: int = 0) -> int:
    """Derive a sub-seed for ``namespace`` from a master seed.

    The derivation hashes ``master:namespace:counter`` so that streams for
    different namespaces (or counters) are statistically independent while
    remaining reproducible across platforms and Python versions.
    """
    material = f"{master}:{namespace}:{counter}".encode("utf-8")
    digest = hashlib.sha256(material).digest()
    return int.from_bytes(digest[:8], "big") % (1 << _SEED_BITS)
