"""Deterministic RNG streams.

Every random choice in the pipeline draws from a stream derived from the run
seed plus stable string tokens (item ids, stage names). Streams are
independent of scheduling order, which is what makes whole runs byte-for-byte
reproducible. ``hashlib`` is used instead of ``hash()`` because the latter is
salted per process.
"""

import hashlib
import random


def derive_seed(*tokens) -> int:
    text = ":".join(str(t) for t in tokens)
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def derive_rng(*tokens) -> random.Random:
    return random.Random(derive_seed(*tokens))
