"""Shared plumbing: error types, seed splitting, config hashing."""

from __future__ import annotations

import hashlib
import json

import numpy as np

# Alignment values are quantized on a fixed grid so that spooled events,
# aggregated zero-exposure rows and the brute-force oracle agree bit-for-bit.
ALIGNMENT_QUANTUM = 1e-4
ALIGNMENT_STEPS = 10000


class ConfigError(ValueError):
    """Bad flags, windows or mechanism parameters. CLI exit code 2."""


class DataError(ValueError):
    """Unreadable or inconsistent input data. CLI exit code 3."""


def quantize_alignment(s):
    """Snap alignment values to the 1e-4 storage grid.

    Accepts scalars or arrays; returns the same shape as float64 in [0, 1].
    """
    q = np.round(np.asarray(s, dtype=np.float64) * ALIGNMENT_STEPS)
    q = np.clip(q, 0, ALIGNMENT_STEPS)
    out = q / ALIGNMENT_STEPS
    if np.ndim(s) == 0:
        return float(out)
    return out


def alignment_to_index(s):
    """Alignment -> integer grid index in [0, ALIGNMENT_STEPS]."""
    q = np.round(np.asarray(s, dtype=np.float64) * ALIGNMENT_STEPS)
    q = np.clip(q, 0, ALIGNMENT_STEPS)
    if np.ndim(s) == 0:
        return int(q)
    return q.astype(np.uint16)


def split_seed(root_seed, n=None):
    """Derive independent child RNGs from one root seed.

    Counter-based splitting via ``numpy.random.SeedSequence`` so that every
    stage of a run draws from its own stream while staying reproducible from
    a single integer.
    """
    ss = np.random.SeedSequence(root_seed)
    if n is None:
        return np.random.default_rng(ss)
    return [np.random.default_rng(child) for child in ss.spawn(n)]


def config_hash(config: dict) -> str:
    """Stable short hash of a flat config mapping (for output manifests)."""
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]
