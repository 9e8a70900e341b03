"""Counter-based random substreams.

Every random quantity in the package is addressed by ``(seed, step, path)``.
The generator for a given ``(seed, step)`` is a Philox stream whose key is
derived from both integers; path ``n`` owns a fixed block of counters, so a
single path can be regenerated without touching the others and a whole step
can be drawn in one vectorized call.
"""

from __future__ import annotations

import hashlib

import numpy as np
from scipy.special import ndtri

_MASK64 = (1 << 64) - 1


def derive_seed(base_seed: int, tag: str, *indices: int) -> int:
    """Split ``base_seed`` into an independent 64-bit child seed.

    The rule is ``sha256("{base_seed}:{tag}:{i0}:{i1}...")`` truncated to its
    first 8 bytes (big endian). It is stable across platforms and versions.
    """
    text = ":".join([str(int(base_seed)), tag, *(str(int(i)) for i in indices)])
    digest = hashlib.sha256(text.encode("ascii")).digest()
    return int.from_bytes(digest[:8], "big")


def _philox_key(seed: int, step: int) -> np.ndarray:
    ss = np.random.SeedSequence([int(seed) & _MASK64, int(step)])
    return ss.generate_state(2, np.uint64)


def _blocks_per_path(width: int) -> int:
    # one Philox counter yields four 64-bit words
    return max(1, -(-width // 4))


def _raw_to_uniform(raw: np.ndarray) -> np.ndarray:
    # 53-bit mantissa, shifted by half an ulp so 0 and 1 are never produced
    return ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53


def step_uniforms(seed: int, step: int, n_paths: int, width: int) -> np.ndarray:
    """Uniforms on (0, 1) of shape ``(n_paths, width)`` for one step.

    Row ``n`` equals ``path_uniforms(seed, step, n, width)``.
    """
    blocks = _blocks_per_path(width)
    bitgen = np.random.Philox(key=_philox_key(seed, step))
    raw = bitgen.random_raw(n_paths * blocks * 4).reshape(n_paths, blocks * 4)
    return _raw_to_uniform(raw[:, :width])


def path_uniforms(seed: int, step: int, path: int, width: int) -> np.ndarray:
    """Uniforms for a single ``(seed, step, path)`` substream."""
    blocks = _blocks_per_path(width)
    bitgen = np.random.Philox(key=_philox_key(seed, step))
    bitgen.advance(path * blocks)
    return _raw_to_uniform(bitgen.random_raw(blocks * 4)[:width])


def step_normals(seed: int, step: int, n_paths: int, width: int) -> np.ndarray:
    """Standard normals by inversion of :func:`step_uniforms`."""
    return ndtri(step_uniforms(seed, step, n_paths, width))
