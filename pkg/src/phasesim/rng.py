"""Counter-based random streams and the fixed Gaussian generator.

Every stochastic quantity in the simulator is drawn from a Philox
counter-based generator keyed by (master_seed, stream_index), so a run is
reproducible for any scheduling of trajectory batches across workers.
Gaussian variates are produced with the Marsaglia polar method (pair-based,
no ziggurat tables) so the exact draw sequence can be matched by other
implementations given the same uniform stream.
"""

from __future__ import annotations

import math

import numpy as np


def stream(master_seed: int, stream_index: int) -> np.random.Generator:
    """Independent generator for one trajectory batch (or other sub-stream)."""
    key = np.array([master_seed, stream_index], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def derive_seed(master_seed: int, child_index: int) -> int:
    """Deterministic 63-bit child seed for sweep sub-runs."""
    ss = np.random.SeedSequence(entropy=int(master_seed),
                                spawn_key=(int(child_index),))
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


def standard_normals(rng: np.random.Generator, count: int) -> np.ndarray:
    """`count` iid N(0,1) variates via the Marsaglia polar method.

    Pairs (u, v) uniform on [-1, 1)^2 are accepted when 0 < s = u^2+v^2 < 1
    and mapped to the pair (u, v) * sqrt(-2 ln s / s).  Acceptance order is
    deterministic given the uniform stream.
    """
    if count < 0:
        raise ValueError("count must be >= 0")
    out = np.empty(count)
    filled = 0
    while filled < count:
        # pi/4 acceptance, two normals per accepted pair; oversample a bit
        n_pairs = max(16, int((count - filled) * 0.7) + 8)
        uv = rng.random((n_pairs, 2)) * 2.0 - 1.0
        s = uv[:, 0] ** 2 + uv[:, 1] ** 2
        keep = (s > 0.0) & (s < 1.0)
        uv = uv[keep]
        s = s[keep]
        z = (uv * np.sqrt(-2.0 * np.log(s) / s)[:, None]).ravel()
        take = min(z.size, count - filled)
        out[filled:filled + take] = z[:take]
        filled += take
    return out


def normal_array(rng: np.random.Generator, shape: tuple[int, ...],
                 std: float = 1.0) -> np.ndarray:
    """Array of independent Gaussians with the given standard deviation."""
    n = int(math.prod(shape)) if shape else 1
    z = standard_normals(rng, n).reshape(shape)
    if std != 1.0:
        z *= std
    return z
