"""Counter-based random streams keyed by (master seed, replica, label).

Every replica draws from independent Philox streams, one per purpose, so the
main walk, auxiliary probe walks and policy coin flips never share state.
Coupling experiments hand the *same* ``walk`` stream to two different models.

Edge reveals for lazily materialised initial domains do not consume a stream
at all: they are a pure hash of ``(seed, edge id)`` (see :func:`edge_uniform`).
"""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

LABELS = {"walk": 0, "aux": 1, "policy": 2, "domain": 3}

_MASK64 = (1 << 64) - 1


def stream(master_seed: int, replica: int = 0, label: str = "walk") -> np.random.Generator:
    """Return the Philox generator for ``(master_seed, replica, label)``."""
    if label not in LABELS:
        raise ValueError(f"unknown stream label {label!r}; expected one of {sorted(LABELS)}")
    ss = np.random.SeedSequence(int(master_seed), spawn_key=(int(replica), LABELS[label]))
    return np.random.Generator(np.random.Philox(ss))


@dataclass
class Streams:
    walk: np.random.Generator
    aux: np.random.Generator
    policy: np.random.Generator

    @classmethod
    def from_seed(cls, master_seed: int, replica: int = 0) -> "Streams":
        return cls(
            walk=stream(master_seed, replica, "walk"),
            aux=stream(master_seed, replica, "aux"),
            policy=stream(master_seed, replica, "policy"),
        )


def domain_seed(master_seed: int, replica: int = 0) -> int:
    """64-bit key for hash-based edge reveals of one replica."""
    ss = np.random.SeedSequence(int(master_seed), spawn_key=(int(replica), LABELS["domain"]))
    return int(ss.generate_state(1, dtype=np.uint64)[0]) & ((1 << 63) - 1)


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def edge_uniform(seed: int, edge_id: int) -> float:
    """Uniform in [0, 1) determined by ``seed`` and a non-negative edge id."""
    h = splitmix64((splitmix64(seed & _MASK64) ^ (edge_id & _MASK64)) & _MASK64)
    return (h >> 11) * (1.0 / 9007199254740992.0)


@numba.njit(cache=True)
def _splitmix64_nb(x):
    x = x + np.uint64(0x9E3779B97F4A7C15)
    x = (x ^ (x >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    x = (x ^ (x >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return x ^ (x >> np.uint64(31))


@numba.njit(cache=True)
def edge_uniform_nb(seed, edge_id):
    h = _splitmix64_nb(_splitmix64_nb(np.uint64(seed)) ^ np.uint64(edge_id))
    return np.float64(h >> np.uint64(11)) * (1.0 / 9007199254740992.0)
