"""Reproducible random streams built on the counter-based Philox generator.

Stream-splitting scheme (pinned; do not change without bumping the archive
format version):

* ``flux_stream(seed, flux_index)`` — one independent stream per freshwater
  flux, obtained by jumping the Philox counter ``flux_index`` times from the
  key ``seed``.  Noise matrices are therefore reproducible across platforms
  from ``(seed, sigma, n_steps, n_fluxes)`` alone.
* ``member_seed(base_seed, k)`` — 64-bit per-member seeds for ensembles,
  derived by hashing ``[base_seed, k]`` through ``numpy.random.SeedSequence``.
  Members are pairwise distinct and order-independent.
"""

import numpy as np

__all__ = ["flux_stream", "member_seed", "generator"]


def flux_stream(seed: int, flux_index: int) -> np.random.Generator:
    """Independent Philox stream for one flux of one noise realization."""
    bits = np.random.Philox(key=np.uint64(seed)).jumped(flux_index)
    return np.random.Generator(bits)


def member_seed(base_seed: int, k: int) -> int:
    """Derive the 64-bit seed of ensemble member ``k`` from ``base_seed``."""
    ss = np.random.SeedSequence([int(base_seed), int(k)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def generator(seed: int) -> np.random.Generator:
    """Philox generator for everything that is not a noise stream."""
    return np.random.Generator(np.random.Philox(key=np.uint64(seed)))
