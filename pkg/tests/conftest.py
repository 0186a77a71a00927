import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from schur_shadows.basis import SchurBasis, build_basis
from schur_shadows.qudit import PureState, RngStream
from schur_shadows.young import Partition


_BASIS_CACHE: dict[tuple[int, int], SchurBasis] = {}


@pytest.fixture(scope="session")
def basis_for():
    """Session-memoized basis factory: basis_for(d, n)."""

    def factory(d: int, n: int) -> SchurBasis:
        key = (d, n)
        if key not in _BASIS_CACHE:
            _BASIS_CACHE[key] = build_basis(d, n)
        return _BASIS_CACHE[key]

    return factory


@pytest.fixture(scope="session")
def protocol_state_for(basis_for):
    """Random weight-pure state in the symmetrizer image of a partition.

    Returns (state, weight); deterministic in (lam, d, seed).
    """

    def factory(lam: Partition, d: int, seed: int) -> tuple[PureState, tuple[int, ...]]:
        basis = basis_for(d, lam.n)
        block = basis.blocks[lam]
        gen = RngStream(seed).gen
        pick = gen.choice(block.dim_q)
        weight = block.weight_of_i[pick]
        idx = [i for i, w in enumerate(block.weight_of_i) if w == weight]
        coeff = gen.standard_normal(len(idx)) + 1j * gen.standard_normal(len(idx))
        coeff /= np.linalg.norm(coeff)
        dense = np.zeros(d**lam.n, dtype=np.complex128)
        for c, i in zip(coeff, idx):
            dense += c * block.vectors[(i, 0)].to_dense(d**lam.n)
        return PureState(d, lam.n, dense).normalized(), weight

    return factory
