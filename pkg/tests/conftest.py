import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20240915)


def random_orthogonal(rng, n=4):
    q, r = np.linalg.qr(rng.normal(size=(n, n)))
    return q * np.sign(np.diag(r))


def well_conditioned_stack(rng, n):
    """Random 4x4 matrices with singular values in [0.5, 2] (cond <= 4)."""
    q1, _ = np.linalg.qr(rng.normal(size=(n, 4, 4)))
    q2, _ = np.linalg.qr(rng.normal(size=(n, 4, 4)))
    sv = rng.uniform(0.5, 2.0, size=(n, 4))
    return np.einsum("nij,nj,njk->nik", q1, sv, q2)


def matmul_pixels(a, b):
    return np.einsum("...ij,...jk->...ik", a, b)


def random_depolarizer(rng, lo=0.5, hi=0.9):
    """Pure depolarizer with a random symmetric positive 3x3 block."""
    basis = random_orthogonal(rng, 3)
    block = basis @ np.diag(rng.uniform(lo, hi, size=3)) @ basis.T
    out = np.eye(4)
    out[1:, 1:] = block
    return out


def random_factor_triplet(rng):
    """Random (depolarizer, retarder, diattenuator) with an admissible product."""
    import math

    from polaraug import is_admissible, make_diattenuator, make_linear_retarder

    while True:
        depol = random_depolarizer(rng)
        ret = make_linear_retarder(rng.uniform(0, math.pi), rng.uniform(0.1, math.pi - 0.1))
        diat = make_diattenuator(rng.uniform(0.0, 0.6), rng.uniform(0, math.pi))
        product = depol @ ret @ diat
        if is_admissible(product, 1e-9):
            return depol, ret, diat, product
