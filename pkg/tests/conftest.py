"""Shared fixtures and oracle helpers.

The random-system factory below is the workhorse of the numerical
tests: seeded, always strictly stable (every eigenvalue shifted left of
a margin), with a diagonal PSD energy weight supported on roughly half
the states.  Finite-difference helpers re-decompose perturbed matrices
and match modes back to a reference basis so derivatives can be
compared mode by mode.
"""

import numpy as np
import pytest
from scipy.optimize import linear_sum_assignment

import oscaction as oa
from oscaction import modal, tas


def random_stable_system(seed, n=None, margin=(0.1, 1.0)):
    """Seeded (A, J, x0, B) with A strictly Hurwitz.

    A dense Gaussian matrix is shifted left of its rightmost eigenvalue
    by a margin drawn from ``margin``; J is diagonal, PSD, nonzero on
    about half the states (at least one); B is a dense gain direction.
    """
    rng = np.random.default_rng(seed)
    if n is None:
        n = int(rng.integers(2, 21))
    a = rng.normal(size=(n, n))
    lam = np.linalg.eigvals(a)
    a -= (lam.real.max() + rng.uniform(*margin)) * np.eye(n)
    weights = rng.uniform(0.5, 2.0, size=n)
    mask = rng.random(n) < 0.5
    if not mask.any():
        mask[int(rng.integers(0, n))] = True
    j = np.diag(np.where(mask, weights, 0.0))
    x0 = rng.normal(size=n)
    b = rng.normal(size=(n, n)) / n
    return a, j, x0, b


def matched_eig(a, basis):
    """Eigendecomposition of ``a`` matched and re-anchored to ``basis``.

    Modes are paired with ``basis.eigenvalues`` by an assignment on
    eigenvalue distance and each eigenvector is rescaled so the entry at
    the reference anchor row equals 1 -- the normalisation under which
    eigenvector derivatives are defined.
    """
    lam, vec = np.linalg.eig(a)
    cost = np.abs(basis.eigenvalues[:, None] - lam[None, :])
    _, cols = linear_sum_assignment(cost)
    lam = lam[cols]
    vec = vec[:, cols]
    vec = vec / vec[basis.anchors, np.arange(basis.n)]
    return lam, vec


def total_action_of(a, j, x0):
    """S_inf from a fresh decomposition of ``a`` (for FD oracles)."""
    basis = modal.eig_decompose(a)
    energy = tas.modal_energy(basis, j, x0)
    return tas.total_action(energy, basis.eigenvalues)


def trapezoid(y, dt):
    y = np.asarray(y, dtype=float)
    if y.size < 2:
        return 0.0
    return float(dt * (0.5 * (y[0] + y[-1]) + y[1:-1].sum()))


@pytest.fixture(scope="session")
def case9():
    return oa.load_case(oa.bundled_case_path("ieee9"))


@pytest.fixture(scope="session")
def case39():
    return oa.load_case(oa.bundled_case_path("ieee39"))


@pytest.fixture(scope="session")
def pf9(case9):
    return oa.solve_power_flow(case9)


@pytest.fixture(scope="session")
def pf39(case39):
    return oa.solve_power_flow(case39)
