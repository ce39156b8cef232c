"""Modal decomposition and first-order spectral sensitivities.

Everything here works on a general real state matrix ``A`` with simple
(non-repeated) spectrum.  Eigenvectors are anchor-normalised: the
largest-magnitude entry of each right eigenvector is pinned to exactly
1, which fixes the otherwise free scaling and makes eigenvector
derivatives well defined (the derivative of the anchor entry is zero).

Eigenvalue derivatives along an affine family ``A + theta*B`` use the
standard left/right eigenvector formula; eigenvector derivatives use
Nelson's method, i.e. one bordered linear solve per mode instead of a
modal superposition.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateSpectrum

#: minimum pairwise eigenvalue gap, relative to ||A||, below which the
#: spectrum is treated as degenerate
GAP_RTOL = 1e-7


@dataclass(eq=False)
class ModalBasis:
    """Sorted, anchor-normalised eigendecomposition of a real matrix."""

    eigenvalues: np.ndarray  # (n,) complex, sorted by (Re, Im)
    M: np.ndarray            # (n, n) right eigenvectors as columns
    Minv: np.ndarray         # (n, n) rows are scaled left eigenvectors
    anchors: np.ndarray      # (n,) anchor row of each eigenvector
    a_norm: float            # 2-norm of the decomposed matrix

    @property
    def n(self) -> int:
        return self.eigenvalues.size


@dataclass(eq=False)
class ModalSensitivity:
    """First-order modal derivatives along one gain direction."""

    dlam: np.ndarray   # (n,) eigenvalue derivatives
    dM: np.ndarray     # (n, n) eigenvector derivatives, columns
    dMinv: np.ndarray  # (n, n) derivative of the inverse basis


def eig_decompose(a: np.ndarray) -> ModalBasis:
    """Eigendecomposition sorted by (Re, Im) with anchored eigenvectors.

    Raises :class:`DegenerateSpectrum` when two eigenvalues are closer
    than ``GAP_RTOL * ||A||_2`` or the eigenbasis cannot be inverted
    accurately.
    """

    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("A must be square")
    if not np.all(np.isfinite(a)):
        raise ValueError("A must be finite")
    n = a.shape[0]
    a_norm = float(np.linalg.norm(a, 2))

    lam, vec = np.linalg.eig(a)
    order = np.lexsort((lam.imag, lam.real))
    lam = lam[order]
    vec = vec[:, order]

    if n > 1:
        gap = np.abs(lam[:, None] - lam[None, :])
        gap[np.diag_indices(n)] = np.inf
        min_gap = float(gap.min())
        if min_gap < GAP_RTOL * max(a_norm, 1e-300):
            raise DegenerateSpectrum(
                f"minimum eigenvalue gap {min_gap:.3e} below "
                f"{GAP_RTOL:.0e} * ||A|| = {GAP_RTOL * a_norm:.3e}"
            )

    anchors = np.argmax(np.abs(vec), axis=0)
    vec = vec / vec[anchors, np.arange(n)]
    vec[anchors, np.arange(n)] = 1.0  # exact by construction

    minv = np.linalg.inv(vec)
    resid = float(np.max(np.abs(vec @ minv - np.eye(n))))
    if resid > 1e-9:
        raise DegenerateSpectrum(
            f"eigenbasis numerically singular (inverse residual {resid:.3e})"
        )
    return ModalBasis(eigenvalues=lam, M=vec, Minv=minv, anchors=anchors,
                      a_norm=a_norm)


def eigenvalue_sensitivities(basis: ModalBasis, b: np.ndarray) -> np.ndarray:
    """d(lambda_i)/d(theta) for the family A + theta*B at theta = 0.

    With rows of ``Minv`` as left eigenvectors scaled so w_i^T v_i = 1,
    the derivative is simply w_i^T B v_i.
    """

    b = np.asarray(b)
    return np.einsum("ij,jk,ki->i", basis.Minv, b, basis.M)


def eigenvector_derivatives(
    a: np.ndarray, basis: ModalBasis, b: np.ndarray, dlam: np.ndarray
) -> ModalSensitivity:
    """Eigenvector derivatives by Nelson's bordered-solve method.

    For each mode the singular system ``(A - lambda_i I) d_i =
    -(B - dlam_i I) v_i`` is made nonsingular by replacing the anchor
    row and column with the corresponding unit row/column, pinning the
    anchor entry of ``d_i`` to exactly zero -- the derivative consistent
    with anchor normalisation.
    """

    a = np.asarray(a, dtype=float)
    b = np.asarray(b)
    n = basis.n
    dm = np.zeros((n, n), dtype=complex)
    eye = np.eye(n)
    for i in range(n):
        v = basis.M[:, i]
        rhs = -(b @ v - dlam[i] * v)
        c = a - basis.eigenvalues[i] * eye
        anchor = basis.anchors[i]
        c[anchor, :] = 0.0
        c[:, anchor] = 0.0
        c[anchor, anchor] = 1.0
        rhs = rhs.copy()
        rhs[anchor] = 0.0
        d = np.linalg.solve(c, rhs)
        d[anchor] = 0.0
        dm[:, i] = d
    dminv = -basis.Minv @ dm @ basis.Minv
    return ModalSensitivity(dlam=np.asarray(dlam, dtype=complex), dM=dm,
                            dMinv=dminv)
