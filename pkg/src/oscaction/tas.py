"""Kinetic oscillation energy, its action integral, and gain sensitivity.

For the linear deviation dynamics ``dx/dt = A x`` the kinetic energy
``E_k = 0.5 x^T J x`` (J diagonal PSD) has the closed modal form
``E_k = 0.5 z^T G z`` with ``z = Minv x`` and ``G = M^T J M`` -- plain
transpose, not conjugate, so the expression stays an analytic function
of the eigendata.  Its time integral from a disturbance ``x0``,

    S(tau) = 0.5 * sum_ij (exp((li+lj) tau) - 1)/(li+lj) z0i z0j g_ij,

converges for tau -> inf when the retained modes are strictly stable:

    S_inf = -0.5 * sum_ij z0i z0j g_ij / (li + lj).

``total_action_sensitivity`` differentiates S_inf along an affine gain
family A(theta) = A0 + theta*B using the modal derivatives, and splits
the result into a basis/initial-condition part (alpha) and the
eigenvalue-shift part sum_i beta_i dlambda_i, which is the cheap
column used for screening many candidates.

The structural zero mode of angle-referenced swing models carries no
kinetic energy; it is filtered out after verifying exactly that (its
rows of G must vanish).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import (
    DegenerateDisturbance,
    ImaginaryResidueExceeded,
    NotAsymptoticallyStable,
    OscActionError,
    ResonantPair,
    ZeroModeCarriesEnergy,
)
from .modal import (
    ModalBasis,
    ModalSensitivity,
    eig_decompose,
    eigenvalue_sensitivities,
    eigenvector_derivatives,
)

#: Re(lambda) must be below -STABILITY_TOL for a mode to count as stable
STABILITY_TOL = 1e-9

#: relative tolerance on imaginary residues of real-by-construction sums
REALITY_RTOL = 1e-9

#: |lambda| < ZERO_MODE_RTOL * ||A|| marks a candidate zero mode
ZERO_MODE_RTOL = 1e-7


def kinetic_energy(j: np.ndarray, dx: np.ndarray) -> float:
    """0.5 * dx^T J dx for one state deviation."""

    dx = np.asarray(dx, dtype=float)
    return 0.5 * float(dx @ (np.asarray(j) @ dx))


@dataclass(eq=False)
class ModalEnergy:
    """Kinetic energy data of one disturbance in one modal basis."""

    G: np.ndarray         # (n, n) complex symmetric, full mode set
    z0: np.ndarray        # (n,) modal initial condition
    retained: np.ndarray  # indices of modes kept in action sums


@dataclass(eq=False)
class SensitivityBreakdown:
    """d(S_inf)/d(theta) for one actuator direction, decomposed."""

    total: float            # full derivative
    alpha: float            # basis + initial-condition contribution
    beta: np.ndarray        # (nr,) per-retained-mode weights
    dlam: np.ndarray        # (nr,) eigenvalue derivatives used
    beta_term: float        # Re(sum_i beta_i * dlam_i)
    imag_residue: float     # |Im| of the raw complex total
    retained: np.ndarray


def modal_energy(basis: ModalBasis, j: np.ndarray, dx0: np.ndarray,
                 mode_filter_tol: float | None = None) -> ModalEnergy:
    """Project a disturbance onto the modal energy form.

    Modes with ``|lambda| < mode_filter_tol`` (default
    ``ZERO_MODE_RTOL * ||A||``) are dropped from the retained set, but
    only after checking that their rows of G are negligible; otherwise
    :class:`ZeroModeCarriesEnergy` is raised, because dropping them
    would discard energy.
    """

    j = np.asarray(j, dtype=float)
    dx0 = np.asarray(dx0, dtype=float)
    g = basis.M.T @ j @ basis.M
    asym = float(np.max(np.abs(g - g.T)))
    gmax = float(np.max(np.abs(g)))
    if gmax > 0.0 and asym > 1e-12 * gmax:
        raise OscActionError(
            f"modal energy matrix asymmetric ({asym:.3e} vs {gmax:.3e})"
        )
    g = 0.5 * (g + g.T)
    z0 = basis.Minv @ dx0

    tol = ZERO_MODE_RTOL * basis.a_norm if mode_filter_tol is None \
        else mode_filter_tol
    lam = basis.eigenvalues
    small = np.abs(lam) < tol
    for i in np.flatnonzero(small):
        row = float(np.max(np.abs(g[i, :])))
        if row > 1e-7 * max(gmax, 1e-300):
            raise ZeroModeCarriesEnergy(
                f"mode {i} (lambda = {lam[i]:.3e}) has G-row magnitude "
                f"{row:.3e}, not negligible vs ||G|| = {gmax:.3e}"
            )
    retained = np.flatnonzero(~small)
    return ModalEnergy(G=g, z0=z0, retained=retained)


def _retained(energy: ModalEnergy, eigenvalues: np.ndarray):
    r = energy.retained
    lam = np.asarray(eigenvalues)[r]
    z = energy.z0[r]
    g = energy.G[np.ix_(r, r)]
    return lam, z, g


def _require_stable(lam: np.ndarray, retained: np.ndarray) -> None:
    bad = np.flatnonzero(lam.real >= -STABILITY_TOL)
    if bad.size:
        modes = [complex(lam[i]) for i in bad]
        raise NotAsymptoticallyStable(
            "retained modes not strictly stable: "
            + ", ".join(f"{m:.6g}" for m in modes),
            modes=modes,
        )


def _real_part(value: complex, what: str) -> float:
    residue = abs(value.imag)
    if residue > REALITY_RTOL * (1.0 + abs(value.real)):
        raise ImaginaryResidueExceeded(
            f"{what} kept imaginary residue {residue:.3e} "
            f"(real part {value.real:.6g})"
        )
    return float(value.real)


def action(energy: ModalEnergy, eigenvalues: np.ndarray, tau: float) -> float:
    """Finite-horizon action S(tau) of the kinetic energy.

    Needs ``lambda_i + lambda_j != 0`` for all retained pairs; raises
    :class:`ResonantPair` otherwise.
    """

    if tau < 0.0:
        raise ValueError("tau must be >= 0")
    if tau == 0.0:
        return 0.0
    lam, z, g = _retained(energy, eigenvalues)
    if lam.size == 0:
        return 0.0
    dsum = lam[:, None] + lam[None, :]
    if np.min(np.abs(dsum)) < 1e-9:
        raise ResonantPair(
            "a retained mode pair has lambda_i + lambda_j ~ 0; "
            "finite-horizon action undefined"
        )
    kernel = (np.exp(dsum * tau) - 1.0) / dsum
    s = 0.5 * (z @ (kernel * g) @ z)
    return _real_part(s, f"S({tau})")


def total_action(energy: ModalEnergy, eigenvalues: np.ndarray) -> float:
    """Infinite-horizon action S_inf; retained modes must be stable."""

    lam, z, g = _retained(energy, eigenvalues)
    if lam.size == 0:
        return 0.0
    _require_stable(lam, energy.retained)
    dsum = lam[:, None] + lam[None, :]
    s = -0.5 * (z @ (g / dsum) @ z)
    return _real_part(s, "S_inf")


# ---------------------------------------------------------------------------
# Lyapunov-equation route (independent of the modal sums)
# ---------------------------------------------------------------------------


def _lyapunov_kron(a: np.ndarray, j: np.ndarray) -> np.ndarray:
    """Solve A^T P + P A = -J by the dense Kronecker linear system."""

    n = a.shape[0]
    eye = np.eye(n)
    k = np.kron(eye, a.T) + np.kron(a.T, eye)
    try:
        vec_p = np.linalg.solve(k, -j.flatten(order="F"))
    except np.linalg.LinAlgError as exc:
        raise NotAsymptoticallyStable(
            "Lyapunov system singular: marginal or resonant modes present"
        ) from exc
    p = vec_p.reshape((n, n), order="F")
    return 0.5 * (p + p.T)


def total_action_lyapunov(a: np.ndarray, j: np.ndarray, dx0: np.ndarray,
                          zero_mode_tol: float | None = None) -> float:
    """S_inf via the Lyapunov equation instead of the modal expansion.

    Zero modes (|lambda| below ``zero_mode_tol``, default
    ``ZERO_MODE_RTOL * ||A||``) are deflated: the dynamics are restricted
    to the stable invariant subspace with an ordered real Schur form and
    the disturbance is projected onto it along the zero-mode subspace.
    Other marginal or unstable modes raise
    :class:`NotAsymptoticallyStable`.
    """

    a = np.asarray(a, dtype=float)
    j = np.asarray(j, dtype=float)
    dx0 = np.asarray(dx0, dtype=float)
    n = a.shape[0]
    a_norm = float(np.linalg.norm(a, 2))
    ztol = ZERO_MODE_RTOL * a_norm if zero_mode_tol is None else zero_mode_tol

    lam = np.linalg.eigvals(a)
    is_zero = np.abs(lam) < ztol
    bad = (~is_zero) & (lam.real >= -STABILITY_TOL)
    if np.any(bad):
        modes = [complex(v) for v in lam[bad]]
        raise NotAsymptoticallyStable(
            "matrix is not Hurwitz apart from zero modes: "
            + ", ".join(f"{m:.6g}" for m in modes),
            modes=modes,
        )

    if not np.any(is_zero):
        p = _lyapunov_kron(a, j)
        return 0.5 * float(dx0 @ p @ dx0)

    # ordered Schur form: stable block leading, zero modes trailing
    def keep(re, im):
        return (re < -STABILITY_TOL) and (np.hypot(re, im) >= ztol)

    t, q, sdim = scipy.linalg.schur(a, output="real", sort=keep)
    k = int(sdim)
    if k == 0:
        return 0.0
    t11 = t[:k, :k]
    t12 = t[:k, k:]
    t22 = t[k:, k:]
    # oblique projection of dx0 onto the stable invariant subspace along
    # the zero-mode subspace: with T11 R - R T22 = T12 the combination
    # w = y1 + R y2 obeys w' = T11 w, and x = Q1 w + (Q2 - Q1 R) y2 where
    # the second term spans the (energy-free) zero-mode subspace
    r = scipy.linalg.solve_sylvester(t11, -t22, t12)
    y = q.T @ dx0
    y1 = y[:k] + r @ y[k:]
    j_s = q[:, :k].T @ j @ q[:, :k]
    p = _lyapunov_kron(t11, j_s)
    return 0.5 * float(y1 @ p @ y1)


# ---------------------------------------------------------------------------
# sensitivity of the total action
# ---------------------------------------------------------------------------


def total_action_sensitivity(
    linear,
    basis: ModalBasis,
    sens: ModalSensitivity,
    dx0: np.ndarray,
    mode_filter_tol: float | None = None,
) -> SensitivityBreakdown:
    """d(S_inf)/d(theta) with its alpha / beta decomposition.

    ``linear`` provides the energy weight ``J``; ``basis`` and ``sens``
    must describe the state matrix the sensitivity is taken at.  The
    derivative consists of three modal double sums (initial-condition
    shift, energy-matrix shift, eigenvalue shift); the third equals
    ``sum_i beta_i dlambda_i`` exactly, which is returned separately.
    """

    j = np.asarray(linear.J, dtype=float)
    dx0 = np.asarray(dx0, dtype=float)
    energy = modal_energy(basis, j, dx0, mode_filter_tol)
    rset = energy.retained
    lam, z, g = _retained(energy, basis.eigenvalues)
    if lam.size == 0:
        raise NotAsymptoticallyStable("no retained modes", modes=[])
    _require_stable(lam, rset)

    dz_full = sens.dMinv @ dx0
    dg_full = sens.dM.T @ j @ basis.M + basis.M.T @ j @ sens.dM
    dg_full = 0.5 * (dg_full + dg_full.T)
    dz = dz_full[rset]
    dg = dg_full[np.ix_(rset, rset)]
    dlam = np.asarray(sens.dlam)[rset]

    dsum = lam[:, None] + lam[None, :]
    w1 = g / dsum
    sum1 = -(dz @ w1 @ z)
    sum2 = -0.5 * (z @ (dg / dsum) @ z)
    w2 = g / (dsum * dsum)
    sum3 = 0.5 * ((dlam * z) @ w2 @ z + z @ w2 @ (dlam * z))

    raw = sum1 + sum2 + sum3
    residue = abs(raw.imag)
    total = _real_part(raw, "d(S_inf)/d(theta)")

    alpha = (sum1 + sum2).real
    beta = z * (w2 @ z)
    beta_term = float((beta @ dlam).real)
    # the decomposition is an identity; a large gap means broken modal data
    gap = abs(total - (alpha + beta_term))
    if gap > 1e-8 * (1.0 + abs(total)):
        raise OscActionError(
            f"sensitivity decomposition identity violated (gap {gap:.3e})"
        )
    return SensitivityBreakdown(
        total=total,
        alpha=float(alpha),
        beta=beta,
        dlam=dlam,
        beta_term=beta_term,
        imag_residue=residue,
        retained=rset,
    )


# ---------------------------------------------------------------------------
# actuator ranking
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FaultSpec:
    """Disturbance given as a bolted fault instead of a speed vector."""

    bus: int
    duration: float
    dt: float = 1e-3


@dataclass(eq=False)
class RankingRow:
    rank: int
    bus: int
    feedback_gen: int
    alpha: float
    beta_term: float
    total: float
    breakdown: SensitivityBreakdown


@dataclass(eq=False)
class RankingReport:
    rows: list
    dx0: np.ndarray
    meta: dict


def resolve_disturbance(case, pf, disturbance) -> np.ndarray:
    """Turn a disturbance spec into a state deviation vector.

    Accepts a per-generator speed-deviation sequence (rad angles start
    at zero) or a :class:`FaultSpec`, which is integrated through the
    fault with no actuator present.
    """

    from . import dynsim, netmodel

    p = len(case.generators)
    if isinstance(disturbance, FaultSpec):
        eq0 = netmodel.init_classical(case, pf)
        return dynsim.apply_fault(eq0, disturbance.bus, disturbance.duration,
                                  disturbance.dt)
    domega0 = np.asarray(disturbance, dtype=float)
    if domega0.shape != (p,):
        raise ValueError(
            f"speed disturbance must have one entry per generator ({p})"
        )
    return np.concatenate([np.zeros(p), domega0])


def rank_actuators(case, candidates, disturbance, gain: float = 0.0,
                   mode_filter_tol: float | None = None) -> RankingReport:
    """Rank candidate actuator buses by d(S_inf)/d(theta).

    Every candidate bus gets an actuator fed back from its nearest
    generator, the equilibrium is rebuilt with that bus retained, and
    the total-action sensitivity is evaluated at ``theta = gain``
    (default 0, the open loop).  Most negative total first; candidates
    are processed in sorted bus order so the report is deterministic.
    """

    from . import dynsim, netmodel

    candidates = sorted(set(int(b) for b in candidates))
    if not candidates:
        raise ValueError("no candidate buses given")
    pf = netmodel.solve_power_flow(case)
    dx0 = resolve_disturbance(case, pf, disturbance)
    if float(np.max(np.abs(dx0))) == 0.0:
        raise DegenerateDisturbance("disturbance is identically zero")

    entries = []
    for bus in candidates:
        fb = netmodel.nearest_generator(case, bus)
        eq = netmodel.init_classical(case, pf, retained_actuator_bus=bus)
        act = dynsim.Actuator(bus=bus, feedback_gen=fb, gain=gain)
        lm = dynsim.build_linear_model(eq, act)
        basis = eig_decompose(lm.A(gain))
        dlam = eigenvalue_sensitivities(basis, lm.B)
        vsens = eigenvector_derivatives(lm.A(gain), basis, lm.B, dlam)
        bd = total_action_sensitivity(lm, basis, vsens, dx0,
                                      mode_filter_tol=mode_filter_tol)
        entries.append((bus, fb, bd))

    entries.sort(key=lambda e: (e[2].total, e[0]))
    rows = [
        RankingRow(rank=i + 1, bus=bus, feedback_gen=fb, alpha=bd.alpha,
                   beta_term=bd.beta_term, total=bd.total, breakdown=bd)
        for i, (bus, fb, bd) in enumerate(entries)
    ]
    meta = {"gain": gain, "candidates": candidates}
    return RankingReport(rows=rows, dx0=dx0, meta=meta)
