"""Swing dynamics: nonlinear simulation and linearised gain families.

State vector is ``x = [delta_1..delta_p, domega_1..domega_p]`` with
rotor angles in rad and speed deviations in pu.  The dynamics are the
classical swing equations on the Kron-reduced network built by
:func:`oscaction.netmodel.init_classical`:

    d(delta_j)/dt  = omega_s * domega_j
    2 H_j d(domega_j)/dt = Pm_j - Pe_j - D_j domega_j

A damping actuator is an ideal active-power injection at one retained
network bus, proportional to the speed deviation of a feedback
generator: ``P = -theta * domega_fb`` once active.  The retained bus
voltage is an algebraic variable solved by a small Newton iteration at
every right-hand-side evaluation; the linearisation eliminates it
analytically, which keeps the closed-loop state matrix exactly affine
in the gain: ``A(theta) = A0 + theta * B``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import (
    AffinityError,
    NonConvergence,
    SimulationDiverged,
    UnknownBusError,
)
from .netmodel import EquilibriumModel, kron_reduce

#: absolute power-mismatch tolerance of the inner algebraic solve (pu)
_ALG_TOL = 1e-12
_ALG_MAX_ITER = 20

#: eigenvector alignment below which gain-sweep mode tracking is flagged
TRACKING_MIN_ALIGNMENT = 0.7


@dataclass(frozen=True)
class Actuator:
    """Speed-feedback power injection at one network bus."""

    bus: int
    feedback_gen: int
    gain: float = 0.0
    active_from: float = 0.0


@dataclass(eq=False)
class LinearModel:
    """Affine closed-loop family A(theta) = A0 + theta*B around equilibrium.

    ``J`` is the kinetic-energy weight: diagonal, ``2 H_j`` at the speed
    entries and zero elsewhere, so ``E_k = 0.5 x^T J x``.
    """

    A0: np.ndarray
    B: np.ndarray
    J: np.ndarray
    speed_indices: np.ndarray
    actuator: Actuator | None = None

    @property
    def n(self) -> int:
        return self.A0.shape[0]

    def A(self, theta: float) -> np.ndarray:
        return self.A0 + theta * self.B


@dataclass(eq=False)
class Trajectory:
    """Fixed-step integration result."""

    t: np.ndarray        # (ns,)
    states: np.ndarray   # (ns, 2p)
    ek: np.ndarray       # (ns,) kinetic oscillation energy, pu*s
    meta: dict = field(default_factory=dict)


@dataclass(eq=False)
class GainSweep:
    """Eigenvalues of A(theta) over a gain grid with mode tracking."""

    gains: np.ndarray        # (m,)
    eigenvalues: np.ndarray  # (m, n), row g ordered to follow row 0's modes
    alignment: np.ndarray    # (m, n) eigenvector alignment with previous gain
    ambiguous: list          # (gain index, mode index) pairs below threshold


# ---------------------------------------------------------------------------
# right-hand side
# ---------------------------------------------------------------------------


def _injection(actuator: Actuator | None, eq: EquilibriumModel,
               domega: np.ndarray, t: float) -> float:
    if actuator is None or actuator.gain == 0.0 or t < actuator.active_from:
        return 0.0
    fb = eq.feedback_index(actuator.feedback_gen)
    return -actuator.gain * float(domega[fb])


def _solve_actuator_voltage(y_bb: complex, c: complex, p_inj: float,
                            v0: complex) -> complex:
    """Newton solve of V_b * conj(Y_bb V_b + c) = p_inj + j0 for V_b."""

    v = v0
    for _ in range(_ALG_MAX_ITER):
        ib = y_bb * v + c
        s = v * np.conj(ib)
        f_re = s.real - p_inj
        f_im = s.imag
        if max(abs(f_re), abs(f_im)) < _ALG_TOL:
            return v
        ds_dvr = np.conj(ib) + v * np.conj(y_bb)
        ds_dvi = 1j * (np.conj(ib) - v * np.conj(y_bb))
        a11, a12 = ds_dvr.real, ds_dvi.real
        a21, a22 = ds_dvr.imag, ds_dvi.imag
        det = a11 * a22 - a12 * a21
        if det == 0.0 or not math.isfinite(det):
            break
        dvr = (a22 * f_re - a12 * f_im) / det
        dvi = (a11 * f_im - a21 * f_re) / det
        v = v - complex(dvr, dvi)
    raise NonConvergence(
        f"actuator-bus voltage solve stalled (injection {p_inj:.3e} pu)",
        residual=max(abs(f_re), abs(f_im)),
        iterations=_ALG_MAX_ITER,
    )


def _check_actuator(eq: EquilibriumModel, actuator: Actuator | None) -> None:
    if actuator is not None and actuator.bus != eq.actuator_bus:
        raise UnknownBusError(
            f"actuator bus {actuator.bus} is not the retained bus "
            f"({eq.actuator_bus}) of this equilibrium model"
        )


def _eval_rhs(eq, delta, domega, p_inj, v_guess):
    """Derivative plus the solved actuator voltage (None if not retained)."""

    p = eq.p
    vint = eq.e_mag * np.exp(1j * delta)
    if eq.actuator_bus is not None:
        c = eq.y_red[p, :p] @ vint
        v_act = _solve_actuator_voltage(eq.y_red[p, p], c, p_inj, v_guess)
        i_int = eq.y_red[:p, :p] @ vint + eq.y_red[:p, p] * v_act
    else:
        v_act = None
        i_int = eq.y_red @ vint
    pe = (vint * np.conj(i_int)).real
    ddelta = eq.omega_s * domega
    ddomega = (eq.pm - pe - eq.d * domega) / (2.0 * eq.h)
    return np.concatenate([ddelta, ddomega]), v_act


def rhs(eq: EquilibriumModel, x: np.ndarray, actuator: Actuator | None = None,
        t: float = 0.0) -> np.ndarray:
    """Swing-equation right-hand side at state ``x`` and time ``t``."""

    _check_actuator(eq, actuator)
    x = np.asarray(x, dtype=float)
    p = eq.p
    domega = x[p:]
    p_inj = _injection(actuator, eq, domega, t)
    guess = eq.v_act0 if eq.v_act0 is not None else 0j
    dx, _ = _eval_rhs(eq, x[:p], domega, p_inj, guess)
    return dx


# ---------------------------------------------------------------------------
# linearisation
# ---------------------------------------------------------------------------


def build_linear_model(eq: EquilibriumModel,
                       actuator: Actuator | None = None) -> LinearModel:
    """Analytic linearisation with the actuator-bus voltage eliminated.

    The algebraic nodal equation of the retained bus is linearised and
    folded into the state equations, so the only gain dependence left is
    the feedback entry -- hence ``A(theta) = A0 + theta*B`` exactly, with
    ``B`` rank one and supported on the speed rows.  The affinity is
    verified at theta = 2 before returning.
    """

    _check_actuator(eq, actuator)
    p = eq.p
    n = 2 * p
    speed = np.arange(p, n)
    omega_s = eq.omega_s
    two_h = 2.0 * eq.h

    vint = eq.internal_voltages(eq.delta0)
    if eq.actuator_bus is not None:
        vfull = np.concatenate([vint, [eq.v_act0]])
    else:
        vfull = vint
    y = eq.y_red
    m = vfull.size
    i_full = y @ vfull

    # W[j,k] = V_j * conj(Y_jk V_k); every dPe/d(.) below is a slice of it
    w = vfull[:p, None] * np.conj(y[:p, :] * vfull[None, :])
    dpe_ddelta = w[:, :p].imag.copy()
    # diagonal: angle j moves its own phasor, so the row sums to zero over
    # *all* retained nodes (rotational symmetry)
    np.fill_diagonal(dpe_ddelta,
                     -(w.imag.sum(axis=1) - np.diag(w[:, :p].imag)))

    j_mat = np.zeros((n, n))
    j_mat[speed, speed] = two_h

    a_fs = np.zeros((n, n))
    a_fs[:p, p:] = omega_s * np.eye(p)
    a_fs[p:, :p] = -dpe_ddelta / two_h[:, None]
    a_fs[p:, p:] = -np.diag(eq.d / two_h)

    if eq.actuator_bus is None:
        model = LinearModel(A0=a_fs, B=np.zeros((n, n)), J=j_mat,
                            speed_indices=speed, actuator=actuator)
        return model

    # algebraic block: g = [Re(S_b) - P_inj, Im(S_b)] = 0
    v_b = vfull[p]
    i_b = i_full[p]
    ds_ddelta = -1j * v_b * np.conj(y[p, :p] * vint)     # (p,) complex
    ds_dvr = np.conj(i_b) + v_b * np.conj(y[p, p])
    ds_dvi = 1j * (np.conj(i_b) - v_b * np.conj(y[p, p]))
    jg = np.array([[ds_dvr.real, ds_dvi.real],
                   [ds_dvr.imag, ds_dvi.imag]])

    dpe_dva = np.column_stack([
        (vint * np.conj(y[:p, p])).real,
        (vint * np.conj(y[:p, p])).imag,
    ])  # (p, 2) sensitivities to [Re V_b, Im V_b]
    f_u = np.zeros((n, 2))
    f_u[p:, :] = -dpe_dva / two_h[:, None]

    g_s0 = np.zeros((2, n))
    g_s0[0, :p] = ds_ddelta.real
    g_s0[1, :p] = ds_ddelta.imag

    jg_inv_gs0 = np.linalg.solve(jg, g_s0)
    a0 = a_fs - f_u @ jg_inv_gs0

    # dP_inj/d(domega_fb) = -theta enters g only through one entry, so B
    # is the exact rank-one gain direction
    fb = eq.feedback_index(actuator.feedback_gen) if actuator else 0
    c1 = np.zeros((2, n))
    c1[0, p + fb] = 1.0
    b = -f_u @ np.linalg.solve(jg, c1)

    def a_of(theta):
        g_s = g_s0.copy()
        g_s[0, p + fb] += theta
        return a_fs - f_u @ np.linalg.solve(jg, g_s)

    a2 = a_of(2.0)
    resid = float(np.max(np.abs(a2 - a0 - 2.0 * b)))
    scale = float(np.max(np.abs(a0)))
    if resid > 1e-9 * scale:
        raise AffinityError(
            f"A(theta) affinity residual {resid:.3e} exceeds 1e-9*||A0||"
        )
    return LinearModel(A0=a0, B=b, J=j_mat, speed_indices=speed,
                       actuator=actuator)


# ---------------------------------------------------------------------------
# fault snapshot
# ---------------------------------------------------------------------------


def apply_fault(eq: EquilibriumModel, fault_bus: int, duration: float,
                dt: float = 1e-3) -> np.ndarray:
    """State deviation accumulated during a bolted fault.

    The faulted bus is grounded through a large shunt (-1e6 j pu), the
    fault-on network is re-reduced to the machine internal nodes, and the
    fault-on swing dynamics are integrated from equilibrium for
    ``duration`` seconds.  Returns ``x(duration) - x0``; possible
    actuators are inactive during the fault.
    """

    if fault_bus not in eq.bus_index:
        raise UnknownBusError(f"fault bus {fault_bus} not in case")
    if duration < 0.0:
        raise ValueError("fault duration must be >= 0")
    n = 2 * eq.p
    if duration == 0.0:
        return np.zeros(n)

    steps_exact = duration / dt
    steps = int(round(steps_exact))
    if abs(steps_exact - steps) > 1e-9 or steps == 0:
        steps = int(math.ceil(steps_exact - 1e-12))
        warnings.warn(
            f"fault duration {duration} s is not a multiple of dt={dt} s; "
            f"rounded up to {steps} steps ({steps * dt:.6f} s)",
            stacklevel=2,
        )

    y_f = eq.y_aug.copy()
    k = eq.bus_index[fault_bus]
    y_f[k, k] += -1e6j
    y_fault = kron_reduce(y_f, list(eq.internal_index))

    p = eq.p
    e_mag, pm, d, two_h = eq.e_mag, eq.pm, eq.d, 2.0 * eq.h
    omega_s = eq.omega_s

    def f(x):
        vint = e_mag * np.exp(1j * x[:p])
        pe = (vint * np.conj(y_fault @ vint)).real
        return np.concatenate([omega_s * x[p:], (pm - pe - d * x[p:]) / two_h])

    x = eq.x0.copy()
    for _ in range(steps):
        k1 = f(x)
        k2 = f(x + 0.5 * dt * k1)
        k3 = f(x + 0.5 * dt * k2)
        k4 = f(x + dt * k3)
        x = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(x)):
        raise SimulationDiverged("fault-on integration diverged",
                                 time=steps * dt)
    return x - eq.x0


# ---------------------------------------------------------------------------
# time-domain simulation
# ---------------------------------------------------------------------------


def simulate(eq: EquilibriumModel, dx0: np.ndarray,
             actuator: Actuator | None = None, T: float = 10.0,
             dt: float = 1e-3) -> Trajectory:
    """Fixed-step RK4 integration from ``x0 + dx0``.

    Deterministic: identical inputs give bit-identical trajectories.
    The kinetic-energy series is ``E_k(t) = sum_j H_j domega_j(t)^2``.
    """

    _check_actuator(eq, actuator)
    if dt <= 0.0 or T < 0.0:
        raise ValueError("need dt > 0 and T >= 0")
    p = eq.p
    dx0 = np.asarray(dx0, dtype=float)
    if dx0.shape != (2 * p,):
        raise ValueError(f"dx0 must have shape ({2 * p},)")

    nsteps = int(math.floor(T / dt + 1e-9))
    times = np.arange(nsteps + 1) * dt
    states = np.empty((nsteps + 1, 2 * p))
    x = eq.x0 + dx0
    states[0] = x

    use_act = (actuator is not None and eq.actuator_bus is not None
               and actuator.gain != 0.0)
    fb = eq.feedback_index(actuator.feedback_gen) if use_act else -1
    gain = actuator.gain if use_act else 0.0
    t_on = actuator.active_from if use_act else 0.0

    e_mag, pm, d, two_h = eq.e_mag, eq.pm, eq.d, 2.0 * eq.h
    omega_s = eq.omega_s
    y = eq.y_red
    retained = eq.actuator_bus is not None
    if retained:
        y_ii = np.ascontiguousarray(y[:p, :p])
        y_ib = y[:p, p].copy()
        y_bi = y[p, :p].copy()
        y_bb = y[p, p]
        v_warm = eq.v_act0
    else:
        y_ii = y

    def f(x, t, v_guess):
        delta = x[:p]
        dom = x[p:]
        vint = e_mag * np.exp(1j * delta)
        if retained:
            p_inj = -gain * dom[fb] if (use_act and t >= t_on) else 0.0
            v_act = _solve_actuator_voltage(y_bb, y_bi @ vint, p_inj, v_guess)
            i_int = y_ii @ vint + y_ib * v_act
        else:
            v_act = None
            i_int = y_ii @ vint
        pe = (vint * np.conj(i_int)).real
        out = np.empty_like(x)
        out[:p] = omega_s * dom
        out[p:] = (pm - pe - d * dom) / two_h
        return out, v_act

    v_guess = eq.v_act0 if retained else None
    for k in range(nsteps):
        t = times[k]
        k1, v1 = f(x, t, v_guess)
        k2, _ = f(x + 0.5 * dt * k1, t + 0.5 * dt, v1 if retained else None)
        k3, _ = f(x + 0.5 * dt * k2, t + 0.5 * dt, v1 if retained else None)
        k4, _ = f(x + dt * k3, t + dt, v1 if retained else None)
        x = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(x)):
            raise SimulationDiverged(
                f"integration diverged at t = {times[k + 1]:.4f} s",
                time=float(times[k + 1]),
            )
        states[k + 1] = x
        v_guess = v1

    domega = states[:, p:]
    ek = (eq.h * domega ** 2).sum(axis=1)
    meta = {
        "dt": dt,
        "T": nsteps * dt,
        "integrator": "rk4",
        "actuator": None if actuator is None else {
            "bus": actuator.bus,
            "feedback_gen": actuator.feedback_gen,
            "gain": actuator.gain,
            "active_from": actuator.active_from,
        },
    }
    return Trajectory(t=times, states=states, ek=ek, meta=meta)


# ---------------------------------------------------------------------------
# gain sweep
# ---------------------------------------------------------------------------


def gain_sweep(eq: EquilibriumModel, actuator: Actuator,
               gains) -> GainSweep:
    """Closed-loop eigenvalues over a gain grid with mode tracking.

    Modes are matched between consecutive gains by maximal right-
    eigenvector alignment ``|v_prev^H v_next|`` (assignment problem, so
    the match is one-to-one).  Matches with alignment below
    ``TRACKING_MIN_ALIGNMENT`` are flagged in ``ambiguous`` and a
    warning is emitted.
    """

    lm = build_linear_model(eq, actuator)
    gains = np.asarray(list(gains), dtype=float)
    if gains.size == 0:
        raise ValueError("need at least one gain")
    n = lm.n
    eigs = np.empty((gains.size, n), dtype=complex)
    align = np.ones((gains.size, n))
    ambiguous: list[tuple[int, int]] = []

    prev_vec = None
    for g, theta in enumerate(gains):
        lam, vec = np.linalg.eig(lm.A(theta))
        vec = vec / np.linalg.norm(vec, axis=0)
        if prev_vec is None:
            order = np.lexsort((lam.imag, lam.real))
        else:
            overlap = np.abs(prev_vec.conj().T @ vec)
            _, order = linear_sum_assignment(-overlap)
            quality = overlap[np.arange(n), order]
            align[g] = quality
            for i in np.flatnonzero(quality < TRACKING_MIN_ALIGNMENT):
                ambiguous.append((g, int(i)))
        eigs[g] = lam[order]
        prev_vec = vec[:, order]

    if ambiguous:
        warnings.warn(
            f"gain sweep mode tracking ambiguous at {len(ambiguous)} "
            f"(gain, mode) points (alignment < {TRACKING_MIN_ALIGNMENT})",
            stacklevel=2,
        )
    return GainSweep(gains=gains, eigenvalues=eigs, alignment=align,
                     ambiguous=ambiguous)
