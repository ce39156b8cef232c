"""Static network model.

Case files, AC power flow, Kron reduction and classical-machine
initialisation.  A case is a JSON document (``version: 1``) with a bus
table, a branch table and a generator table, all in per unit on the
case MVA base:

* bus: ``id``, ``type`` ("slack" | "PV" | "PQ"), ``v_set`` (pu),
  ``p_load`` / ``q_load`` (pu)
* branch: ``from``, ``to``, ``r``, ``x`` (series, pu), ``b`` (total
  charging susceptance, pu, split half per end)
* generator: ``id``, ``bus``, ``h`` (s), ``d`` (pu torque / pu speed),
  ``xd_p`` (transient reactance, pu), ``p`` (dispatch, pu)

The dynamic model built from a solved case is the classical one:
constant EMF behind transient reactance, loads converted to constant
shunt admittance at their power-flow voltage, and the network reduced
to the machine internal nodes (plus, optionally, one retained network
bus where a damping actuator injects power).
"""

from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    CaseParseError,
    CaseSemanticError,
    DisconnectedBus,
    NonConvergence,
    SingularElimination,
    UnknownBusError,
)

BUS_TYPES = ("slack", "PV", "PQ")


@dataclass(frozen=True)
class Bus:
    id: int
    type: str
    v_set: float = 1.0
    p_load: float = 0.0
    q_load: float = 0.0


@dataclass(frozen=True)
class Branch:
    from_bus: int
    to_bus: int
    r: float
    x: float
    b: float = 0.0

    @property
    def y_series(self) -> complex:
        return 1.0 / complex(self.r, self.x)


@dataclass(frozen=True)
class Generator:
    id: int
    bus: int
    h: float
    d: float
    xd_p: float
    p: float


@dataclass
class SystemCase:
    """Validated static description of a system."""

    base_mva: float
    frequency_hz: float
    buses: list[Bus]
    branches: list[Branch]
    generators: list[Generator]
    name: str = ""

    @property
    def omega_s(self) -> float:
        return 2.0 * math.pi * self.frequency_hz

    @property
    def bus_ids(self) -> list[int]:
        return [b.id for b in self.buses]

    def bus(self, bus_id: int) -> Bus:
        for b in self.buses:
            if b.id == bus_id:
                return b
        raise UnknownBusError(f"bus {bus_id} not in case")


def _field(record, key, kind, where, *, default=None, required=True):
    if key not in record:
        if required:
            raise CaseParseError(f"{where}: missing field '{key}'")
        return default
    value = record[key]
    if kind is float and isinstance(value, bool):
        raise CaseParseError(f"{where}: field '{key}' must be a number")
    if kind is int and (isinstance(value, bool) or not isinstance(value, int)):
        raise CaseParseError(f"{where}: field '{key}' must be an integer")
    if kind is float:
        if not isinstance(value, (int, float)):
            raise CaseParseError(f"{where}: field '{key}' must be a number")
        return float(value)
    if kind is str and not isinstance(value, str):
        raise CaseParseError(f"{where}: field '{key}' must be a string")
    return value


def case_from_dict(data: dict, source: str = "<dict>") -> SystemCase:
    """Build and validate a :class:`SystemCase` from parsed JSON."""

    if not isinstance(data, dict):
        raise CaseParseError(f"{source}: top level must be an object")
    version = data.get("version")
    if version != 1:
        raise CaseParseError(f"{source}: unsupported case version {version!r}")
    for key in ("base_mva", "frequency_hz", "buses", "branches", "generators"):
        if key not in data:
            raise CaseParseError(f"{source}: missing top-level key '{key}'")

    buses = []
    for i, rec in enumerate(data["buses"]):
        where = f"{source}: buses[{i}]"
        if not isinstance(rec, dict):
            raise CaseParseError(f"{where}: must be an object")
        btype = _field(rec, "type", str, where)
        if btype not in BUS_TYPES:
            raise CaseParseError(f"{where}: unknown bus type '{btype}'")
        buses.append(
            Bus(
                id=_field(rec, "id", int, where),
                type=btype,
                v_set=_field(rec, "v_set", float, where, default=1.0, required=False),
                p_load=_field(rec, "p_load", float, where, default=0.0, required=False),
                q_load=_field(rec, "q_load", float, where, default=0.0, required=False),
            )
        )

    branches = []
    for i, rec in enumerate(data["branches"]):
        where = f"{source}: branches[{i}]"
        if not isinstance(rec, dict):
            raise CaseParseError(f"{where}: must be an object")
        branches.append(
            Branch(
                from_bus=_field(rec, "from", int, where),
                to_bus=_field(rec, "to", int, where),
                r=_field(rec, "r", float, where),
                x=_field(rec, "x", float, where),
                b=_field(rec, "b", float, where, default=0.0, required=False),
            )
        )

    generators = []
    for i, rec in enumerate(data["generators"]):
        where = f"{source}: generators[{i}]"
        if not isinstance(rec, dict):
            raise CaseParseError(f"{where}: must be an object")
        generators.append(
            Generator(
                id=_field(rec, "id", int, where),
                bus=_field(rec, "bus", int, where),
                h=_field(rec, "h", float, where),
                d=_field(rec, "d", float, where),
                xd_p=_field(rec, "xd_p", float, where),
                p=_field(rec, "p", float, where, default=0.0, required=False),
            )
        )

    case = SystemCase(
        base_mva=_field(data, "base_mva", float, source),
        frequency_hz=_field(data, "frequency_hz", float, source),
        buses=buses,
        branches=branches,
        generators=generators,
        name=_field(data, "name", str, source, default="", required=False),
    )
    validate_case(case, source)
    return case


def validate_case(case: SystemCase, source: str = "<case>") -> None:
    ids = case.bus_ids
    if len(set(ids)) != len(ids):
        dup = sorted({i for i in ids if ids.count(i) > 1})
        raise CaseSemanticError(f"{source}: duplicate bus id(s) {dup}")
    idset = set(ids)
    for i, br in enumerate(case.branches):
        for end in (br.from_bus, br.to_bus):
            if end not in idset:
                raise CaseSemanticError(
                    f"{source}: branches[{i}] endpoint {end} is not a bus"
                )
        if br.from_bus == br.to_bus:
            raise CaseSemanticError(f"{source}: branches[{i}] is a self-loop")
        if br.r == 0.0 and br.x == 0.0:
            raise CaseSemanticError(
                f"{source}: branches[{i}] has zero series impedance"
            )
    slacks = [b.id for b in case.buses if b.type == "slack"]
    if len(slacks) != 1:
        raise CaseSemanticError(
            f"{source}: exactly one slack bus required, found {len(slacks)}"
        )
    gids = [g.id for g in case.generators]
    if len(set(gids)) != len(gids):
        dup = sorted({i for i in gids if gids.count(i) > 1})
        raise CaseSemanticError(f"{source}: duplicate generator id(s) {dup}")
    gbuses = [g.bus for g in case.generators]
    if len(set(gbuses)) != len(gbuses):
        dup = sorted({i for i in gbuses if gbuses.count(i) > 1})
        raise CaseSemanticError(
            f"{source}: more than one generator at bus(es) {dup}"
        )
    for i, g in enumerate(case.generators):
        if g.bus not in idset:
            raise CaseSemanticError(
                f"{source}: generators[{i}] sits at unknown bus {g.bus}"
            )
        if g.h <= 0.0:
            raise CaseSemanticError(f"{source}: generators[{i}] needs h > 0")
        if g.xd_p <= 0.0:
            raise CaseSemanticError(f"{source}: generators[{i}] needs xd_p > 0")
        if g.d < 0.0:
            raise CaseSemanticError(f"{source}: generators[{i}] needs d >= 0")
    for b in case.buses:
        if b.v_set <= 0.0:
            raise CaseSemanticError(f"{source}: bus {b.id} needs v_set > 0")
    if case.base_mva <= 0.0 or case.frequency_hz <= 0.0:
        raise CaseSemanticError(f"{source}: base_mva and frequency_hz must be > 0")


def load_case(path) -> SystemCase:
    """Load and validate a case file.

    Raises :class:`CaseParseError` with a line/column locus on malformed
    JSON, and :class:`CaseSemanticError` on model-level problems.
    """

    path = Path(path)
    text = path.read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CaseParseError(
            f"{path.name}: line {exc.lineno}, column {exc.colno}: {exc.msg}"
        ) from exc
    return case_from_dict(data, source=path.name)


def bundled_case_path(name: str) -> Path:
    """Path of a case shipped with the package ("ieee9" or "ieee39")."""

    from importlib.resources import files

    res = files("oscaction").joinpath("cases", f"{name}.json")
    p = Path(str(res))
    if not p.exists():
        raise FileNotFoundError(f"no bundled case named '{name}'")
    return p


# ---------------------------------------------------------------------------
# admittance matrix and power flow
# ---------------------------------------------------------------------------


def build_ybus(case: SystemCase) -> np.ndarray:
    """Bus admittance matrix in the order the buses appear in the case."""

    idx = {bid: k for k, bid in enumerate(case.bus_ids)}
    n = len(case.buses)
    y = np.zeros((n, n), dtype=complex)
    for br in case.branches:
        f, t = idx[br.from_bus], idx[br.to_bus]
        ys = br.y_series
        ysh = 0.5j * br.b
        y[f, f] += ys + ysh
        y[t, t] += ys + ysh
        y[f, t] -= ys
        y[t, f] -= ys
    return y


@dataclass(eq=False)
class PowerFlowSolution:
    """Converged power-flow state, bus order as in the case."""

    bus_ids: list[int]
    vm: np.ndarray
    va: np.ndarray
    p_inj: np.ndarray
    q_inj: np.ndarray
    iterations: int
    max_mismatch: float

    @property
    def v(self) -> np.ndarray:
        return self.vm * np.exp(1j * self.va)


def solve_power_flow(
    case: SystemCase, tol: float = 1e-8, max_iter: int = 50
) -> PowerFlowSolution:
    """Newton-Raphson AC power flow in polar form with a flat start.

    Dispatch of generators at the slack bus is ignored; the slack picks
    up the residual.  Raises :class:`NonConvergence` with the final
    mismatch when the iteration limit is hit or the Jacobian becomes
    singular.
    """

    idx = {bid: k for k, bid in enumerate(case.bus_ids)}
    n = len(case.buses)
    y = build_ybus(case)

    p_spec = np.zeros(n)
    q_spec = np.zeros(n)
    for b in case.buses:
        k = idx[b.id]
        p_spec[k] -= b.p_load
        q_spec[k] -= b.q_load
    for g in case.generators:
        p_spec[idx[g.bus]] += g.p

    types = np.array([b.type for b in case.buses])
    slack = np.flatnonzero(types == "slack")
    pv = np.flatnonzero(types == "PV")
    pq = np.flatnonzero(types == "PQ")
    pvpq = np.sort(np.concatenate([pv, pq]))

    vm = np.array([b.v_set for b in case.buses], dtype=float)
    vm[pq] = 1.0  # flat start for unknown magnitudes
    va = np.zeros(n)

    iterations = 0
    while True:
        v = vm * np.exp(1j * va)
        s_calc = v * np.conj(y @ v)
        mis_p = p_spec[pvpq] - s_calc.real[pvpq]
        mis_q = q_spec[pq] - s_calc.imag[pq]
        mismatch = np.concatenate([mis_p, mis_q])
        max_mis = float(np.max(np.abs(mismatch))) if mismatch.size else 0.0
        if not np.isfinite(max_mis):
            raise NonConvergence(
                "power flow diverged (non-finite mismatch)",
                residual=max_mis,
                iterations=iterations,
            )
        if max_mis < tol:
            return PowerFlowSolution(
                bus_ids=list(case.bus_ids),
                vm=vm,
                va=va,
                p_inj=s_calc.real,
                q_inj=s_calc.imag,
                iterations=iterations,
                max_mismatch=max_mis,
            )
        if iterations >= max_iter:
            raise NonConvergence(
                f"power flow did not converge in {max_iter} iterations "
                f"(max mismatch {max_mis:.3e} pu)",
                residual=max_mis,
                iterations=iterations,
            )

        # polar-form Jacobian, complex shortcut
        ibus = y @ v
        diag_v = np.diag(v)
        diag_i = np.diag(ibus)
        diag_vn = np.diag(v / vm)
        ds_dva = 1j * diag_v @ np.conj(diag_i - y @ diag_v)
        ds_dvm = diag_v @ np.conj(y @ diag_vn) + np.conj(diag_i) @ diag_vn

        j11 = ds_dva.real[np.ix_(pvpq, pvpq)]
        j12 = ds_dvm.real[np.ix_(pvpq, pq)]
        j21 = ds_dva.imag[np.ix_(pq, pvpq)]
        j22 = ds_dvm.imag[np.ix_(pq, pq)]
        jac = np.block([[j11, j12], [j21, j22]])
        try:
            dx = np.linalg.solve(jac, mismatch)
        except np.linalg.LinAlgError as exc:
            raise NonConvergence(
                f"power flow Jacobian singular at iteration {iterations}",
                residual=max_mis,
                iterations=iterations,
            ) from exc
        va[pvpq] += dx[: pvpq.size]
        vm[pq] += dx[pvpq.size :]
        iterations += 1


# ---------------------------------------------------------------------------
# Kron reduction
# ---------------------------------------------------------------------------


def kron_reduce(y: np.ndarray, retained) -> np.ndarray:
    """Eliminate all nodes not in ``retained`` from an admittance matrix.

    ``retained`` is a sequence of row/column indices; the result is
    ordered the same way.  Zero-injection eliminated nodes are exact:
    boundary voltages computed from the full and the reduced matrix
    agree.  Raises :class:`SingularElimination` when the eliminated
    block cannot be inverted.
    """

    y = np.asarray(y, dtype=complex)
    n = y.shape[0]
    retained = list(retained)
    if len(set(retained)) != len(retained):
        raise ValueError("retained indices must be unique")
    if any(k < 0 or k >= n for k in retained):
        raise ValueError("retained index out of range")
    elim = [k for k in range(n) if k not in set(retained)]
    if not elim:
        return y[np.ix_(retained, retained)].copy()
    y_rr = y[np.ix_(retained, retained)]
    y_re = y[np.ix_(retained, elim)]
    y_er = y[np.ix_(elim, retained)]
    y_ee = y[np.ix_(elim, elim)]
    if not np.all(np.isfinite(y_ee)):
        raise SingularElimination("eliminated block contains non-finite entries")
    # explicit conditioning check: a shuntless isolated node makes the
    # block exactly singular, near-singular blocks are as useless
    sv = np.linalg.svd(y_ee, compute_uv=False)
    if sv[0] == 0.0 or sv[-1] / sv[0] < 1e-13:
        raise SingularElimination(
            "eliminated admittance block is singular or nearly singular"
        )
    return y_rr - y_re @ np.linalg.solve(y_ee, y_er)


# ---------------------------------------------------------------------------
# classical-machine equilibrium model
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class EquilibriumModel:
    """Solved classical model, reduced to machine internal nodes.

    ``y_red`` is ordered: machine internal nodes in generator order,
    optionally followed by one retained network bus (``actuator_bus``)
    where an actuator may inject power.  ``y_aug`` keeps the full
    augmented matrix (network buses + internal nodes, loads absorbed as
    shunts) so faults can be re-reduced later.
    """

    case: SystemCase
    gen_ids: tuple
    e_mag: np.ndarray
    delta0: np.ndarray
    pm: np.ndarray
    h: np.ndarray
    d: np.ndarray
    omega_s: float
    y_red: np.ndarray
    actuator_bus: int | None
    v_act0: complex | None
    y_aug: np.ndarray = field(repr=False)
    bus_index: dict = field(repr=False)
    internal_index: np.ndarray = field(repr=False)

    @property
    def p(self) -> int:
        return self.e_mag.size

    @property
    def x0(self) -> np.ndarray:
        """Equilibrium state vector (delta0, zero speed deviation)."""
        return np.concatenate([self.delta0, np.zeros(self.p)])

    def internal_voltages(self, delta: np.ndarray) -> np.ndarray:
        return self.e_mag * np.exp(1j * np.asarray(delta))

    def feedback_index(self, gen_id: int) -> int:
        try:
            return self.gen_ids.index(gen_id)
        except ValueError:
            raise CaseSemanticError(f"no generator with id {gen_id}") from None


def _augmented_ybus(case: SystemCase, pf: PowerFlowSolution) -> tuple[np.ndarray, dict, np.ndarray]:
    """Network Ybus with loads as shunts and machine internal nodes added."""

    idx = {bid: k for k, bid in enumerate(case.bus_ids)}
    nb = len(case.buses)
    p = len(case.generators)
    y = np.zeros((nb + p, nb + p), dtype=complex)
    y[:nb, :nb] = build_ybus(case)
    v = pf.v
    for b in case.buses:
        if b.p_load != 0.0 or b.q_load != 0.0:
            k = idx[b.id]
            s_load = complex(b.p_load, b.q_load)
            y[k, k] += np.conj(s_load) / (pf.vm[k] ** 2)
    internal = np.arange(nb, nb + p)
    for j, g in enumerate(case.generators):
        k = idx[g.bus]
        yint = 1.0 / complex(0.0, g.xd_p)
        m = internal[j]
        y[m, m] += yint
        y[k, k] += yint
        y[m, k] -= yint
        y[k, m] -= yint
    return y, idx, internal


def init_classical(
    case: SystemCase,
    pf: PowerFlowSolution,
    retained_actuator_bus: int | None = None,
) -> EquilibriumModel:
    """Classical-machine equilibrium from a converged power flow.

    EMFs are placed behind the transient reactance from the terminal
    conditions, loads become constant shunt admittances, and the
    network is Kron-reduced to the machine internal nodes plus the
    optionally retained actuator bus.  Mechanical power is set to the
    equilibrium electrical power so the dynamics start balanced.
    """

    if not case.generators:
        raise CaseSemanticError("case has no generators")
    idx = {bid: k for k, bid in enumerate(case.bus_ids)}
    if retained_actuator_bus is not None and retained_actuator_bus not in idx:
        raise UnknownBusError(f"actuator bus {retained_actuator_bus} not in case")

    v = pf.v
    p = len(case.generators)
    e_mag = np.zeros(p)
    delta0 = np.zeros(p)
    for j, g in enumerate(case.generators):
        k = idx[g.bus]
        # generator output = network injection + local load
        s_gen = complex(pf.p_inj[k] + case.buses[k].p_load,
                        pf.q_inj[k] + case.buses[k].q_load)
        i_gen = np.conj(s_gen / v[k])
        emf = v[k] + 1j * g.xd_p * i_gen
        e_mag[j] = abs(emf)
        delta0[j] = math.atan2(emf.imag, emf.real)

    y_aug, idx, internal = _augmented_ybus(case, pf)
    retained = list(internal)
    if retained_actuator_bus is not None:
        retained.append(idx[retained_actuator_bus])
    y_red = kron_reduce(y_aug, retained)
    y_red = 0.5 * (y_red + y_red.T)  # reduction of a symmetric matrix

    vint = e_mag * np.exp(1j * delta0)
    if retained_actuator_bus is not None:
        # zero actuator injection at equilibrium -> linear nodal equation
        v_act0 = -(y_red[p, :p] @ vint) / y_red[p, p]
        vfull = np.concatenate([vint, [v_act0]])
    else:
        v_act0 = None
        vfull = vint
    i_int = (y_red @ vfull)[:p]
    pe0 = (vint * np.conj(i_int)).real

    return EquilibriumModel(
        case=case,
        gen_ids=tuple(g.id for g in case.generators),
        e_mag=e_mag,
        delta0=delta0,
        pm=pe0.copy(),
        h=np.array([g.h for g in case.generators]),
        d=np.array([g.d for g in case.generators]),
        omega_s=case.omega_s,
        y_red=y_red,
        actuator_bus=retained_actuator_bus,
        v_act0=v_act0,
        y_aug=y_aug,
        bus_index=idx,
        internal_index=internal,
    )


# ---------------------------------------------------------------------------
# electrical distance
# ---------------------------------------------------------------------------


def nearest_generator(case: SystemCase, bus: int) -> int:
    """Generator whose terminal bus is closest to ``bus``.

    Distance is branch hops; ties break on the smallest total series
    impedance magnitude along the shortest path, then on the lowest
    generator id.  Raises :class:`DisconnectedBus` when no generator
    bus is reachable.
    """

    idset = set(case.bus_ids)
    if bus not in idset:
        raise UnknownBusError(f"bus {bus} not in case")
    adj: dict[int, list[tuple[int, float]]] = {b: [] for b in idset}
    for br in case.branches:
        zmag = abs(complex(br.r, br.x))
        adj[br.from_bus].append((br.to_bus, zmag))
        adj[br.to_bus].append((br.from_bus, zmag))

    # Dijkstra with lexicographic (hops, |z| along path) cost
    best: dict[int, tuple[int, float]] = {bus: (0, 0.0)}
    heap = [(0, 0.0, bus)]
    while heap:
        hops, zsum, node = heapq.heappop(heap)
        if (hops, zsum) > best.get(node, (np.inf, np.inf)):
            continue
        for nxt, zmag in adj[node]:
            cand = (hops + 1, zsum + zmag)
            if cand < best.get(nxt, (np.inf, np.inf)):
                best[nxt] = cand
                heapq.heappush(heap, (cand[0], cand[1], nxt))

    winner = None
    for g in sorted(case.generators, key=lambda g: g.id):
        if g.bus in best:
            key = (*best[g.bus], g.id)
            if winner is None or key < winner[0]:
                winner = (key, g.id)
    if winner is None:
        raise DisconnectedBus(f"bus {bus} is unreachable from every generator")
    return winner[1]
