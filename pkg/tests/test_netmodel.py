"""Case loading, power flow, Kron reduction and equilibrium setup."""

import json
import math

import numpy as np
import pytest

import oscaction as oa
from oscaction import dynsim, netmodel
from oscaction.errors import (
    CaseParseError,
    CaseSemanticError,
    DisconnectedBus,
    NonConvergence,
    SingularElimination,
    UnknownBusError,
)


def two_bus_case(**overrides):
    """Slack + PV bus over one lossless branch; closed-form power flow."""
    data = {
        "version": 1,
        "base_mva": 100.0,
        "frequency_hz": 60.0,
        "name": "two-bus",
        "buses": [
            {"id": 1, "type": "slack", "v_set": 1.0},
            {"id": 2, "type": "PV", "v_set": 1.0},
        ],
        "branches": [{"from": 1, "to": 2, "r": 0.0, "x": 0.5, "b": 0.0}],
        "generators": [
            {"id": 1, "bus": 1, "h": 3.0, "d": 0.0, "xd_p": 0.2, "p": 0.0},
            {"id": 2, "bus": 2, "h": 2.0, "d": 0.0, "xd_p": 0.25, "p": 0.5},
        ],
    }
    data.update(overrides)
    return data


# ---------------------------------------------------------------------------
# loading and validation
# ---------------------------------------------------------------------------


def test_bundled_cases_load(case9, case39):
    assert len(case9.buses) == 9
    assert len(case9.branches) == 9
    assert len(case9.generators) == 3
    assert len(case39.buses) == 39
    assert len(case39.branches) == 46
    assert len(case39.generators) == 10
    for case in (case9, case39):
        assert sum(b.type == "slack" for b in case.buses) == 1
        assert case.name


def test_bundled_case_path_unknown_name():
    with pytest.raises(FileNotFoundError):
        oa.bundled_case_path("no-such-case")


def test_parse_error_reports_line_and_column(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"version": 1,\n  "base_mva": oops}\n')
    with pytest.raises(CaseParseError, match=r"line 2"):
        oa.load_case(bad)


def test_case_file_roundtrip(tmp_path, case9):
    src = oa.bundled_case_path("ieee9")
    dst = tmp_path / "copy.json"
    dst.write_text(src.read_text())
    case = oa.load_case(dst)
    assert case.bus_ids == case9.bus_ids


@pytest.mark.parametrize(
    "mutate, exc, match",
    [
        (lambda d: d["buses"].append({"id": 1, "type": "PQ"}),
         CaseSemanticError, "duplicate bus"),
        (lambda d: d["branches"].append({"from": 1, "to": 99, "r": 0.0, "x": 0.1}),
         CaseSemanticError, "endpoint"),
        (lambda d: d["branches"].append({"from": 2, "to": 2, "r": 0.0, "x": 0.1}),
         CaseSemanticError, "self-loop"),
        (lambda d: d["branches"].append({"from": 1, "to": 2, "r": 0.0, "x": 0.0}),
         CaseSemanticError, "zero series impedance"),
        (lambda d: d["buses"][1].update(type="slack"),
         CaseSemanticError, "exactly one slack"),
        (lambda d: d["buses"][0].update(type="PQ"),
         CaseSemanticError, "exactly one slack"),
        (lambda d: d["generators"].append(
            {"id": 1, "bus": 1, "h": 1.0, "d": 0.0, "xd_p": 0.1, "p": 0.0}),
         CaseSemanticError, "duplicate generator"),
        (lambda d: d["generators"].append(
            {"id": 3, "bus": 2, "h": 1.0, "d": 0.0, "xd_p": 0.1, "p": 0.0}),
         CaseSemanticError, "more than one generator"),
        (lambda d: d["generators"][0].update(h=0.0),
         CaseSemanticError, "h > 0"),
        (lambda d: d["generators"][0].update(xd_p=-0.1),
         CaseSemanticError, "xd_p > 0"),
        (lambda d: d["generators"][0].update(d=-1.0),
         CaseSemanticError, "d >= 0"),
        (lambda d: d["generators"][0].update(bus=42),
         CaseSemanticError, "unknown bus"),
        (lambda d: d["buses"][0].update(v_set=0.0),
         CaseSemanticError, "v_set > 0"),
        (lambda d: d["buses"][0].pop("id"),
         CaseParseError, "missing field"),
        (lambda d: d["buses"][0].update(id=1.5),
         CaseParseError, "must be an integer"),
        (lambda d: d.update(version=2),
         CaseParseError, "unsupported case version"),
        (lambda d: d.pop("branches"),
         CaseParseError, "missing top-level key"),
    ],
)
def test_case_validation_errors(mutate, exc, match):
    data = two_bus_case()
    mutate(data)
    with pytest.raises(exc, match=match):
        oa.case_from_dict(data)


# ---------------------------------------------------------------------------
# admittance matrix and power flow
# ---------------------------------------------------------------------------


def test_ybus_pi_model():
    data = two_bus_case()
    data["branches"] = [{"from": 1, "to": 2, "r": 0.0, "x": 0.1, "b": 0.2}]
    case = oa.case_from_dict(data)
    y = netmodel.build_ybus(case)
    ys = 1.0 / 0.1j
    expect = np.array([[ys + 0.1j, -ys], [-ys, ys + 0.1j]])
    assert np.allclose(y, expect, atol=1e-15)


def test_power_flow_flat_no_load():
    data = two_bus_case()
    data["generators"][1]["p"] = 0.0
    case = oa.case_from_dict(data)
    pf = oa.solve_power_flow(case)
    assert pf.iterations == 0
    assert np.allclose(pf.vm, 1.0)
    assert np.allclose(pf.va, 0.0)
    assert np.allclose(pf.p_inj, 0.0, atol=1e-12)


def test_power_flow_two_bus_closed_form():
    # P = (v1 v2 / x) sin(d2), so d2 = asin(P x) = asin(0.25)
    case = oa.case_from_dict(two_bus_case())
    pf = oa.solve_power_flow(case)
    assert pf.max_mismatch < 1e-8
    assert pf.va[1] == pytest.approx(math.asin(0.25), rel=1e-9)
    assert pf.vm[1] == 1.0
    # lossless line: the slack absorbs exactly the PV dispatch
    assert pf.p_inj[0] == pytest.approx(-0.5, abs=1e-8)
    # Q injection at either end of the lossless line: (v^2 - v1 v2 cos d)/x
    q_expect = (1.0 - math.cos(math.asin(0.25))) / 0.5
    assert pf.q_inj[1] == pytest.approx(q_expect, abs=1e-8)


def test_power_flow_infeasible_raises():
    data = two_bus_case()
    data["generators"][1]["p"] = 20.0  # far beyond the 2 pu line limit
    case = oa.case_from_dict(data)
    with pytest.raises(NonConvergence) as info:
        oa.solve_power_flow(case)
    assert info.value.iterations >= 0


def test_power_flow_bundled_matches_published(case9):
    pf = oa.solve_power_flow(case9)
    assert pf.max_mismatch < 1e-8
    assert pf.iterations <= 6
    k = {bid: i for i, bid in enumerate(pf.bus_ids)}
    # spot values of the standard solved 9-bus state
    assert pf.vm[k[1]] == pytest.approx(1.040, abs=1e-9)
    assert pf.vm[k[5]] == pytest.approx(0.9956, abs=5e-4)
    assert math.degrees(pf.va[k[4]]) == pytest.approx(-2.217, abs=0.05)


# ---------------------------------------------------------------------------
# Kron reduction
# ---------------------------------------------------------------------------


def test_kron_star_to_triangle():
    # eliminating the centre of a 3-legged star of admittance y gives the
    # equivalent triangle with pairwise admittance y/3
    y_leg = 1.0 / 0.1j
    y = np.zeros((4, 4), dtype=complex)
    for k in (1, 2, 3):
        y[0, 0] += y_leg
        y[k, k] = y_leg
        y[0, k] = y[k, 0] = -y_leg
    red = netmodel.kron_reduce(y, [1, 2, 3])
    expect = np.full((3, 3), -y_leg / 3.0)
    np.fill_diagonal(expect, 2.0 * y_leg / 3.0)
    assert np.allclose(red, expect, atol=1e-12)


def test_kron_boundary_voltages_exact():
    # zero-injection elimination is exact: boundary currents from the
    # reduced matrix equal those of the full network
    rng = np.random.default_rng(3)
    n = 8
    y = np.zeros((n, n), dtype=complex)
    for i in range(n - 1):  # chain plus a few chords
        ys = 1.0 / complex(0.01 * rng.uniform(), 0.1 + 0.3 * rng.uniform())
        y[i, i] += ys
        y[i + 1, i + 1] += ys
        y[i, i + 1] -= ys
        y[i + 1, i] -= ys
    for i, k in ((0, 4), (2, 6), (1, 7)):
        ys = 1.0 / complex(0.02, 0.25)
        y[i, i] += ys
        y[k, k] += ys
        y[i, k] -= ys
        y[k, i] -= ys
    y += np.diag(0.05j * rng.uniform(1.0, 2.0, n))
    retained = [0, 3, 7]
    red = netmodel.kron_reduce(y, retained)
    v_r = rng.normal(size=3) + 1j * rng.normal(size=3)
    elim = [k for k in range(n) if k not in retained]
    v_e = np.linalg.solve(y[np.ix_(elim, elim)],
                          -y[np.ix_(elim, retained)] @ v_r)
    i_full = y[np.ix_(retained, retained)] @ v_r + y[np.ix_(retained, elim)] @ v_e
    assert np.allclose(red @ v_r, i_full, atol=1e-12)


def test_kron_reduce_argument_checks():
    y = np.eye(3, dtype=complex)
    with pytest.raises(ValueError, match="unique"):
        netmodel.kron_reduce(y, [0, 0])
    with pytest.raises(ValueError, match="out of range"):
        netmodel.kron_reduce(y, [0, 5])
    out = netmodel.kron_reduce(y, [2, 1, 0])  # nothing eliminated: reorder only
    assert np.array_equal(out, y[np.ix_([2, 1, 0], [2, 1, 0])])


def test_kron_reduce_singular_block():
    # a shuntless isolated node has a zero row: elimination must refuse
    y = np.zeros((2, 2), dtype=complex)
    y[0, 0] = 1.0 - 5.0j
    with pytest.raises(SingularElimination):
        netmodel.kron_reduce(y, [0])


# ---------------------------------------------------------------------------
# classical equilibrium
# ---------------------------------------------------------------------------


def test_init_classical_single_machine_closed_form():
    # one machine feeding a local 0.3 pu load at 1.0 pu voltage:
    # I = 0.3, E = |1 + j xd' I| = sqrt(1.09), delta = atan(0.3)
    data = {
        "version": 1,
        "base_mva": 100.0,
        "frequency_hz": 60.0,
        "buses": [{"id": 1, "type": "slack", "v_set": 1.0, "p_load": 0.3}],
        "branches": [],
        "generators": [
            {"id": 1, "bus": 1, "h": 4.0, "d": 1.0, "xd_p": 1.0, "p": 0.0},
        ],
    }
    case = oa.case_from_dict(data)
    pf = oa.solve_power_flow(case)
    eq = oa.init_classical(case, pf)
    assert eq.e_mag[0] == pytest.approx(math.sqrt(1.09), rel=1e-12)
    assert eq.delta0[0] == pytest.approx(math.atan(0.3), rel=1e-12)
    assert eq.pm[0] == pytest.approx(0.3, abs=1e-12)
    assert np.max(np.abs(dynsim.rhs(eq, eq.x0))) < 1e-12


def test_equilibrium_rhs_vanishes(case9, case39, pf9, pf39):
    for case, pf, bus in ((case9, pf9, 7), (case39, pf39, 12)):
        eq = oa.init_classical(case, pf)
        assert np.max(np.abs(dynsim.rhs(eq, eq.x0))) < 1e-8
        eq_b = oa.init_classical(case, pf, retained_actuator_bus=bus)
        assert np.max(np.abs(dynsim.rhs(eq_b, eq_b.x0))) < 1e-8


def test_retained_bus_keeps_power_flow_voltage(case9, pf9):
    # with zero actuator injection the retained-bus voltage must be the
    # power-flow voltage (loads were converted to shunts at that point)
    k = {bid: i for i, bid in enumerate(pf9.bus_ids)}
    for bus in (4, 5, 7, 9):
        eq = oa.init_classical(case9, pf9, retained_actuator_bus=bus)
        assert abs(eq.v_act0 - pf9.v[k[bus]]) < 1e-6


def test_init_classical_unknown_actuator_bus(case9, pf9):
    with pytest.raises(UnknownBusError):
        oa.init_classical(case9, pf9, retained_actuator_bus=99)


# ---------------------------------------------------------------------------
# nearest generator
# ---------------------------------------------------------------------------


def test_nearest_generator_bundled(case9):
    # transformer-side buses map to their own machine; bus 5 ties on hop
    # count between gens 1 and 2 and wins on series-impedance total
    expected = {1: 1, 2: 2, 3: 3, 4: 1, 5: 1, 6: 1, 7: 2, 8: 2, 9: 3}
    got = {b: oa.nearest_generator(case9, b) for b in expected}
    assert got == expected


def test_nearest_generator_errors(case9):
    with pytest.raises(UnknownBusError):
        oa.nearest_generator(case9, 123)
    data = two_bus_case()
    data["buses"].append({"id": 3, "type": "PQ"})  # island without branches
    case = oa.case_from_dict(data)
    with pytest.raises(DisconnectedBus):
        oa.nearest_generator(case, 3)


def test_case_json_is_valid_json():
    # the bundled files stay machine-readable without the loader
    for name in ("ieee9", "ieee39"):
        with open(oa.bundled_case_path(name)) as fh:
            data = json.load(fh)
        assert data["version"] == 1
