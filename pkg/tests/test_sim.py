"""Integration, events, derived signals, error coordinates and Lyapunov traces.

Oracles: the matrix exponential for the linear (alpha = 0) model, the
closed-form radial decay of the off-grid equality case, Richardson-style
step halving for RK4, and scipy's adaptive integrator against fixed-step RK4.
"""
import math

import numpy as np
import pytest
import scipy.integrate
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm

from cdroop import sim
from cdroop.analysis import random_params
from cdroop.certify import check_global, voltage_following_matrix
from cdroop.equilibrium import equilibria, lift, voltage_following_equilibrium
from cdroop.model import to_complex
from cdroop.sim import (Event, IntegratorConfig, error_coordinates, integrate, lyapunov_trace,
                        model_dim)

from conftest import W0, case_one, case_three, off_grid


def rk4(t_end, step, stride=1):
    return IntegratorConfig(t_end=t_end, method="rk4", step=step, output_stride=stride)


# ---------------------------------------------------------------------------
# configuration and validation

@pytest.mark.parametrize("kw", [dict(method="euler"), dict(t_end=0.0), dict(step=-1.0),
                                dict(rtol=0.0), dict(output_stride=0)])
def test_integrator_config_invariants(kw):
    base = dict(t_end=1.0)
    base.update(kw)
    with pytest.raises(ValueError):
        IntegratorConfig(**base)


def test_event_validation():
    with pytest.raises(ValueError, match="unsupported"):
        Event(0.1, {"r_g": 0.1})
    with pytest.raises(ValueError, match="one kind"):
        Event(0.1, {"v_g": 0.5, "p_star": 0.1})
    with pytest.raises(ValueError):
        Event(0.1, {})
    e = Event.setpoint(0.2, p_star=0.3, q_star=None)
    assert e.kind == "setpoint_change" and e.change == (("p_star", 0.3),)
    assert Event.grid_frequency(0.0, 0.99).apply(case_one()).grid.omega_g == 0.99


def test_integrate_validation(p_case1):
    with pytest.raises(ValueError, match="entries"):
        integrate(4, p_case1, [1.0, 0.0], config=rk4(0.1, 1e-3))
    with pytest.raises(ValueError, match="unknown model"):
        integrate(6, p_case1, np.zeros(6), config=rk4(0.1, 1e-3))
    with pytest.raises(ValueError, match="strictly increasing"):
        integrate(2, p_case1, [1.0, 0.0], [Event.grid_voltage(0.05, 0.5), Event.grid_voltage(0.05, 0.6)],
                  config=rk4(0.1, 1e-3))
    with pytest.raises(ValueError, match="outside"):
        integrate(2, p_case1, [1.0, 0.0], [Event.grid_voltage(0.5, 0.5)], config=rk4(0.1, 1e-3))
    with pytest.raises(ValueError, match="rk4"):
        integrate(2, p_case1, np.ones((3, 2)), config=IntegratorConfig(t_end=0.1))


def test_model_dim():
    assert [model_dim(m) for m in (2, 4, 8, 12, "offgrid")] == [2, 4, 8, 12, 2]


# ---------------------------------------------------------------------------
# accuracy

@pytest.mark.parametrize("vg", [0.5, 1.0])
def test_linear_model_matches_matrix_exponential(vg):
    p = case_one(v_g=vg, alpha=0.0)
    A = voltage_following_matrix(p)
    vs = voltage_following_equilibrium(p).v_vec
    x0 = np.array([1.0, 0.2])
    T = 0.2
    exact = vs + expm(A * T) @ (x0 - vs)
    tr = integrate(2, p, x0, config=rk4(T, 1e-4))
    assert np.allclose(tr.states[-1], exact, atol=1e-10)
    tr = integrate(2, p, x0, config=IntegratorConfig(t_end=T, step=1e-3, rtol=1e-10, atol=1e-12))
    assert np.allclose(tr.states[-1], exact, atol=1e-8)


def test_rk4_is_fourth_order(p_case1_dip):
    x0 = lift(equilibria(case_one())[0], p_case1_dip, 4).data
    ends = [integrate(4, p_case1_dip, x0, config=rk4(0.02, h)).states[-1] for h in (4e-5, 2e-5, 1e-5)]
    e1 = np.linalg.norm(ends[0] - ends[1])
    e2 = np.linalg.norm(ends[1] - ends[2])
    assert 12 < e1 / e2 < 20


def test_rk4_agrees_with_rk45(p_case1_dip):
    x0 = lift(equilibria(case_one())[0], p_case1_dip, 4).data
    a = integrate(4, p_case1_dip, x0, config=rk4(0.3, 1e-5, stride=100))
    b = integrate(4, p_case1_dip, x0, config=IntegratorConfig(t_end=0.3, step=1e-5, output_stride=100))
    assert a.times.shape == b.times.shape
    assert np.allclose(a.times, b.times, atol=1e-12)
    assert np.max(np.abs(a.states - b.states)) < 1e-5


def test_off_grid_equality_case_follows_algebraic_decay():
    p = off_grid(alpha=1.0)
    r0 = 0.8
    T = 2.0
    tr = integrate("offgrid", p, [r0, 0.0], config=rk4(T, 1e-4, stride=100))
    r = np.hypot(tr.states[:, 0], tr.states[:, 1])
    ref = r0 / np.sqrt(1 + 2 * p.ctrl.eta * p.ctrl.alpha * r0 ** 2 * tr.times)
    assert np.max(np.abs(r - ref)) < 1e-8
    # slower than any exponential: r * sqrt(t) tends to a constant
    assert r[-1] > 0.05


def test_off_grid_limit_cycle_radius():
    p = off_grid(alpha=2.0)
    rng = np.random.default_rng(0)
    for x0 in rng.uniform(-1.5, 1.5, size=(3, 2)):
        tr = integrate("offgrid", p, x0, config=rk4(5.0, 1e-4, stride=100))
        r2 = tr.states[-1] @ tr.states[-1]
        assert r2 == pytest.approx(0.5, abs=1e-4)


# ---------------------------------------------------------------------------
# batches, events, determinism

def test_batch_matches_single_runs(p_case3):
    starts = np.array([[0.3, 0.1], [-0.5, 0.4], [1.0, -0.2]])
    cfg = rk4(0.5, 1e-3, stride=10)
    batch = integrate(2, p_case3, starts, config=cfg)
    assert batch.is_batch and batch.states.shape == (51, 3, 2)
    for k, x0 in enumerate(starts):
        single = integrate(2, p_case3, x0, config=cfg)
        assert np.allclose(batch.member(k).states, single.states, atol=1e-13)


def test_events_switch_parameters(p_case1):
    x0 = lift(equilibria(p_case1)[0], p_case1, 4).data
    ev = [Event.grid_voltage(0.1, 0.5), Event.setpoint(0.2, p_star=0.3)]
    tr = integrate(4, p_case1, x0, ev, config=rk4(0.3, 1e-4, stride=10))
    assert [s[0] for s in tr.segments] == [0.0, 0.1, 0.2]
    assert tr.params.grid.v_g == 0.5 and tr.params.ctrl.p_star == 0.3
    seg = tr.segment_index()
    assert seg[tr.times < 0.1 - 1e-12].max() == 0 and seg[-1] == 2
    # before the dip the state sits at equilibrium
    pre = tr.states[tr.times <= 0.1 + 1e-12]
    assert np.max(np.abs(pre - x0)) < 1e-9
    assert 0.1 in tr.times.round(12) and 0.2 in tr.times.round(12)


def test_event_at_time_zero_replaces_initial_params(p_case1):
    tr = integrate(2, p_case1, [1.0, 0.0], [Event.grid_voltage(0.0, 0.5)], config=rk4(0.01, 1e-3))
    assert len(tr.segments) == 1 and tr.params.grid.v_g == 0.5


def test_determinism(p_case3):
    cfg = rk4(0.5, 1e-3)
    a = integrate(2, p_case3, [0.2, 0.1], config=cfg)
    b = integrate(2, p_case3, [0.2, 0.1], config=cfg)
    assert np.array_equal(a.states, b.states)


# ---------------------------------------------------------------------------
# failure flags

def test_divergence_flag(p_case1_dip):
    x0 = lift(equilibria(p_case1_dip)[0], p_case1_dip, 12).data
    tr = integrate(12, p_case1_dip, x0 + 0.1, config=rk4(0.05, 1e-3))
    assert tr.flag == "diverged"
    assert "stopped" in tr.message
    assert tr.times[-1] < 0.05


def test_rk45_blow_up_event():
    cfg = IntegratorConfig(t_end=1.0, step=1e-3, max_norm=1.5)
    tr = integrate("offgrid", off_grid(alpha=2.0), [3.0, 0.0], config=cfg)
    assert tr.flag == "diverged"


def test_step_underflow_flag(monkeypatch, p_case1):
    real = scipy.integrate.solve_ivp

    def failing(*a, **kw):
        sol = real(*a, **kw)
        sol.status = -1
        sol.t = sol.t[: len(sol.t) // 2]
        sol.y = sol.y[:, : sol.y.shape[1] // 2]
        return sol

    monkeypatch.setattr(sim, "solve_ivp", failing)
    tr = integrate(2, p_case1, [1.0, 0.0], config=IntegratorConfig(t_end=0.1, step=1e-3))
    assert tr.flag == "step_underflow"
    assert "partial" in tr.message
    assert tr.times[-1] < 0.1


# ---------------------------------------------------------------------------
# derived signals

def test_derived_signals_at_equilibrium(p_case1):
    eq = equilibria(p_case1)[0]
    for order in (2, 4, 12):
        tr = integrate(order, p_case1, lift(eq, p_case1, order).data, config=rk4(0.01, 1e-4, stride=10))
        d = tr.derived
        vs = eq.v_complex
        i = p_case1.y * (vs - 1.0)
        s = vs * i.conjugate()
        assert np.allclose(d["p"], s.real, atol=1e-9)
        assert np.allclose(d["q"], s.imag, atol=1e-9)
        assert np.allclose(d["v"], eq.v_s, atol=1e-9)
        assert np.allclose(d["omega"], W0, atol=1e-6)
        assert np.allclose(d["eps"], 0.0, atol=1e-6)


def test_derived_frequency_off_grid_cycle():
    p = off_grid(alpha=2.0)
    x0 = [math.sqrt(0.5), 0.0]
    tr = integrate("offgrid", p, x0, config=rk4(0.02, 1e-5, stride=10))
    # on the circle the voltage rotates at the nominal frequency, no amplitude change
    assert np.allclose(tr.derived["omega"], W0, rtol=1e-9)
    assert np.allclose(tr.derived["eps"], 0.0, atol=1e-9)


def test_derived_frequency_is_finite_difference_of_angle(p_case3):
    tr = integrate(2, p_case3, [0.6, 0.3], config=rk4(0.2, 1e-5))
    ang = np.unwrap(np.angle(to_complex(tr.states)[:, 0]))
    w_fd = np.gradient(ang, tr.times) + W0
    lv_fd = np.gradient(np.log(np.abs(to_complex(tr.states)[:, 0])), tr.times)
    inner = slice(5, -5)
    assert np.allclose(tr.derived["omega"][inner], w_fd[inner], atol=1e-3 * W0)
    assert np.allclose(tr.derived["eps"][inner], lv_fd[inner], atol=1e-2)


# ---------------------------------------------------------------------------
# error coordinates

def test_error_coordinates_vanish_at_equilibrium(p_case1):
    x0 = lift(equilibria(p_case1)[0], p_case1, 12).data
    tr = integrate(12, p_case1, x0, config=rk4(0.01, 2e-5, stride=10))
    ec = error_coordinates(tr)
    for v in ec.norms().values():
        assert np.max(v) < 1e-9


def test_error_coordinates_require_full_order(p_case1):
    tr = integrate(2, p_case1, [1.0, 0.0], config=rk4(0.01, 1e-3))
    with pytest.raises(ValueError):
        error_coordinates(tr)


def test_time_to_fraction_semantics():
    t = np.linspace(0, 1, 11)
    ec = sim.ErrorCoordinates(t, np.c_[np.exp(-5 * t), 0 * t], np.zeros((11, 4)), np.zeros((11, 4)),
                              np.c_[np.exp(-t), 0 * t], 0.0)
    ttf = ec.time_to_fraction(0.1)
    # exp(-5 t) drops below 0.1 after t = 0.46, so the last sample above is t = 0.4
    assert ttf["y2"] == pytest.approx(0.4)
    assert ttf["dvoc"] == pytest.approx(1.0)
    assert ttf["y3"] == 0.0


# ---------------------------------------------------------------------------
# Lyapunov trace

def test_lyapunov_trace_monotone_when_global_condition_holds():
    rng = np.random.default_rng(11)
    checked = 0
    while checked < 8:
        p = random_params(rng)
        eqs = equilibria(p)
        if not eqs.unique or not check_global(p, eqs):
            continue
        x0 = rng.uniform(-2, 2, size=(4, 2))
        tr = integrate(2, p, x0, config=rk4(1.0, 1e-4, stride=5))
        for k in range(4):
            lt = lyapunov_trace(tr.member(k), eqs[0])
            assert not lt.increasing
        checked += 1


def test_lyapunov_trace_detects_increase(p_case3):
    eq = equilibria(p_case3)[0]
    tr = integrate(2, p_case3, eq.v_vec + [1e-3, 0.0], config=rk4(1.0, 1e-3))
    assert lyapunov_trace(tr, eq).increasing
