"""Acceptance criteria, one test each; every test records a PASS/FAIL line.

The lines are printed in the "acceptance criteria" section of the pytest
terminal summary.
"""
import time

import numpy as np

from cdroop.analysis import (CONVERGED, LIMIT_CYCLE, classify, dip_is_stable, empirical_eta_bound,
                             existence_suite, initial_grid, phase_portrait, random_params)
from cdroop.certify import (check_global, check_global_no_eq, check_local, check_unstable,
                            epsilon_range, jacobian, off_grid_classification, roa_radius,
                            voltage_bound)
from cdroop.equilibrium import classical_droop_equilibria, equilibria, lift
from cdroop.model import (current_reference, rhs_eighth_order, rhs_fourth_order, rhs_full_order,
                          rhs_second_order)
from cdroop.sim import Event, IntegratorConfig, error_coordinates, integrate, lyapunov_trace

from conftest import W0, case_one, case_three, off_grid, weak_grid_counterexample


def rk4(t_end, step, stride=1):
    return IntegratorConfig(t_end=t_end, method="rk4", step=step, output_stride=stride)


def test_ac1_equilibrium_existence(acceptance):
    t0 = time.perf_counter()
    s = existence_suite(draws=1000, seed=0, residual_tol=1e-10)
    dt = time.perf_counter() - t0
    ok = s.failures == 0 and s.max_residual <= 1e-10 and dt < 10.0
    acceptance("AC1 equilibrium existence", ok,
               f"failures={s.failures} max_residual={s.max_residual:.2e} runtime={dt:.2f}s")
    assert ok


def test_ac2_classical_counterexample(acceptance):
    p = weak_grid_counterexample()
    classical = classical_droop_equilibria(p)
    eqs = equilibria(p)
    tr = integrate(2, p, [p.grid.v_g, 0.0], config=rk4(5.0, 1e-4, stride=10))
    out = classify(tr, eqs)
    ok = classical == [] and len(eqs) >= 1 and out.kind == CONVERGED
    acceptance("AC2 classical-droop counterexample", ok,
               f"classical_roots={len(classical)} complex_eq={len(eqs)} outcome={out.kind}")
    assert ok


def test_ac3_critical_gain(acceptance):
    t0 = time.perf_counter()
    p = case_one(v_g=0.5)
    stable = dip_is_stable(p.with_(eta=0.099 * W0))
    unstable = not dip_is_stable(p.with_(eta=0.101 * W0))
    bound = empirical_eta_bound(p) / W0
    dt = time.perf_counter() - t0
    ok = stable and unstable and abs(bound - 0.100) <= 0.005 and dt < 60.0
    acceptance("AC3 critical droop gain", ok,
               f"0.099:converged={stable} 0.101:not_converged={unstable} "
               f"boundary={bound:.4f} omega0 runtime={dt:.1f}s")
    assert ok


def test_ac4_limit_cycle(acceptance):
    t0 = time.perf_counter()
    p = case_three()
    eqs = equilibria(p)
    ua, ub = check_unstable(p, eqs[0])
    grid = initial_grid(0.74, 20)
    res = phase_portrait(p, grid, horizon=20.0, step=1e-3)
    vm = voltage_bound(p)
    flipped = phase_portrait(case_three(alpha=1.0), grid, horizon=20.0, step=1e-3)
    dt = time.perf_counter() - t0
    ok = (eqs.coeffs.delta < 0 and eqs.unique and (ua.satisfied or ub.satisfied)
          and res.fractions()[LIMIT_CYCLE] == 1.0 and res.sup_norm <= vm + 1e-6
          and flipped.fractions()[CONVERGED] == 1.0 and dt < 120.0)
    acceptance("AC4 limit cycle", ok,
               f"delta={eqs.coeffs.delta:.4g} unstable=({ua.satisfied},{ub.satisfied}) "
               f"limit_cycle={res.fractions()[LIMIT_CYCLE]:.0%} excluded={len(res.excluded)} "
               f"sup={res.sup_norm:.5f}<=v_m={vm:.5f} alpha1_converged={flipped.fractions()[CONVERGED]:.0%} "
               f"runtime={dt:.1f}s")
    assert ok


def test_ac5_off_grid(acceptance):
    # limit-cycle branch
    p = off_grid(alpha=2.0)
    amp2 = off_grid_classification(p).amplitude_sq
    tr = integrate("offgrid", p, [0.2, 0.1], config=rk4(5.0, 1e-4, stride=10))
    out = classify(tr)
    rel = abs(out.mean_radius ** 2 - amp2) / amp2
    cycle_ok = out.kind == LIMIT_CYCLE and rel <= 1e-3
    # strict GAS branch
    gas = off_grid(alpha=0.5)
    tr_g = integrate("offgrid", gas, [0.9, -0.4], config=rk4(5.0, 1e-4, stride=10))
    gas_ok = (off_grid_classification(gas).kind == "origin_gas"
              and classify(tr_g).kind == CONVERGED)
    # equality case: algebraic decay r0 / sqrt(1 + 2 eta alpha r0^2 t)
    eqp = off_grid(alpha=1.0)
    r0 = 0.8
    tr_e = integrate("offgrid", eqp, [r0, 0.0], config=rk4(5.0, 1e-4, stride=100))
    r = np.hypot(tr_e.states[:, 0], tr_e.states[:, 1])
    ref = r0 / np.sqrt(1 + 2 * eqp.ctrl.eta * eqp.ctrl.alpha * r0 ** 2 * tr_e.times)
    # log-decay rate falls toward zero instead of settling at a constant
    late = -np.log(r[-1] / r[-11]) / (tr_e.times[-1] - tr_e.times[-11])
    early = -np.log(r[11] / r[1]) / (tr_e.times[11] - tr_e.times[1])
    eq_ok = (off_grid_classification(eqp).kind == "origin_gas" and np.max(np.abs(r - ref)) < 1e-6 * r0
             and r[-1] < r[0] and late < 0.1 * early)
    ok = cycle_ok and gas_ok and eq_ok
    acceptance("AC5 off-grid amplitude", ok,
               f"radius2={out.mean_radius ** 2:.6f} closed_form={amp2:.6f} rel={rel:.1e} "
               f"gas={gas_ok} equality_algebraic={eq_ok}")
    assert ok


def test_ac6_attraction_radius(acceptance):
    r7 = roa_radius(7.0, 1.0)
    try:
        roa_radius(3.0, 1.0)
        raised = False
    except ValueError:
        raised = True
    eps = np.sort(np.random.default_rng(6).uniform(3.0 + 1e-9, 50.0, 50))
    rs = [roa_radius(e, 1.0) for e in eps]
    mono = all(b > a for a, b in zip(rs, rs[1:]))
    ok = abs(r7 - 1.0) <= 1e-10 and raised and mono
    acceptance("AC6 attraction radius", ok, f"r(7,1)-1={r7 - 1:.1e} error_at_3={raised} monotone={mono}")
    assert ok


def test_ac7_epsilon_range(acceptance):
    rng = epsilon_range(case_one(v_g=0.5))
    d = rng.cond_d_at_upper
    ok = (not rng.empty and abs(rng.upper - 11.4) <= 0.2 and d is not None and not d.satisfied)
    acceptance("AC7 epsilon range", ok,
               f"range=(3, {rng.upper:.4f}] cond_d_satisfied={d.satisfied if d is not None else None} "
               f"cond_d_margin={d.margin if d is not None else float('nan'):.3e}")
    assert ok


def test_ac8_structural_properties(acceptance):
    rng = np.random.default_rng(808)
    # Jacobian vs central finite differences
    jac_worst = 0.0
    for _ in range(200):
        p = random_params(rng)
        for eq in equilibria(p):
            A = jacobian(p, eq)
            F = np.column_stack([(rhs_second_order(eq.v_vec + h, p) - rhs_second_order(eq.v_vec - h, p)) / 2e-6
                                 for h in (np.array([1e-6, 0.0]), np.array([0.0, 1e-6]))])
            jac_worst = max(jac_worst, np.max(np.abs(A - F)) / np.max(np.abs(A)))
    # nesting of the vector fields at the quasi-steady maps
    nest_worst = 0.0
    for _ in range(200):
        p = random_params(rng)
        vh, i = rng.uniform(-1.5, 1.5, 2), rng.uniform(-1.5, 1.5, 2)
        f4 = rhs_fourth_order(np.r_[vh, p.grid.Y @ (vh - p.grid.v_g_vec)], p)
        nest_worst = max(nest_worst, np.max(np.abs(f4[:2] - rhs_second_order(vh, p))) / max(1, np.max(np.abs(f4))))
        x8 = np.r_[vh, i, vh, 0.0, 0.0]
        f8 = rhs_eighth_order(x8, p)
        f4 = rhs_fourth_order(np.r_[vh, i], p)
        nest_worst = max(nest_worst, np.max(np.abs(f8[:4] - f4)) / max(1, np.max(np.abs(f4))))
        f12 = rhs_full_order(np.r_[x8, current_reference(x8, p), 0.0, 0.0], p)
        nest_worst = max(nest_worst, np.max(np.abs(f12[:8] - f8)) / max(1, np.max(np.abs(f8))))
    # Lyapunov decrease where the global condition holds
    lyap_runs, lyap_bad = 0, 0
    while lyap_runs < 40:
        p = random_params(rng)
        eqs = equilibria(p)
        if not eqs.unique or not check_global(p, eqs):
            continue
        tr = integrate(2, p, rng.uniform(-2, 2, size=(5, 2)), config=rk4(1.0, 1e-4, stride=5))
        for k in range(5):
            lyap_bad += lyapunov_trace(tr.member(k), eqs[0]).increasing
        lyap_runs += 5
    # cubic monotonicity inequality
    x = rng.normal(scale=2.0, size=(100_000, 2))
    y = rng.normal(scale=2.0, size=(100_000, 2))
    nx, ny = np.sum(x * x, 1, keepdims=True), np.sum(y * y, 1, keepdims=True)
    lhs = np.sum((x - y) * (nx * x - ny * y), 1)
    rhs = 0.5 * ny[:, 0] * np.sum((x - y) ** 2, 1)
    ineq_viol = int(np.sum(lhs - rhs < -1e-12 * (1 + np.abs(lhs))))
    # implication chain
    chain_viol = 0
    for _ in range(1000):
        p = random_params(rng)
        eqs = equilibria(p)
        no_eq = check_global_no_eq(p).satisfied
        g = eqs.unique and check_global(p, eqs).satisfied
        if no_eq and not g:
            chain_viol += 1
        for eq in eqs:
            loc = check_local(p, eq)
            if g and not loc.sufficient.satisfied:
                chain_viol += 1
            if loc.sufficient.satisfied and not loc.hurwitz:
                chain_viol += 1
    ok = (jac_worst <= 1e-6 and nest_worst <= 1e-12 and lyap_bad == 0 and ineq_viol == 0
          and chain_viol == 0)
    acceptance("AC8 structural properties", ok,
               f"jacobian_rel={jac_worst:.1e} nesting={nest_worst:.1e} lyapunov_increases={lyap_bad}/"
               f"{lyap_runs} inequality_violations={ineq_viol}/100000 chain_violations={chain_viol}")
    assert ok


def _time_to_tenth(eta):
    pre = case_one(eta=eta)
    x0 = lift(equilibria(pre)[0], pre, 12).data
    tr = integrate(12, pre, x0, [Event.grid_voltage(0.5, 0.5)], config=rk4(1.5, 2e-5, stride=5))
    return error_coordinates(tr).time_to_fraction(0.1)


def test_ac9_time_scale_separation(acceptance):
    slow = _time_to_tenth(0.02)
    fast = _time_to_tenth(0.06)
    ordered = slow["y4"] < slow["y3"] < slow["y2"] < slow["dvoc"]
    inverted = fast["dvoc"] < fast["y2"]
    ok = ordered and inverted
    acceptance("AC9 time-scale separation", ok,
               "eta=0.02: " + " ".join(f"{k}={slow[k]:.4f}" for k in ("y4", "y3", "y2", "dvoc"))
               + " | eta=0.06: " + " ".join(f"{k}={fast[k]:.4f}" for k in ("y2", "dvoc")))
    assert ok
