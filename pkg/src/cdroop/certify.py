"""Analytical stability and instability certificates.

Second-order conditions work on the voltage-only model.  The full-order
conditions follow a nested singular perturbation argument over four time
scales (dVOC, line, voltage loop, current loop) and are assembled here from
the decrease rates, interconnection bounds and a composite Lyapunov matrix.

All margins follow one sign convention: margin > 0 means the condition holds.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.optimize import bisect

from .equilibrium import EquilibriumPoint, EquilibriumSet, equilibria
from .model import SystemParams, as_matrix, jacobian_second_order

INCONCLUSIVE_TOL = 1e-10
PD_TOL = 1e-12
# default choice of c1 as a fraction of alpha_1
C1_FRACTION = 0.5
# fraction used when c1 is pushed to its supremum alpha_1
C1_SUP = 1.0 - 1e-9


class TheoremInapplicable(ValueError):
    pass


@dataclass(frozen=True)
class Condition:
    name: str
    margin: float
    statement: str
    inconclusive: bool = False

    @property
    def satisfied(self) -> bool:
        return bool(self.margin > 0)

    def __bool__(self):
        return self.satisfied

    def as_dict(self) -> dict:
        m = float(self.margin)
        return {"name": self.name, "satisfied": self.satisfied,
                "margin": m if math.isfinite(m) else None,
                "paper_eq": self.statement,
                **({"inconclusive": True} if self.inconclusive else {})}


@dataclass(frozen=True)
class Kappa:
    kappa_r: float
    kappa_i: float

    @property
    def value(self) -> complex:
        return complex(self.kappa_r, self.kappa_i)


def kappa(params: SystemParams) -> Kappa:
    """kappa_r + j kappa_i = e^{j phi} (sigma_bar* - y)."""
    k = params.s_phi_star - params.y_phi
    return Kappa(k.real, k.imag)


def _point(params: SystemParams, eq) -> EquilibriumPoint:
    if isinstance(eq, EquilibriumSet):
        return eq[0]
    return eq


def _unique_point(params: SystemParams, eq) -> EquilibriumPoint:
    eqs = eq if isinstance(eq, EquilibriumSet) else equilibria(params)
    if eqs.uniqueness != "unique":
        raise TheoremInapplicable(
            f"theorem inapplicable: equilibrium set is {eqs.uniqueness}")
    if isinstance(eq, EquilibriumPoint) and abs(eq.v_s - eqs[0].v_s) > 1e-8:
        raise TheoremInapplicable("theorem inapplicable: point is not the equilibrium")
    return eqs[0]


def _shape(params: SystemParams, eq: EquilibriumPoint) -> float:
    """alpha |v_s|^2 / v*^2."""
    return params.ctrl.alpha * eq.norm_sq / params.ctrl.v_star ** 2


# ---------------------------------------------------------------------------
# second-order certificates

def check_global(params: SystemParams, eq) -> Condition:
    """Global asymptotic stability of the unique equilibrium."""
    pt = _unique_point(params, eq)
    kap = kappa(params)
    margin = 0.5 * _shape(params, pt) - kap.kappa_r - params.ctrl.alpha
    return Condition("global_with_eq", margin,
                     "Re{e^{j phi} sigma*} + alpha < alpha |v_s|^2 / (2 v*^2) + Re{e^{j phi} y}")


def check_global_no_eq(params: SystemParams) -> Condition:
    """Equilibrium-free global stability condition (also implies uniqueness)."""
    margin = -kappa(params).kappa_r - params.ctrl.alpha
    return Condition("global_no_eq", margin,
                     "Re{e^{j phi} sigma*} + alpha < Re{e^{j phi} y}")


def jacobian(params: SystemParams, eq) -> np.ndarray:
    return jacobian_second_order(params, _point(params, eq).v_vec)


def jacobian_kappa_form(params: SystemParams, eq) -> np.ndarray:
    """Same Jacobian written entrywise in kappa terms (independent assembly)."""
    pt = _point(params, eq)
    c = params.ctrl
    kap = kappa(params)
    vd, vq = pt.v_vec
    eta, al, vs2 = c.eta, c.alpha, c.v_star ** 2
    diag = eta * kap.kappa_r + eta * al
    off = params.omega_delta + eta * kap.kappa_i
    cross = eta * al * 2 * vd * vq / vs2
    return np.array([
        [diag - eta * al * (3 * vd * vd + vq * vq) / vs2, -off - cross],
        [off - cross, diag - eta * al * (3 * vq * vq + vd * vd) / vs2],
    ])


@dataclass(frozen=True)
class LocalResult:
    sufficient: Condition
    hurwitz: bool
    eigenvalues: np.ndarray

    def __bool__(self):
        return self.sufficient.satisfied


def check_local(params: SystemParams, eq) -> LocalResult:
    pt = _point(params, eq)
    margin = _shape(params, pt) - kappa(params).kappa_r - params.ctrl.alpha
    ev = np.linalg.eigvals(jacobian(params, pt))
    return LocalResult(
        Condition("local", margin, "kappa_r + alpha < alpha |v_s|^2 / v*^2"),
        bool(np.all(ev.real < 0)), ev)


def check_unstable(params: SystemParams, eq) -> Tuple[Condition, Condition]:
    pt = _point(params, eq)
    c = params.ctrl
    kap = kappa(params)
    s = _shape(params, pt)
    ma = kap.kappa_r + c.alpha - 2 * s
    mb = s * s - (ma ** 2 + (params.omega_delta / c.eta + kap.kappa_i) ** 2)
    return (
        Condition("unstable_a", ma, "kappa_r + alpha > 2 alpha |v_s|^2 / v*^2",
                  inconclusive=abs(ma) < INCONCLUSIVE_TOL),
        Condition("unstable_b", mb,
                  "(kappa_r + alpha - 2 alpha |v_s|^2/v*^2)^2 + (omega_delta/eta + kappa_i)^2"
                  " < (alpha |v_s|^2 / v*^2)^2",
                  inconclusive=abs(mb) < INCONCLUSIVE_TOL),
    )


def voltage_bound(params: SystemParams) -> float:
    """Ultimate upper bound v_m on the voltage amplitude."""
    c = params.ctrl
    if c.alpha == 0:
        raise ValueError("bound undefined in voltage-following mode (alpha = 0)")
    rad = 1.0 + (kappa(params).kappa_r + abs(params.y)) / c.alpha
    return max(params.grid.v_g, c.v_star * math.sqrt(rad) if rad > 0 else 0.0)


def scr_theta(y: complex, theta: float) -> float:
    """Extended short-circuit ratio g cos(theta) + b sin(theta), y = g - j b."""
    return y.real * math.cos(theta) - y.imag * math.sin(theta)


def voltage_following_matrix(params: SystemParams) -> np.ndarray:
    return as_matrix(1j * params.omega_delta + params.ctrl.eta * (params.s_phi_star - params.y_phi))


def check_voltage_following(params: SystemParams) -> Condition:
    """Necessary and sufficient condition for the alpha = 0 linear model."""
    if params.ctrl.alpha != 0:
        raise ValueError("not in voltage-following mode (alpha != 0)")
    return Condition("voltage_following", -kappa(params).kappa_r,
                     "Re{e^{j phi} sigma*} < Re{e^{j phi} y}")


@dataclass(frozen=True)
class OffGridResult:
    kind: str                       # "origin_gas" or "limit_cycle"
    amplitude_sq: float = 0.0


def off_grid_classification(params: SystemParams) -> OffGridResult:
    if params.grid.v_g != 0:
        raise ValueError("off-grid classification requires v_g = 0")
    c = params.ctrl
    excess = kappa(params).kappa_r + c.alpha
    if excess <= 0:
        return OffGridResult("origin_gas")
    if c.alpha == 0:
        raise ValueError("degenerate: limit-cycle branch with alpha = 0")
    return OffGridResult("limit_cycle", c.v_star ** 2 / c.alpha * excess)


@dataclass(frozen=True)
class PointChecks:
    eq: EquilibriumPoint
    local: LocalResult
    unstable_a: Condition
    unstable_b: Condition


@dataclass(frozen=True)
class SecondOrderCertificate:
    kappa: Kappa
    uniqueness: str
    global_with_eq: Optional[Condition]
    global_no_eq: Condition
    points: tuple
    v_m: float
    scr_theta: float

    def conditions(self) -> List[Condition]:
        out = [self.global_no_eq]
        if self.global_with_eq is not None:
            out.append(self.global_with_eq)
        for k, p in enumerate(self.points):
            suffix = "" if len(self.points) == 1 else f"[{k}]"
            for cnd in (p.local.sufficient, p.unstable_a, p.unstable_b):
                out.append(Condition(cnd.name + suffix, cnd.margin, cnd.statement, cnd.inconclusive))
        return out


def certify_second_order(params: SystemParams, eqs: EquilibriumSet = None) -> SecondOrderCertificate:
    eqs = eqs if eqs is not None else equilibria(params)
    g = check_global(params, eqs) if eqs.uniqueness == "unique" else None
    pts = []
    for pt in eqs:
        ua, ub = check_unstable(params, pt)
        pts.append(PointChecks(pt, check_local(params, pt), ua, ub))
    return SecondOrderCertificate(
        kappa(params), eqs.uniqueness, g, check_global_no_eq(params), tuple(pts),
        voltage_bound(params), scr_theta(params.y, params.ctrl.phi))


# ---------------------------------------------------------------------------
# full-order certificates

@dataclass(frozen=True)
class PerturbationCoefficients:
    epsilon: float
    alpha_1: float
    alpha_2: float
    alpha_3: float
    alpha_4: float
    beta_12: float
    beta_23: float
    beta_34: float
    c_eps: float
    c_v: float
    c_c: float
    b_211: float
    b_221: float
    b_311: float
    b_321: float
    b_411: float
    b_421: float
    b_422: float
    b_432: float
    b_433: float
    b_443: float
    b_312: float = 0.0
    b_322: float = 0.0
    b_332: float = 0.0
    b_412: float = 0.0
    b_413: float = 0.0
    b_423: float = 0.0

    # aggregated interconnection bounds
    @property
    def beta_21(self):
        return self.b_211

    @property
    def gamma_2(self):
        return self.b_221

    @property
    def beta_31(self):
        return self.b_311 + self.b_312

    @property
    def beta_32(self):
        return self.b_321 + self.b_322

    @property
    def gamma_3(self):
        return self.b_332

    @property
    def beta_41(self):
        return self.b_411 + self.b_412 + self.b_413

    @property
    def beta_42(self):
        return self.b_421 + self.b_422 + self.b_423

    @property
    def beta_43(self):
        return self.b_432 + self.b_433

    @property
    def gamma_4(self):
        return self.b_443

    @property
    def alphas(self):
        return (self.alpha_1, self.alpha_2, self.alpha_3, self.alpha_4)

    @property
    def gammas(self):
        return (0.0, self.gamma_2, self.gamma_3, self.gamma_4)

    def beta(self, i: int, j: int) -> float:
        return getattr(self, f"beta_{i}{j}")

    @property
    def mu(self):
        m = [1.0]
        for i in (1, 2, 3):
            m.append(m[-1] * self.beta(i, i + 1) / self.beta(i + 1, i))
        return tuple(m)


def _check_thm_pre(params: SystemParams, epsilon: float):
    if params.omega_delta != 0:
        raise TheoremInapplicable("full-order certificate requires omega_delta = 0")
    if not epsilon > 3:
        raise ValueError("epsilon must be > 3")
    if not params.grid.r_g > 0:
        raise ValueError("full-order certificate requires r_g > 0")
    if not params.grid.l_g > 0:
        raise ValueError("full-order certificate requires l_g > 0")
    if not params.filt.k_rv > params.c_f_s:
        raise ValueError("precondition k_rv > c_f violated")
    if not params.filt.k_rc > params.l_f_s:
        raise ValueError("precondition k_rc > l_f violated")


def perturbation_coefficients(params: SystemParams, epsilon: float,
                              eq: EquilibriumPoint = None) -> PerturbationCoefficients:
    _check_thm_pre(params, epsilon)
    eq = eq if eq is not None else _unique_point(params, equilibria(params))
    c, f = params.ctrl, params.filt
    n = eq.norm_sq / c.v_star ** 2
    cf, lf, lg = params.c_f_s, params.l_f_s, params.l_g_s
    kap = kappa(params)
    ymag, zmag = abs(params.y), abs(params.z)
    tau = lg / params.grid.r_g
    c_eps = abs(kap.value + c.alpha) + c.alpha * epsilon * n
    c_v = cf / f.k_pv + cf / f.k_rv
    c_c = lf / f.k_pc + lf / f.k_rc
    yk = abs(params.y_f - f.k_pv)
    eta = c.eta
    return PerturbationCoefficients(
        epsilon=epsilon,
        alpha_1=-kap.kappa_r - c.alpha + 0.5 * c.alpha * n,
        alpha_2=1.0,
        alpha_3=1.0 - cf / f.k_rv,
        alpha_4=1.0 - lf / f.k_rc,
        beta_12=1.0,
        beta_23=1.0 / params.grid.r_g,
        beta_34=1.0 / f.k_pv + 1.0 / f.k_rv,
        c_eps=c_eps, c_v=c_v, c_c=c_c,
        b_211=c_eps * eta * tau * ymag,
        b_221=eta * tau * ymag,
        b_311=c_eps * c_v * eta,
        b_321=c_v * eta,
        b_411=c_eps * c_c * eta * f.k_pv,
        b_421=c_c * eta * f.k_pv,
        b_422=c_c * zmag / lg,
        b_432=c_c / lg,
        b_433=c_c * (yk * (f.k_pv + f.k_rv) / cf + f.k_rv),
        b_443=c_c * yk / cf,
    )


def _beta_vec(co: PerturbationCoefficients, i: int) -> np.ndarray:
    """[beta_i1/2, ..., beta_i(i-2)/2, beta_i(i-1)]."""
    return np.array([0.5 * co.beta(i, j) for j in range(1, i - 1)] + [co.beta(i, i - 1)])


@dataclass(frozen=True)
class CompositeMatrix:
    M: np.ndarray
    c: tuple        # (c1, c2, c3)
    D: tuple        # (D2, D3)


def composite_matrix(co: PerturbationCoefficients, c1: float = None) -> CompositeMatrix:
    """Composite Lyapunov matrix M and the nested stability margins c1..c3."""
    al, ga, mu = co.alphas, co.gammas, co.mu
    c1 = C1_FRACTION * co.alpha_1 if c1 is None else c1
    M = np.array([[al[0]]])
    for i in (2, 3, 4):
        b = _beta_vec(co, i)
        col = -mu[i - 1] * b
        M = np.block([[M, col[:, None]],
                      [col[None, :], np.array([[(al[i - 1] - ga[i - 1]) * mu[i - 1]]])]])
    cs, Ds = [c1], []
    for i in (2, 3):
        c, D = nested_margin(al[i - 1] - ga[i - 1], co.beta(i, i - 1) / co.beta(i - 1, i),
                             cs[-1], _beta_vec(co, i))
        cs.append(c)
        Ds.append(D)
    return CompositeMatrix(M, tuple(cs), tuple(Ds))


def nested_margin(a: float, ratio: float, c_prev: float, beta_vec) -> tuple:
    """Margin c_i of layer i from its net decrease rate a = alpha_i - gamma_i.

    ratio is beta_i(i-1)/beta_(i-1)i and c_prev the margin of the layer below.
    Returns (c_i, D_i); D_i is nonnegative by construction.
    """
    b = np.asarray(beta_vec, dtype=float)
    rc = ratio * c_prev
    # expanded form (a + rc)^2 - 4 a rc cancels badly when a ~ rc
    D = (a - rc) ** 2 + 4 * (b @ b)
    return (0.5 * (a + rc - math.sqrt(D)) if D >= 0 else float("nan")), D


def roa_radius(epsilon: float, v_s_norm: float) -> float:
    """Radius r with ((1 + r/|v_s|)^3 - 1)/(r/|v_s|) = epsilon."""
    if not epsilon > 3:
        raise ValueError("no neighborhood exists for epsilon <= 3")
    if not v_s_norm > 0:
        raise ValueError("v_s_norm must be > 0")

    def g(s):
        return s * s + 3 * s + 3 - epsilon      # ((1+s)^3 - 1)/s - epsilon

    hi = 1.0
    while g(hi) < 0:
        hi *= 2
    s = bisect(g, 0.0, hi, xtol=1e-300, rtol=1e-15, maxiter=2000)
    return s * v_s_norm


@dataclass(frozen=True)
class FullOrderCertificate:
    coeffs: PerturbationCoefficients
    M: np.ndarray
    c1: float
    c2: float
    c3: float
    cond_a: Condition
    cond_b: Condition
    cond_c: Condition
    cond_d: Condition
    roa_radius: float
    m_eigenvalues: np.ndarray

    @property
    def conditions(self):
        return (self.cond_a, self.cond_b, self.cond_c, self.cond_d)

    @property
    def all_satisfied(self) -> bool:
        return all(self.conditions)

    @property
    def positive_definite(self) -> bool:
        return bool(np.all(self.m_eigenvalues >= PD_TOL))


def _nan_fail(x: float) -> float:
    return x if math.isfinite(x) else -math.inf


def check_full_order(params: SystemParams, epsilon: float, c1: float = None,
                     eq: EquilibriumPoint = None) -> FullOrderCertificate:
    co = perturbation_coefficients(params, epsilon, eq)
    if eq is None:
        eq = _unique_point(params, equilibria(params))
    comp = composite_matrix(co, c1)
    c1, c2, c3 = comp.c
    f, eta, rg = params.filt, params.ctrl.eta, params.grid.r_g
    tau_y = params.l_g_s / rg * abs(params.y)

    ma = co.alpha_1 - c1
    bound_b = c1 / (tau_y * (c1 + co.c_eps)) if c1 > 0 else -math.inf
    mb = bound_b - eta

    lhs_c = (1 + f.k_rv / f.k_pv) / (f.k_rv / params.c_f_s - 1)
    rhs_c = 4 * c2 / (eta * (co.c_eps ** 2 + 4) / rg)
    mc = _nan_fail(rhs_c - lhs_c)

    cc = co.c_c
    b41, b42, b43, g4 = co.beta_41 / cc, co.beta_42 / cc, co.beta_43 / cc, co.gamma_4 / cc
    lhs_d = (1 + f.k_rc / f.k_pc) / (f.k_rc / params.l_f_s - 1)
    rhs_d = 4 * c3 / (co.beta_34 / b43 * (b41 ** 2 + b42 ** 2 + 4 * b43 ** 2) + c3 * g4)
    md = _nan_fail(rhs_d - lhs_d)

    return FullOrderCertificate(
        co, comp.M, c1, c2, c3,
        Condition("cond_a", ma,
                  "Re{e^{j phi} sigma*} + alpha + c1 < alpha |v_s|^2/(2 v*^2) + Re{e^{j phi} y}"),
        Condition("cond_b", mb, "0 < eta < c1 / ((l_g/r_g) |y| (c1 + c_eps))"),
        Condition("cond_c", mc,
                  "(1 + k_rv/k_pv)/(k_rv/c_f - 1) < 4 c2 / (eta (c_eps^2 + 4)/r_g)"),
        Condition("cond_d", md,
                  "(1 + k_rc/k_pc)/(k_rc/l_f - 1) < 4 c3 / ((beta_34/b43)(b41^2 + b42^2"
                  " + 4 b43^2) + c3 g4), b4k and g4 normalized by c_c"),
        roa_radius(epsilon, math.sqrt(eq.norm_sq)),
        np.linalg.eigvalsh(comp.M),
    )


@dataclass(frozen=True)
class EpsilonRange:
    lower: float
    upper: float
    empty: bool
    capped: bool            # upper end hit eps_max
    c1: float
    cond_d_at_upper: Optional[Condition] = None


def _abc_margin(params, eps, c1_frac, eq):
    co = perturbation_coefficients(params, eps, eq)
    c1 = c1_frac * co.alpha_1
    cert = check_full_order(params, eps, c1, eq)
    return min(cert.cond_a.margin, cert.cond_b.margin, cert.cond_c.margin), cert


def epsilon_range(params: SystemParams, eps_max: float = 50.0, c1_fraction: float = C1_SUP,
                  tol: float = 1e-9) -> EpsilonRange:
    """Largest interval (3, eps_hi] on which the first three full-order conditions hold.

    c1 is taken as c1_fraction * alpha_1; the default pushes it to the
    supremum alpha_1, which gives the widest interval.  Conditions b and c
    tighten monotonically with epsilon, so the upper end is found by bisection.
    """
    if params.omega_delta != 0:
        raise TheoremInapplicable("full-order certificate requires omega_delta = 0")
    eq = _unique_point(params, equilibria(params))
    lo_eps = 3.0 + 1e-9
    co = perturbation_coefficients(params, lo_eps, eq)
    c1 = c1_fraction * co.alpha_1
    if co.alpha_1 <= 0 or _abc_margin(params, lo_eps, c1_fraction, eq)[0] <= 0:
        return EpsilonRange(3.0, 3.0, True, False, c1)
    m_hi, cert = _abc_margin(params, eps_max, c1_fraction, eq)
    if m_hi > 0:
        return EpsilonRange(3.0, eps_max, False, True, c1, cert.cond_d)
    a, b = lo_eps, eps_max
    while b - a > tol * max(1.0, b):
        m = 0.5 * (a + b)
        if _abc_margin(params, m, c1_fraction, eq)[0] > 0:
            a = m
        else:
            b = m
    return EpsilonRange(3.0, a, False, False, c1, _abc_margin(params, a, c1_fraction, eq)[1].cond_d)
