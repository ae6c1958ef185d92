"""Steady states of the complex droop system.

The steady-state equations reduce to a cubic in x = v_s^2 whose positive
roots give the amplitudes; the angle then follows from the two trigonometric
relations.  A quartic in v_s does the same for classical droop control.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional

import numpy as np
from numpy.polynomial import Polynomial

from .model import (StateVector, SystemParams, jacobian_second_order, kernel,
                    rhs_second_order)

POSITIVE_ROOT_MIN = 1e-12
SPURIOUS_TOL = 1e-6
MARGINAL_REL = 1e-12
DISTINCT_TOL = 1e-9


class DegenerateError(ValueError):
    pass


class SpuriousRootError(ValueError):
    pass


@dataclass(frozen=True)
class CubicCoefficients:
    a: float
    b: float
    c: float
    d: float

    @property
    def delta(self) -> float:
        a, b, c, d = self.a, self.b, self.c, self.d
        return b * b * c * c - 4 * a * c ** 3 - 4 * d * b ** 3 - 27 * a * a * d * d + 18 * a * b * c * d

    @property
    def scale(self) -> float:
        return max(abs(self.a), abs(self.b), abs(self.c), abs(self.d))

    @property
    def uniqueness(self) -> str:
        """'unique' (delta < 0), 'marginal' (|delta| tiny) or 'multiple'."""
        dl = self.delta
        if abs(dl) < MARGINAL_REL * self.scale ** 4:
            return "marginal"
        return "unique" if dl < 0 else "multiple"

    def as_array(self) -> np.ndarray:
        return np.array([self.a, self.b, self.c, self.d])


@dataclass(frozen=True)
class EquilibriumPoint:
    v_s: float
    delta_s: float
    v_vec: np.ndarray
    residual: float

    @property
    def v_complex(self) -> complex:
        return complex(self.v_vec[0], self.v_vec[1])

    @property
    def norm_sq(self) -> float:
        return float(self.v_vec @ self.v_vec)


@dataclass(frozen=True)
class EquilibriumSet:
    points: tuple
    coeffs: CubicCoefficients

    @property
    def uniqueness(self) -> str:
        """Tri-state; a near-zero discriminant is treated as non-unique."""
        if len(self.points) > 1:
            return "multiple"
        if self.coeffs.uniqueness == "marginal":
            return "marginal"
        # one positive root, possibly with negative companions when delta > 0
        return "unique"

    @property
    def unique(self) -> bool:
        return self.uniqueness == "unique"

    def __len__(self):
        return len(self.points)

    def __iter__(self):
        return iter(self.points)

    def __getitem__(self, k):
        return self.points[k]


def _lumped(params: SystemParams):
    """(A, B, |y|, phi_tilde): the two bracketed terms of the steady state."""
    c = params.ctrl
    ymag = abs(params.y)
    pt = params.phi_tilde
    s = c.s_phi_star
    A = s.real + c.alpha - ymag * math.cos(pt)
    B = s.imag + params.omega_delta / c.eta + ymag * math.sin(pt)
    return A, B, ymag, pt


def cubic_coefficients(params: SystemParams) -> CubicCoefficients:
    alpha = params.ctrl.alpha
    if alpha == 0:
        raise DegenerateError("degenerate: use voltage_following path (alpha = 0)")
    vs2 = params.ctrl.v_star ** 2
    A, B, ymag, _ = _lumped(params)
    return CubicCoefficients(
        a=alpha ** 2 / vs2 ** 2,
        b=-2.0 * alpha * A / vs2,
        c=A * A + B * B,
        d=-(params.grid.v_g ** 2) * ymag ** 2,
    )


def _polish(coefs: np.ndarray, x: float, iters: int = 30) -> float:
    """Newton polishing of a real root of the polynomial (highest degree first)."""
    dcoefs = np.polyder(coefs)
    best, best_r = x, abs(np.polyval(coefs, x))
    for k in range(iters):
        d = np.polyval(dcoefs, x)
        if d == 0:
            break
        x = x - np.polyval(coefs, x) / d
        r = abs(np.polyval(coefs, x))
        if r < best_r:
            best, best_r = x, r
        elif k > 3:
            break
    return float(best)


def real_roots(coefs, imag_tol: float = 1e-7) -> List[float]:
    """Real roots of a polynomial via companion-matrix eigenvalues plus Newton polish.

    Coefficients are ordered highest degree first.  Near-real eigenvalue pairs
    (which appear around double roots) are accepted and polished.
    """
    coefs = np.asarray(coefs, dtype=float)
    roots = np.roots(coefs)
    out: List[float] = []
    for r in sorted(roots, key=lambda r: r.real):
        if abs(r.imag) > imag_tol * max(1.0, abs(r)):
            continue
        x = _polish(coefs, r.real)
        if all(abs(x - o) > DISTINCT_TOL * max(1.0, abs(x)) for o in out):
            out.append(x)
    return sorted(out)


def solve_positive_roots(coeffs: CubicCoefficients) -> List[float]:
    if not coeffs.a > 0:
        raise ValueError("leading coefficient must be > 0")
    return [x for x in real_roots(coeffs.as_array()) if x > POSITIVE_ROOT_MIN]


def _trig(v_s: float, params: SystemParams):
    c = params.ctrl
    A, B, ymag, pt = _lumped(params)
    vg = params.grid.v_g
    if vg == 0:
        raise ValueError("angle undefined without a grid voltage (v_g = 0)")
    shape = c.alpha * v_s ** 2 / c.v_star ** 2
    cos_ = v_s * (shape - A) / (vg * ymag)
    sin_ = v_s * B / (vg * ymag)
    return cos_, sin_, pt


def recover_angle(v_s: float, params: SystemParams) -> float:
    """Angle of the equilibrium with amplitude v_s, in [0, 2 pi)."""
    if not v_s > 0:
        raise ValueError("v_s must be > 0")
    cos_, sin_, pt = _trig(v_s, params)
    if abs(cos_ * cos_ + sin_ * sin_ - 1.0) > SPURIOUS_TOL:
        raise SpuriousRootError("spurious root: not an equilibrium")
    return _wrap(math.atan2(sin_, cos_) - pt)


def _wrap(angle: float) -> float:
    """Angle in [0, 2 pi); values a rounding error below 2 pi map to 0."""
    a = angle % (2 * math.pi)
    return 0.0 if a > 2 * math.pi - 1e-12 else a


def _newton_refine(params: SystemParams, v_vec: np.ndarray, iters: int = 4) -> np.ndarray:
    """A few Newton steps on the rectangular steady-state equation."""
    best = v_vec
    best_r = np.max(np.abs(rhs_second_order(v_vec, params)))
    x = v_vec
    for _ in range(iters):
        f = rhs_second_order(x, params)
        try:
            x = x - np.linalg.solve(jacobian_second_order(params, x), f)
        except np.linalg.LinAlgError:
            break
        r = np.max(np.abs(rhs_second_order(x, params)))
        if r < best_r:
            best, best_r = x, r
    return best


def equilibria(params: SystemParams) -> EquilibriumSet:
    """All equilibria of the second-order model, descending amplitude."""
    coeffs = cubic_coefficients(params)
    pts = []
    for x in sorted(solve_positive_roots(coeffs), reverse=True):
        v_s = math.sqrt(x)
        try:
            delta = recover_angle(v_s, params)
        except SpuriousRootError:
            continue
        vec = _newton_refine(params, np.array([v_s * math.cos(delta), v_s * math.sin(delta)]))
        v_s = float(math.hypot(*vec))
        delta = _wrap(math.atan2(vec[1], vec[0]))
        res = float(np.max(np.abs(rhs_second_order(vec, params))))
        if any(abs(v_s - p.v_s) <= DISTINCT_TOL for p in pts):
            continue
        pts.append(EquilibriumPoint(v_s, delta, vec, res))
    return EquilibriumSet(tuple(pts), coeffs)


def voltage_following_equilibrium(params: SystemParams) -> EquilibriumPoint:
    """Single equilibrium of the linear (alpha = 0) model."""
    k = kernel(params)
    vc = -k.b2 / k.a2
    vec = np.array([vc.real, vc.imag])
    res = float(np.max(np.abs(rhs_second_order(vec, params))))
    return EquilibriumPoint(abs(vc), _wrap(math.atan2(vc.imag, vc.real)), vec, res)


def classical_droop_equilibria(params: SystemParams):
    """Equilibria (v_s, delta_s) of classical droop control; may be empty.

    Classical droop regulates amplitude linearly, q_phi = q_phi* + alpha (v* - v),
    giving a quartic in v_s.
    """
    c = params.ctrl
    ymag, pt = abs(params.y), params.phi_tilde
    # rotated setpoints in power units
    pstar, qstar = _rotated_setpoints(params)
    vg = params.grid.v_g
    cc, ss = ymag * math.cos(pt), ymag * math.sin(pt)
    A0 = qstar + c.alpha * c.v_star
    B0 = pstar + params.omega_delta / c.eta
    P1 = Polynomial([A0, -c.alpha, -cc])
    P2 = Polynomial([B0, 0.0, ss])
    quartic = P1 ** 2 + P2 ** 2 - Polynomial([0.0, 0.0, vg * vg * ymag * ymag])
    coefs = quartic.coef[::-1]
    out = []
    for v_s in sorted(real_roots(coefs), reverse=True):
        if v_s <= POSITIVE_ROOT_MIN or vg == 0:
            continue
        cos_ = (v_s * v_s * cc - A0 + c.alpha * v_s) / (v_s * vg * ymag)
        sin_ = (B0 + v_s * v_s * ss) / (v_s * vg * ymag)
        if abs(cos_ * cos_ + sin_ * sin_ - 1.0) > SPURIOUS_TOL:
            continue
        out.append((float(v_s), _wrap(math.atan2(sin_, cos_) - pt)))
    return out


def _rotated_setpoints(params: SystemParams):
    """(p_phi*, q_phi*) such that q_phi* + j p_phi* = e^{j phi}(p* - j q*)."""
    c = params.ctrl
    w = c.rot * complex(c.p_star, -c.q_star)
    return w.imag, w.real


def lift(eq: EquilibriumPoint, params: SystemParams, order: int) -> StateVector:
    """Equilibrium of the model of the given order built from the voltage eq."""
    vs = eq.v_complex
    i = params.y * (vs - params.grid.v_g)
    blocks = [vs, i, vs, 0j, params.y_f * vs + i, 0j]
    return StateVector.from_blocks(*blocks[:order // 2])


def full_order_equilibrium(eq: EquilibriumPoint, params: SystemParams) -> StateVector:
    return lift(eq, params, 12)
