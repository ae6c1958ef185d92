"""Outcome classification, stability-boundary sweeps and phase portraits."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from . import certify
from .equilibrium import EquilibriumPoint, EquilibriumSet, equilibria, lift
from .model import SystemParams, to_complex
from .sim import Event, IntegratorConfig, Trajectory, integrate, model_dim

CONVERGED = "converged"
LIMIT_CYCLE = "limit_cycle"
DIVERGED = "diverged"
UNDECIDED = "undecided"


@dataclass(frozen=True)
class Thresholds:
    prefix: float = 0.4            # fraction of the horizon discarded as transient
    terminal: float = 0.1          # fraction of the horizon used for convergence
    converged: float = 1e-4        # pu
    centroid_window: float = 0.5   # fraction of the horizon for the orbit centroid
    return_spread: float = 1e-3    # pu, spread of section return points
    period_spread: float = 0.01    # relative spread of return times
    min_returns: int = 4
    diverge_factor: float = 10.0   # times v_m


@dataclass(frozen=True)
class Outcome:
    kind: str
    eq_index: Optional[int] = None
    final_error: float = math.nan
    period: float = math.nan
    mean_radius: float = math.nan
    centroid: complex = complex("nan")
    orbit: Optional[np.ndarray] = None    # (K, 2) samples over one period
    horizon: float = math.nan

    def as_dict(self) -> dict:
        def num(x):
            return float(x) if x is not None and math.isfinite(x) else None
        d = {"kind": self.kind, "horizon": num(self.horizon)}
        if self.kind == CONVERGED:
            d.update(eq_index=self.eq_index, final_error=num(self.final_error))
        elif self.kind == LIMIT_CYCLE:
            d.update(period=num(self.period), mean_radius=num(self.mean_radius),
                     centroid=[self.centroid.real, self.centroid.imag],
                     orbit=None if self.orbit is None else self.orbit.tolist())
        return d


def _eq_points(eqs) -> np.ndarray:
    if isinstance(eqs, EquilibriumSet):
        eqs = eqs.points
    out = []
    for e in eqs:
        if isinstance(e, EquilibriumPoint):
            out.append(e.v_complex)
        elif np.ndim(e) == 0:
            out.append(complex(e))
        else:
            out.append(complex(e[0], e[1]))
    return np.array(out, dtype=complex)


def default_equilibria(traj: Trajectory) -> np.ndarray:
    p = traj.params
    if traj.model == "offgrid" or p.grid.v_g == 0:
        return np.array([0j])
    if p.ctrl.alpha == 0:
        from .equilibrium import voltage_following_equilibrium
        return _eq_points([voltage_following_equilibrium(p)])
    return _eq_points(equilibria(p))


def _crossings(t, w, up: bool):
    """Crossings of the +real ray by w (complex, already centred)."""
    a, b = w.imag[:-1], w.imag[1:]
    mask = (a < 0) & (b >= 0) if up else (a > 0) & (b <= 0)
    idx = np.nonzero(mask)[0]
    s = a[idx] / (a[idx] - b[idx])
    re = w.real[idx] + s * (w.real[idx + 1] - w.real[idx])
    keep = re > 0
    return idx[keep], (t[idx] + s * (t[idx + 1] - t[idx]))[keep], re[keep]


def classify(traj: Trajectory, eqs=None, thresholds: Thresholds = Thresholds(),
             v_m: float = None) -> Outcome:
    """Classify the long-run behaviour of the vhat component of a trajectory."""
    th = thresholds
    t = traj.times
    x = to_complex(traj.states)[..., 0]
    horizon = float(t[-1] - t[0])
    if traj.flag == "diverged" or not np.all(np.isfinite(x)):
        return Outcome(DIVERGED, horizon=horizon)
    eq_pts = default_equilibria(traj) if eqs is None else _eq_points(eqs)

    term = t >= t[-1] - th.terminal * horizon
    if eq_pts.size:
        dist = np.max(np.abs(x[term][:, None] - eq_pts[None, :]), axis=0)
        k = int(np.argmin(dist))
        if dist[k] < th.converged:
            return Outcome(CONVERGED, eq_index=k, final_error=float(dist[k]), horizon=horizon)

    post = t >= t[0] + th.prefix * horizon
    cwin = t >= t[-1] - th.centroid_window * horizon
    centroid = complex(np.mean(x[cwin]))
    tp, xp = t[post], x[post]
    w = xp - centroid
    cands = [_crossings(tp, w, True), _crossings(tp, w, False)]
    idx, tc, rc = max(cands, key=lambda c: c[1].size)
    if tc.size >= th.min_returns + 1:
        periods = np.diff(tc)
        pm = float(np.mean(periods))
        # judge recurrence on the terminal half of the returns
        half = max(th.min_returns, tc.size // 2)
        rs, ps = rc[-half:], np.diff(tc[-half - 1:])
        if (np.ptp(rs) < th.return_spread and pm > 0
                and np.ptp(ps) < th.period_spread * np.mean(ps)):
            # centroid and radius over whole periods
            lo, hi = idx[0], idx[-1]
            seg = xp[lo:hi + 1]
            c2 = complex(np.mean(seg))
            radius = float(np.mean(np.abs(seg - c2)))
            last = xp[idx[-2]:idx[-1] + 1]
            step = max(1, last.size // 200)
            orbit = np.column_stack([last.real, last.imag])[::step]
            return Outcome(LIMIT_CYCLE, period=float(np.mean(ps)), mean_radius=radius,
                           centroid=c2, orbit=orbit, horizon=horizon)

    if v_m is None:
        p = traj.params
        v_m = certify.voltage_bound(p) if p.ctrl.alpha > 0 else None
    if v_m is not None and np.max(np.abs(x)) > th.diverge_factor * v_m:
        return Outcome(DIVERGED, horizon=horizon)
    return Outcome(UNDECIDED, horizon=horizon)


# ---------------------------------------------------------------------------
# phase portraits

def initial_grid(half_width: float, n: int = 20, center=(0.0, 0.0)) -> np.ndarray:
    """n x n square grid of initial voltages, shape (n*n, 2)."""
    g = np.linspace(-half_width, half_width, n)
    d, q = np.meshgrid(g + center[0], g + center[1], indexing="ij")
    return np.column_stack([d.ravel(), q.ravel()])


@dataclass(frozen=True)
class PortraitEntry:
    initial: np.ndarray
    outcome: Outcome
    path: np.ndarray        # decimated (K, 2) voltage samples


@dataclass
class PortraitResult:
    entries: List[PortraitEntry]
    excluded: np.ndarray    # initial points dropped for sitting on an equilibrium
    sup_norm: float         # largest voltage amplitude over all samples

    def fractions(self) -> dict:
        n = len(self.entries)
        kinds = [e.outcome.kind for e in self.entries]
        return {k: kinds.count(k) / n for k in (CONVERGED, LIMIT_CYCLE, DIVERGED, UNDECIDED)}


def phase_portrait(params: SystemParams, initial, model_order: int = 2, horizon: float = 20.0,
                   step: float = 1e-3, output_stride: int = 5,
                   thresholds: Thresholds = Thresholds(), decimate: int = 20) -> PortraitResult:
    """Classify second-order runs started from each initial voltage."""
    if model_order != 2:
        raise ValueError("phase portraits use the planar second-order model")
    init = np.asarray(initial, dtype=float).reshape(-1, 2)
    eq = default_equilibria(Trajectory(2, np.zeros(1), np.zeros((1, 2)), (), ((0.0, params),)))
    d = np.min(np.abs((init[:, 0] + 1j * init[:, 1])[:, None] - eq[None, :]), axis=1)
    keep = d > 1e-6
    cfg = IntegratorConfig(horizon, "rk4", step, output_stride=output_stride)
    traj = integrate(2, params, init[keep], (), cfg)
    entries = []
    for k, x0 in enumerate(init[keep]):
        member = traj.member(k)
        entries.append(PortraitEntry(x0, classify(member, eq, thresholds),
                                     member.states[::decimate].copy()))
    sup = float(np.max(np.linalg.norm(traj.states, axis=-1)))
    return PortraitResult(entries, init[~keep], sup)


# ---------------------------------------------------------------------------
# stability boundary in the (alpha, eta) plane

@dataclass
class BoundaryCurve:
    alpha: np.ndarray
    model_order: int
    eta_analytic: Optional[np.ndarray] = None
    eta_empirical: Optional[np.ndarray] = None
    valid_analytic: Optional[np.ndarray] = None
    valid_empirical: Optional[np.ndarray] = None

    def as_dict(self) -> dict:
        def arr(a):
            return None if a is None else [None if not np.isfinite(v) else float(v) for v in a]
        return {"alpha": arr(self.alpha), "model_order": self.model_order,
                "eta_analytic": arr(self.eta_analytic), "eta_empirical": arr(self.eta_empirical)}


def analytic_eta_bound(params: SystemParams, epsilon: float = 3.0 + 1e-6,
                       c1_fraction: float = certify.C1_SUP, max_iter: int = 100,
                       tol: float = 1e-10) -> float:
    """Largest eta for which the dVOC-rate and line-speed conditions hold together.

    The bound depends on the equilibrium, which may depend on eta, so it is
    iterated to a fixed point.  Returns nan when the iteration fails and 0
    when no positive c1 exists.
    """
    eta = params.ctrl.eta
    tau_y = params.l_g_s / params.grid.r_g * abs(params.y)
    for _ in range(max_iter):
        p = params.with_(eta=eta)
        eqs = equilibria(p)
        if eqs.uniqueness != "unique":
            return math.nan
        co = certify.perturbation_coefficients(p, epsilon, eqs[0])
        if co.alpha_1 <= 0:
            return 0.0
        c1 = c1_fraction * co.alpha_1
        new = c1 / (tau_y * (c1 + co.c_eps))
        if abs(new - eta) <= tol * max(1.0, eta):
            return new
        eta = new
    return math.nan


def dip_is_stable(params: SystemParams, model_order: int = 4, v_g_pre: float = 1.0,
                  horizon: float = 20.0, step: float = 5e-4,
                  thresholds: Thresholds = Thresholds()) -> bool:
    """Run a grid-voltage step from the pre-step equilibrium and check convergence."""
    pre = params.with_(v_g=v_g_pre)
    x0 = lift(equilibria(pre)[0], pre, model_order)
    ev = [Event.grid_voltage(0.0, params.grid.v_g)]
    traj = integrate(model_order, pre, x0, ev, IntegratorConfig(horizon, "rk4", step, output_stride=4))
    return classify(traj, None, thresholds).kind == CONVERGED


def empirical_eta_bound(params: SystemParams, model_order: int = 4, bracket=(0.01, 0.2),
                        tol: float = 1e-3, **kw) -> float:
    """Bisection on eta (bracket and tol in units of omega0); nan if not bracketed."""
    w0 = params.omega0
    lo, hi = bracket
    if not dip_is_stable(params.with_(eta=lo * w0), model_order, **kw):
        return math.nan
    if dip_is_stable(params.with_(eta=hi * w0), model_order, **kw):
        return math.nan
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if dip_is_stable(params.with_(eta=mid * w0), model_order, **kw):
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi) * w0


def boundary_sweep(params: SystemParams, alpha_grid: Sequence[float], model_order: int = 4,
                   mode: str = "analytic", **kw) -> BoundaryCurve:
    """Upper eta bound per alpha, analytic, empirical or both (mode='both').

    params carry the post-disturbance grid voltage; empirical runs start from
    the equilibrium at v_g_pre (default 1 pu).
    """
    alphas = np.asarray(alpha_grid, dtype=float)
    if np.any(alphas <= 0):
        raise ValueError("alpha grid must be positive")
    curve = BoundaryCurve(alphas, model_order)
    if mode in ("analytic", "both"):
        an_kw = {k: kw[k] for k in ("epsilon", "c1_fraction") if k in kw}
        vals = np.array([analytic_eta_bound(params.with_(alpha=a), **an_kw) for a in alphas])
        curve.eta_analytic, curve.valid_analytic = vals, np.isfinite(vals)
    if mode in ("empirical", "both"):
        em_kw = {k: v for k, v in kw.items() if k not in ("epsilon", "c1_fraction")}
        vals = np.array([empirical_eta_bound(params.with_(alpha=a), model_order, **em_kw)
                         for a in alphas])
        curve.eta_empirical, curve.valid_empirical = vals, np.isfinite(vals)
    if mode not in ("analytic", "empirical", "both"):
        raise ValueError(f"unknown mode {mode!r}")
    return curve


# ---------------------------------------------------------------------------
# randomized existence suite

def random_params(rng: np.random.Generator, omega0: float = 2 * math.pi * 50.0) -> SystemParams:
    """Draw from the parameter box used by the existence suite."""
    from .model import ControllerParams, GridLink
    zmag = rng.uniform(0.05, 1.5)
    zang = rng.uniform(0.0, math.pi / 2)
    grid = GridLink(zmag * math.cos(zang), zmag * math.sin(zang), rng.uniform(0.05, 1.2))
    alpha = rng.uniform(0.0, 5.0)
    while alpha == 0.0:
        alpha = rng.uniform(0.0, 5.0)
    ctrl = ControllerParams(rng.uniform(0.01, 0.1) * omega0, alpha, rng.uniform(0.0, math.pi / 2),
                            rng.uniform(-1, 1), rng.uniform(-1, 1), 1.0)
    return SystemParams(grid, ctrl)


@dataclass(frozen=True)
class ExistenceSummary:
    draws: int
    failures: int
    max_residual: float
    root_counts: dict
    seed: int

    def as_dict(self):
        return {"draws": self.draws, "failures": self.failures,
                "max_residual": self.max_residual, "seed": self.seed,
                "root_counts": {str(k): v for k, v in self.root_counts.items()}}


def existence_suite(draws: int = 1000, seed: int = 0, residual_tol: float = 1e-10) -> ExistenceSummary:
    rng = np.random.default_rng(seed)
    fails, worst, counts = 0, 0.0, {}
    for _ in range(draws):
        eqs = equilibria(random_params(rng))
        n = len(eqs)
        counts[n] = counts.get(n, 0) + 1
        res = max((e.residual for e in eqs), default=math.inf)
        worst = max(worst, res)
        if n == 0 or res > residual_tol:
            fails += 1
    return ExistenceSummary(draws, fails, worst, counts, seed)
