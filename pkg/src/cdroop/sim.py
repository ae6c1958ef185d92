"""Numerical integration with grid events and derived signals.

Fixed-step RK4 runs directly on the complex-form kernels, which keeps a
single trajectory cheap (Python complex scalars) and lets phase portraits
integrate many initial conditions at once (numpy arrays).  Adaptive RK45
goes through scipy.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.integrate import solve_ivp

from .equilibrium import EquilibriumPoint, equilibria
from .model import (BLOCK_NAMES, STATE_NAMES, StateVector, SystemParams, kernel,
                    to_complex, to_real)

EVENT_KEYS = {
    "grid_voltage_set": ("v_g",),
    "grid_frequency_set": ("omega_g",),
    "setpoint_change": ("p_star", "q_star", "v_star"),
}
_KEY_KIND = {k: kind for kind, keys in EVENT_KEYS.items() for k in keys}


def model_dim(model) -> int:
    return 2 if model == "offgrid" else int(model)


@dataclass(frozen=True)
class IntegratorConfig:
    t_end: float
    method: str = "rk45"          # "rk4" or "rk45"
    step: float = 1e-4            # rk4 step; output spacing for rk45
    rtol: float = 1e-8
    atol: float = 1e-10
    output_stride: int = 1
    max_norm: float = 1e6         # abort when the state leaves this ball

    def __post_init__(self):
        if self.method not in ("rk4", "rk45"):
            raise ValueError(f"unknown method {self.method!r}")
        if not self.t_end > 0:
            raise ValueError("t_end must be > 0")
        if not self.step > 0:
            raise ValueError("step must be > 0")
        if not (self.rtol > 0 and self.atol > 0):
            raise ValueError("tolerances must be > 0")
        if self.output_stride < 1:
            raise ValueError("output_stride must be >= 1")


@dataclass(frozen=True)
class Event:
    time: float
    change: Tuple[Tuple[str, float], ...]

    def __init__(self, time: float, change: Mapping[str, float]):
        items = tuple(sorted(dict(change).items()))
        if not items:
            raise ValueError("event without changes")
        kinds = set()
        for k, _ in items:
            if k not in _KEY_KIND:
                raise ValueError(f"unsupported event field {k!r}")
            kinds.add(_KEY_KIND[k])
        if len(kinds) != 1:
            raise ValueError("an event changes one kind of quantity")
        object.__setattr__(self, "time", float(time))
        object.__setattr__(self, "change", tuple((k, float(v)) for k, v in items))

    @classmethod
    def grid_voltage(cls, time, v_g):
        return cls(time, {"v_g": v_g})

    @classmethod
    def grid_frequency(cls, time, omega_g):
        return cls(time, {"omega_g": omega_g})

    @classmethod
    def setpoint(cls, time, **kw):
        return cls(time, {k: v for k, v in kw.items() if v is not None})

    @property
    def kind(self) -> str:
        return _KEY_KIND[self.change[0][0]]

    def apply(self, params: SystemParams) -> SystemParams:
        return params.with_(**dict(self.change))


class NumericalFailure(RuntimeError):
    pass


@dataclass
class Trajectory:
    model: Union[int, str]
    times: np.ndarray
    states: np.ndarray                  # (N, n) or (N, B, n) for batches
    events: tuple
    segments: tuple                     # ((t_start, params), ...)
    flag: str = "ok"                    # ok | diverged | step_underflow
    message: str = ""

    @property
    def order(self) -> int:
        return model_dim(self.model)

    @property
    def names(self):
        return STATE_NAMES[:self.order]

    @property
    def params(self) -> SystemParams:
        """Parameters in force at the end of the run."""
        return self.segments[-1][1]

    @property
    def is_batch(self) -> bool:
        return self.states.ndim == 3

    def member(self, k: int) -> "Trajectory":
        return Trajectory(self.model, self.times, self.states[:, k], self.events,
                          self.segments, self.flag, self.message)

    def segment_index(self) -> np.ndarray:
        starts = np.array([s[0] for s in self.segments])
        return np.searchsorted(starts, self.times, side="right") - 1

    def final_state(self) -> StateVector:
        return StateVector(self.order, self.states[-1])

    @cached_property
    def derived(self) -> Dict[str, np.ndarray]:
        return derived_signals(self)


def _validate(model, x0, events, config):
    n = model_dim(model)
    if model not in (2, 4, 8, 12, "offgrid"):
        raise ValueError(f"unknown model {model!r}")
    arr = x0.data if isinstance(x0, StateVector) else np.asarray(x0, dtype=float)
    if arr.shape[-1] != n:
        raise ValueError(f"initial state has {arr.shape[-1]} entries, model needs {n}")
    ev = tuple(sorted(events, key=lambda e: e.time))
    for a, b in zip(ev, ev[1:]):
        if not b.time > a.time:
            raise ValueError("event times must be strictly increasing")
    for e in ev:
        if not 0 <= e.time <= config.t_end:
            raise ValueError(f"event at t={e.time} outside [0, t_end]")
    return arr, ev


def _segments(params, events, t_end):
    segs = [(0.0, params)]
    for e in events:
        p = e.apply(segs[-1][1])
        if e.time == segs[-1][0]:
            segs[-1] = (e.time, p)
        else:
            segs.append((e.time, p))
    bounds = [s[0] for s in segs] + [t_end]
    return segs, bounds


def _rk4_blocks(F, y, h, nsteps, stride, max_norm):
    """Classical RK4 on a tuple of complex blocks; returns (samples, ok)."""
    out = []
    h2, h6 = 0.5 * h, h / 6.0
    for s in range(1, nsteps + 1):
        k1 = F(*y)
        k2 = F(*[a + h2 * b for a, b in zip(y, k1)])
        k3 = F(*[a + h2 * b for a, b in zip(y, k2)])
        k4 = F(*[a + h * b for a, b in zip(y, k3)])
        y = tuple(a + h6 * (b1 + 2 * b2 + 2 * b3 + b4)
                  for a, b1, b2, b3, b4 in zip(y, k1, k2, k3, k4))
        if s % stride == 0 or s == nsteps:
            out.append((s, y))
            if not all(np.all(np.abs(b) < max_norm) for b in y):
                return out, False
    return out, True


def _block_fn(model, params):
    f = kernel(params).by_order(model)
    if model_dim(model) == 2:
        return lambda v: (f(v),)
    return f


def integrate(model, params: SystemParams, x0, events: Sequence[Event] = (),
              config: IntegratorConfig = None) -> Trajectory:
    """Integrate the chosen model; x0 may be one state or a (B, n) batch.

    Integration restarts at every event time.  Batches use RK4 only.
    """
    config = config or IntegratorConfig(t_end=1.0)
    arr, events = _validate(model, x0, events, config)
    segs, bounds = _segments(params, events, config.t_end)
    batch = arr.ndim == 2
    if batch and config.method != "rk4":
        raise ValueError("batched integration supports method 'rk4' only")
    if config.method == "rk4":
        return _integrate_rk4(model, arr, events, segs, bounds, config, batch)
    return _integrate_rk45(model, arr, events, segs, bounds, config)


def _integrate_rk4(model, arr, events, segs, bounds, config, batch):
    xc = to_complex(arr)
    if batch:
        y = tuple(xc[:, k].copy() for k in range(xc.shape[1]))
    else:
        y = tuple(complex(c) for c in xc)
    times, samples = [0.0], [y]
    flag = "ok"
    for (t0, p), t1 in zip(segs, bounds[1:]):
        span = t1 - t0
        if span <= 0:
            continue
        n = max(1, int(math.ceil(span / config.step - 1e-9)))
        h = span / n
        with np.errstate(over="ignore", invalid="ignore"):
            out, ok = _rk4_blocks(_block_fn(model, p), y, h, n, config.output_stride,
                                  config.max_norm)
        for s, ys in out:
            times.append(t0 + s * h if s < n else t1)
            samples.append(ys)
        y = out[-1][1]
        if not ok:
            flag = "diverged"
            break
    if batch:
        states = np.stack([np.stack(s, axis=-1) for s in samples])
    else:
        states = np.array(samples, dtype=complex)
    return Trajectory(model, np.array(times), to_real(states), events, tuple(segs), flag,
                      "" if flag == "ok" else "state left the admissible ball; run stopped")


def _integrate_rk45(model, arr, events, segs, bounds, config):
    from .model import RHS
    rhs = RHS[model]
    dt_out = config.step * config.output_stride
    times, states = [0.0], [arr.astype(float)]
    x = arr.astype(float)
    flag, msg = "ok", ""
    for (t0, p), t1 in zip(segs, bounds[1:]):
        span = t1 - t0
        if span <= 0:
            continue
        n = max(1, int(math.ceil(span / dt_out - 1e-9)))
        t_eval = t0 + span * np.arange(1, n + 1) / n
        t_eval[-1] = t1

        def fun(t, s, p=p):
            return rhs(s, p)

        def blow(t, s):
            return config.max_norm - np.max(np.abs(s))
        blow.terminal = True

        sol = solve_ivp(fun, (t0, t1), x, method="RK45", t_eval=t_eval,
                        rtol=config.rtol, atol=config.atol, events=blow)
        times.extend(sol.t.tolist())
        states.extend(sol.y.T)
        if sol.status != 0 or (sol.t.size and sol.t[-1] < t1):
            flag = "diverged" if sol.status == 1 else "step_underflow"
            msg = "stiff or diverging; partial trajectory returned" if flag == "step_underflow" \
                else "state left the admissible ball; run stopped"
            break
        x = sol.y[:, -1]
    return Trajectory(model, np.array(times), np.array(states), events, tuple(segs), flag, msg)


# ---------------------------------------------------------------------------
# derived signals

def _voltage_current(model, xc, p: SystemParams):
    """Terminal voltage and line current as complex arrays."""
    m = xc.shape[-1]
    vt = xc[..., 0] if m <= 2 else xc[..., 2]
    if m == 1:
        vg = 0.0 if model == "offgrid" else p.grid.v_g
        i = p.y * (vt - vg)
    else:
        i = xc[..., 1]
    return vt, i


def derived_signals(traj: Trajectory) -> Dict[str, np.ndarray]:
    """Per-sample p, q, terminal amplitude v, and the complex frequency of vhat.

    omega is the absolute angular frequency in rad/s; eps = d(ln v)/dt of vhat.
    """
    xc = to_complex(traj.states)
    shape = xc.shape[:-1]
    out = {k: np.empty(shape) for k in ("p", "q", "v", "omega", "eps")}
    seg = traj.segment_index()
    for k, (_, p) in enumerate(traj.segments):
        sel = seg == k
        if not np.any(sel):
            continue
        x = xc[sel]
        vt, i = _voltage_current(traj.model, x, p)
        s = vt * np.conj(i)
        out["p"][sel] = s.real
        out["q"][sel] = s.imag
        out["v"][sel] = np.abs(vt)
        f = _block_fn(traj.model, p)
        with np.errstate(divide="ignore", invalid="ignore"):
            dvh = f(*[x[..., j] for j in range(x.shape[-1])])[0]
            cf = dvh / x[..., 0]
        frame = 0.0 if traj.model == "offgrid" else p.omega0 * p.grid.omega_g
        out["eps"][sel] = cf.real
        out["omega"][sel] = cf.imag + frame
    return out


@dataclass(frozen=True)
class ErrorCoordinates:
    times: np.ndarray
    y2: np.ndarray          # (N, 2)
    y3: np.ndarray          # (N, 4)
    y4: np.ndarray          # (N, 4)
    dvoc: np.ndarray        # (N, 2), vhat - v_s
    t_from: float

    def norms(self) -> Dict[str, np.ndarray]:
        return {k: np.linalg.norm(getattr(self, k), axis=-1) for k in ("y2", "y3", "y4", "dvoc")}

    def normalized(self) -> Dict[str, np.ndarray]:
        """Each norm divided by its maximum after t_from."""
        sel = self.times >= self.t_from
        out = {}
        for k, v in self.norms().items():
            peak = np.max(v[sel]) if np.any(sel) else 0.0
            out[k] = v / peak if peak > 0 else np.zeros_like(v)
        return out

    def time_to_fraction(self, frac: float = 0.1) -> Dict[str, float]:
        """Time after t_from beyond which each normalized curve stays below frac."""
        sel = self.times >= self.t_from
        t = self.times[sel]
        out = {}
        for k, v in self.normalized().items():
            above = np.nonzero(v[sel] > frac)[0]
            out[k] = float(t[above[-1]] - self.t_from) if above.size else 0.0
        return out


def error_coordinates(traj: Trajectory, params: SystemParams = None,
                      eq: EquilibriumPoint = None, t_from: float = None) -> ErrorCoordinates:
    """Error coordinates of a full-order run relative to the quasi-steady maps.

    params and eq default to the final segment's parameters and its largest
    equilibrium; t_from defaults to the last event time.
    """
    if traj.order != 12 or traj.is_batch:
        raise ValueError("error coordinates need a single full-order trajectory")
    params = params or traj.params
    eq = eq or equilibria(params)[0]
    if t_from is None:
        t_from = traj.events[-1].time if traj.events else 0.0
    xc = to_complex(traj.states)
    vh, i, v, zv, i_f, zc = (xc[:, k] for k in range(6))
    y2 = np.empty(len(traj.times), dtype=complex)
    iref = np.empty_like(y2)
    seg = traj.segment_index()
    for k, (_, p) in enumerate(traj.segments):
        sel = seg == k
        kp = kernel(p)
        y2[sel] = i[sel] - p.y * (vh[sel] - p.grid.v_g)
        iref[sel] = kp.i_f_ref(vh[sel], i[sel], v[sel], zv[sel])
    y3 = to_real(np.stack([v - vh, zv], axis=-1))
    y4 = to_real(np.stack([i_f - iref, zc], axis=-1))
    dvoc = to_real((vh - eq.v_complex)[:, None])
    return ErrorCoordinates(traj.times, to_real(y2[:, None]), y3, y4, dvoc, t_from)


@dataclass(frozen=True)
class LyapunovTrace:
    times: np.ndarray
    V: np.ndarray
    increasing: bool
    max_increase: float


def lyapunov_trace(traj: Trajectory, eq: EquilibriumPoint, rel_tol: float = 1e-9) -> LyapunovTrace:
    """V = |vhat - v_s|^2 / (2 eta) along the run; flags increases above rel_tol * max V."""
    xc = to_complex(traj.states)[..., 0]
    eta = np.array([traj.segments[k][1].ctrl.eta for k in traj.segment_index()])
    V = np.abs(xc - eq.v_complex) ** 2 / (2 * eta)
    dV = np.diff(V)
    peak = float(np.max(V)) if V.size else 0.0
    inc = float(np.max(dV)) if dV.size else 0.0
    return LyapunovTrace(traj.times, V, bool(inc > rel_tol * peak), inc)
