"""Parameter records, state layout and vector fields of the complex droop models.

Every matrix in the model has the rotation-scaled pattern [[a, -b], [b, a]],
so internally each 2-vector is handled as one complex number a + jb and each
matrix as one complex gain.  The real 2x2 forms are still exposed on the
parameter records for callers that want them.

State layout (grid synchronous frame), truncated at the model order:

    index  block   meaning
    0-1    vhat    dVOC reference voltage
    2-3    i       grid-side line current
    4-5    v       filter capacitor voltage
    6-7    zeta_v  voltage-loop resonant integrator
    8-9    i_f     filter inductor current
    10-11  zeta_c  current-loop resonant integrator

Units: electrical quantities in pu, time in s.  Inductances and the filter
capacitance are entered as pu (reactance/susceptance at nominal frequency)
and converted to s/rad by dividing by omega0 where they act as time
constants.  The droop gain eta is in rad/s.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from functools import cached_property
from typing import Sequence, Union

import numpy as np

ORDERS = (2, 4, 8, 12)

STATE_NAMES = (
    "vhat_d", "vhat_q",
    "i_d", "i_q",
    "v_d", "v_q",
    "zeta_v_d", "zeta_v_q",
    "i_f_d", "i_f_q",
    "zeta_c_d", "zeta_c_q",
)
BLOCK_NAMES = ("vhat", "i", "v", "zeta_v", "i_f", "zeta_c")

# 2x2 matrix of the imaginary unit, i.e. a +90 degree rotation
J = np.array([[0.0, -1.0], [1.0, 0.0]])


class DomainError(ValueError):
    """Raised when a quantity is evaluated outside its domain of definition."""


def as_matrix(c: complex) -> np.ndarray:
    """Real 2x2 matrix of multiplication by the complex number c."""
    return np.array([[c.real, -c.imag], [c.imag, c.real]])


def _require(cond: bool, msg: str):
    if not cond:
        raise ValueError(msg)


# ---------------------------------------------------------------------------
# parameter records

@dataclass(frozen=True)
class PerUnitBase:
    s_base: float = 2.0e6     # VA
    v_base: float = 690.0     # V, line-to-line
    f_nominal: float = 50.0   # Hz

    def __post_init__(self):
        for f in fields(self):
            _require(getattr(self, f.name) > 0, f"{f.name} must be > 0")

    @property
    def omega0(self) -> float:
        return 2.0 * math.pi * self.f_nominal


@dataclass(frozen=True)
class GridLink:
    r_g: float               # pu
    l_g: float               # pu (reactance at nominal frequency)
    v_g: float = 1.0         # pu
    omega_g: float = 1.0     # pu

    def __post_init__(self):
        _require(self.r_g >= 0, "r_g must be >= 0")
        _require(self.l_g >= 0, "l_g must be >= 0")
        _require(self.v_g >= 0, "v_g must be >= 0")
        _require(self.omega_g > 0, "omega_g must be > 0")
        _require(abs(self.z) > 0, "grid impedance must be nonzero")

    @cached_property
    def z(self) -> complex:
        return complex(self.r_g, self.omega_g * self.l_g)

    @cached_property
    def y(self) -> complex:
        return 1.0 / self.z

    @property
    def Z(self) -> np.ndarray:
        return as_matrix(self.z)

    @property
    def Y(self) -> np.ndarray:
        return as_matrix(self.y)

    @property
    def v_g_vec(self) -> np.ndarray:
        return np.array([self.v_g, 0.0])


def impedance_angle(r_g: float, l_g: float) -> float:
    """Angle of r_g + j*l_g with both entered in pu; the usual choice of phi."""
    return math.atan2(l_g, r_g)


@dataclass(frozen=True)
class ControllerParams:
    eta: float               # rad/s
    alpha: float             # pu
    phi: float               # rad
    p_star: float = 0.0      # pu
    q_star: float = 0.0      # pu
    v_star: float = 1.0      # pu

    def __post_init__(self):
        _require(self.eta > 0, "eta must be > 0")
        _require(self.alpha >= 0, "alpha must be >= 0")
        _require(self.v_star > 0, "v_star must be > 0")
        _require(-1e-12 <= self.phi <= math.pi / 2 + 1e-12,
                 "phi must lie in [0, pi/2]")

    @cached_property
    def sigma_bar_star(self) -> complex:
        """Normalized conjugate power setpoint (p* - j q*)/v*^2."""
        return complex(self.p_star, -self.q_star) / self.v_star ** 2

    @cached_property
    def rot(self) -> complex:
        return complex(math.cos(self.phi), math.sin(self.phi))

    @cached_property
    def s_phi_star(self) -> complex:
        """sigma_phi* + j rho_phi*."""
        return self.rot * self.sigma_bar_star

    @property
    def S_phi_star(self) -> np.ndarray:
        return as_matrix(self.s_phi_star)

    @property
    def R_phi(self) -> np.ndarray:
        return as_matrix(self.rot)


@dataclass(frozen=True)
class FilterAndLoops:
    # defaults are the filter and inner-loop values shared by all case studies
    r_f: float = 0.05 / 30   # pu
    l_f: float = 0.05        # pu
    g_f: float = 0.05 / 30   # pu
    c_f: float = 0.05        # pu
    k_pv: float = 1.0
    k_rv: float = 10.0
    k_pc: float = 2.0
    k_rc: float = 20.0

    def __post_init__(self):
        _require(self.r_f >= 0 and self.g_f >= 0, "r_f, g_f must be >= 0")
        _require(self.l_f > 0 and self.c_f > 0, "l_f, c_f must be > 0")
        for name in ("k_pv", "k_rv", "k_pc", "k_rc"):
            _require(getattr(self, name) > 0, f"{name} must be > 0")


_SECTIONS = ("base", "grid", "ctrl", "filt")


@dataclass(frozen=True)
class SystemParams:
    grid: GridLink
    ctrl: ControllerParams
    filt: FilterAndLoops = field(default_factory=FilterAndLoops)
    base: PerUnitBase = field(default_factory=PerUnitBase)

    def with_(self, **changes) -> "SystemParams":
        """Copy with leaf fields replaced, e.g. p.with_(v_g=0.5, eta=10.0)."""
        parts = {s: {} for s in _SECTIONS}
        for key, val in changes.items():
            for s in _SECTIONS:
                if key in {f.name for f in fields(getattr(self, s))}:
                    parts[s][key] = val
                    break
            else:
                raise KeyError(f"unknown parameter {key!r}")
        return SystemParams(**{s: replace(getattr(self, s), **parts[s]) if parts[s]
                               else getattr(self, s) for s in _SECTIONS})

    # frequencies
    @cached_property
    def omega0(self) -> float:
        return self.base.omega0

    @cached_property
    def omega_delta(self) -> float:
        """omega0 - omega_g in rad/s."""
        return self.omega0 * (1.0 - self.grid.omega_g)

    # time constants in s/rad
    @cached_property
    def l_g_s(self) -> float:
        return self.grid.l_g / self.omega0

    @cached_property
    def l_f_s(self) -> float:
        return self.filt.l_f / self.omega0

    @cached_property
    def c_f_s(self) -> float:
        return self.filt.c_f / self.omega0

    # complex gains
    @cached_property
    def z(self) -> complex:
        return self.grid.z

    @cached_property
    def y(self) -> complex:
        return self.grid.y

    @cached_property
    def y_phi(self) -> complex:
        return self.ctrl.rot * self.y

    @cached_property
    def s_phi_star(self) -> complex:
        return self.ctrl.s_phi_star

    @cached_property
    def z_f(self) -> complex:
        return complex(self.filt.r_f, self.grid.omega_g * self.filt.l_f)

    @cached_property
    def y_f(self) -> complex:
        return complex(self.filt.g_f, self.grid.omega_g * self.filt.c_f)

    @cached_property
    def phi_tilde(self) -> float:
        """Angle of z minus phi."""
        return math.atan2(self.z.imag, self.z.real) - self.ctrl.phi

    # matrix views
    @property
    def Y_phi(self) -> np.ndarray:
        return as_matrix(self.y_phi)

    @property
    def Z_f(self) -> np.ndarray:
        return as_matrix(self.z_f)

    @property
    def Y_f(self) -> np.ndarray:
        return as_matrix(self.y_f)


# ---------------------------------------------------------------------------
# state vectors

@dataclass(frozen=True)
class StateVector:
    order: int
    data: np.ndarray

    def __post_init__(self):
        _require(self.order in ORDERS, f"order must be one of {ORDERS}")
        arr = np.asarray(self.data, dtype=float).reshape(-1)
        _require(arr.size == self.order,
                 f"state of order {self.order} needs {self.order} entries, got {arr.size}")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @classmethod
    def from_blocks(cls, *blocks: complex) -> "StateVector":
        return cls(2 * len(blocks), to_real(np.array(blocks, dtype=complex)))

    def blocks(self) -> np.ndarray:
        """State as complex blocks (vhat, i, v, zeta_v, i_f, zeta_c)[:order/2]."""
        return to_complex(self.data)

    def block(self, name: str):
        k = BLOCK_NAMES.index(name)
        if 2 * k >= self.order:
            return None
        return self.data[2 * k:2 * k + 2]

    @property
    def names(self) -> tuple:
        return STATE_NAMES[:self.order]

    def __len__(self):
        return self.order


def to_complex(x) -> np.ndarray:
    """(..., 2m) real array -> (..., m) complex array."""
    x = np.asarray(x, dtype=float)
    return x[..., 0::2] + 1j * x[..., 1::2]


def to_real(c) -> np.ndarray:
    """(..., m) complex array -> (..., 2m) real array (d, q interleaved)."""
    c = np.asarray(c, dtype=complex)
    out = np.empty(c.shape[:-1] + (2 * c.shape[-1],))
    out[..., 0::2] = c.real
    out[..., 1::2] = c.imag
    return out


def _state_array(state, order: int) -> np.ndarray:
    if isinstance(state, StateVector):
        _require(state.order == order, f"expected order {order}, got {state.order}")
        return state.data
    arr = np.asarray(state, dtype=float)
    _require(arr.shape[-1] == order, f"expected last dimension {order}, got {arr.shape}")
    return arr


# ---------------------------------------------------------------------------
# polar and power quantities

def normalized_power(p: float, q: float, v: float):
    """(rho, sigma) = (p, q)/v^2."""
    if not v > 0:
        raise DomainError("voltage collapse: normalized power undefined")
    return p / v ** 2, q / v ** 2


def rotated_power(p: float, q: float, phi: float):
    """(p_phi, q_phi) with p_phi + j q_phi = exp(j(pi/2 - phi)) (p + j q)."""
    w = complex(math.sin(phi), math.cos(phi)) * complex(p, q)
    return w.real, w.imag


@dataclass(frozen=True)
class PolarSignals:
    v: float
    theta: float
    complex_frequency: complex = complex("nan")   # eps + j omega

    @classmethod
    def from_rectangular(cls, vec, vec_dot=None) -> "PolarSignals":
        vc = complex(vec[0], vec[1])
        if not abs(vc) > 0:
            raise DomainError("voltage collapse: polar form undefined at v = 0")
        cf = complex("nan") if vec_dot is None else complex(vec_dot[0], vec_dot[1]) / vc
        return cls(abs(vc), math.atan2(vc.imag, vc.real), cf)

    @property
    def u(self) -> float:
        return math.log(self.v)

    @property
    def complex_angle(self) -> complex:
        return complex(self.u, self.theta)

    @property
    def eps(self) -> float:
        return self.complex_frequency.real

    @property
    def omega(self) -> float:
        return self.complex_frequency.imag

    def rectangular(self) -> np.ndarray:
        c = np.exp(self.complex_angle)
        return np.array([c.real, c.imag])


# ---------------------------------------------------------------------------
# complex-form kernels; arguments may be Python complex scalars or numpy arrays

class Kernel:
    """Constants of the vector fields pre-evaluated as complex gains."""

    def __init__(self, p: SystemParams):
        c = p.ctrl
        self.eta = c.eta
        self.alpha = c.alpha
        self.inv_vs2 = 1.0 / c.v_star ** 2
        self.rot = c.rot
        self.s_phi = p.s_phi_star
        self.y_phi = p.y_phi
        self.jwd = 1j * p.omega_delta
        self.jw0 = 1j * p.omega0
        self.z = p.z
        self.y = p.y
        self.vg = complex(p.grid.v_g)
        self.lg = p.l_g_s
        self.lf = p.l_f_s
        self.cf = p.c_f_s
        self.yf = p.y_f
        self.kpv = p.filt.k_pv
        self.krv = p.filt.k_rv
        self.kpc = p.filt.k_pc
        self.krc = p.filt.k_rc
        # second-order linear part and forcing
        self.a2 = self.jwd + self.eta * (self.s_phi - self.y_phi)
        self.b2 = self.eta * self.y_phi * self.vg

    def shape(self, v):
        """eta*alpha*(1 - |v|^2/v*^2)."""
        return self.eta * self.alpha * (1.0 - (v.real * v.real + v.imag * v.imag) * self.inv_vs2)

    def dvoc(self, vh, i):
        return (self.jwd + self.eta * self.s_phi + self.shape(vh)) * vh - self.eta * self.rot * i

    def f2(self, v):
        return (self.a2 + self.shape(v)) * v + self.b2

    def f4(self, vh, i):
        return self.dvoc(vh, i), (-self.z * i + vh - self.vg) / self.lg

    def f8(self, vh, i, v, zv):
        dvh = self.dvoc(vh, i)
        di = (-self.z * i + v - self.vg) / self.lg
        e = v - vh
        dv = (-self.kpv * e - self.krv * zv) / self.cf
        dzv = self.jwd * zv + e
        return dvh, di, dv, dzv

    def i_f_ref(self, vh, i, v, zv):
        return -self.kpv * (v - vh) - self.krv * zv + self.yf * v + i

    def f12(self, vh, i, v, zv, i_f, zc):
        dvh = self.dvoc(vh, i)
        di = (-self.z * i + v - self.vg) / self.lg
        dv = (-self.yf * v - i + i_f) / self.cf
        dzv = self.jwd * zv + v - vh
        e = i_f - self.i_f_ref(vh, i, v, zv)
        dif = (-self.kpc * e - self.krc * zc) / self.lf
        dzc = self.jwd * zc + e
        return dvh, di, dv, dzv, dif, dzc

    def off_grid(self, v):
        # stationary frame: omega0 replaces omega_delta, v_g = 0
        return (self.jw0 + self.eta * (self.s_phi - self.y_phi) + self.shape(v)) * v

    def by_order(self, order):
        return {2: self.f2, 4: self.f4, 8: self.f8, 12: self.f12,
                "offgrid": self.off_grid}[order]


def kernel(params: SystemParams) -> Kernel:
    k = params.__dict__.get("_kernel")
    if k is None:
        k = Kernel(params)
        object.__setattr__(params, "_kernel", k)
    return k


def _apply(order, state, params, key=None):
    n = 2 if order == "offgrid" else order
    x = _state_array(state, n)
    xc = to_complex(x)
    f = kernel(params).by_order(order)
    out = f(*[xc[..., k] for k in range(n // 2)])
    if n == 2:
        out = (out,)
    return to_real(np.stack(np.broadcast_arrays(*out), axis=-1))


def rhs_second_order(state, params: SystemParams) -> np.ndarray:
    """Reduced second-order dVOC model (voltage only, quasi-static line)."""
    return _apply(2, state, params)


def rhs_fourth_order(state, params: SystemParams) -> np.ndarray:
    """dVOC plus dynamic line current; the line is driven by vhat."""
    return _apply(4, state, params)


def rhs_eighth_order(state, params: SystemParams) -> np.ndarray:
    """Adds filter capacitor and voltage loop with i_f = i_f* substituted."""
    return _apply(8, state, params)


def rhs_full_order(state, params: SystemParams) -> np.ndarray:
    """Twelfth-order model with voltage and current loops."""
    return _apply(12, state, params)


def rhs_off_grid(state, params: SystemParams) -> np.ndarray:
    """Second-order model with v_g = 0 in the stationary frame."""
    return _apply("offgrid", state, params)


RHS = {2: rhs_second_order, 4: rhs_fourth_order, 8: rhs_eighth_order,
       12: rhs_full_order, "offgrid": rhs_off_grid}


def current_reference(state, params: SystemParams) -> np.ndarray:
    """Algebraic inner current reference i_f* for an order >= 8 state."""
    x = to_complex(np.asarray(state.data if isinstance(state, StateVector) else state))
    ref = kernel(params).i_f_ref(x[..., 0], x[..., 1], x[..., 2], x[..., 3])
    return to_real(np.asarray(ref)[..., None])


def rhs_polar(v: float, theta: float, params: SystemParams):
    """Second-order model in polar coordinates: returns (dv/dt, dtheta/dt).

    Uses the rotated normalized power of the quasi-static line current.
    """
    if not v > 0:
        raise DomainError("voltage collapse: polar form undefined at v = 0")
    c = params.ctrl
    vc = v * complex(math.cos(theta), math.sin(theta))
    i = params.y * (vc - params.grid.v_g)
    sig = c.rot * i / vc                 # sigma_phi + j rho_phi
    sstar = c.s_phi_star
    eps = c.eta * (sstar.real - sig.real) + c.eta * c.alpha * (c.v_star ** 2 - v * v) / c.v_star ** 2
    omega = params.omega_delta + c.eta * (sstar.imag - sig.imag)
    return v * eps, omega


def jacobian_second_order(params: SystemParams, v_vec) -> np.ndarray:
    """Analytic 2x2 Jacobian of the second-order field at v_vec."""
    k = kernel(params)
    vd, vq = float(v_vec[0]), float(v_vec[1])
    ea = k.eta * k.alpha
    A = as_matrix(k.a2 + k.shape(complex(vd, vq)))
    A -= 2.0 * ea * k.inv_vs2 * np.array([[vd * vd, vd * vq], [vd * vq, vq * vq]])
    return A


def steady_state_current(params: SystemParams, v_vec) -> np.ndarray:
    """Quasi-static line current Y (v - v_g)."""
    vc = complex(v_vec[0], v_vec[1])
    i = params.y * (vc - params.grid.v_g)
    return np.array([i.real, i.imag])
