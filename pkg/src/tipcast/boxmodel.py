"""Four-box (Atlantic-only) and six-box (Atlantic+Pacific) overturning models.

Flux-form budgets: hydraulic overturning m_n = C * (rho_north - rho_low) * D^2
(signed; negative means reversed circulation), diffusive upwelling
m_u = k_v * A / D, southern residual m_s = m_ek - a_gm * D, and upwind salt
transport on every volume edge, so total salt content telescopes exactly.
Freshwater forcing enters as virtual salt fluxes (+/- F_w * S_ref pairs) with
additive white noise on each flux baseline.  Prognostic variables are salt
contents, temperatures, and pycnocline depths; low-latitude volumes follow the
pycnocline, and the deep box absorbs all volume imbalance so the total volume
is constant by construction.

Integration is forward Euler at a fixed step, except that the stiff surface
temperature restoring (tau of order 30 days versus a quarter-year step) is
integrated exactly within each step; plain Euler would be unstable at
dt/tau > 2.

Simulation of one trajectory is single-threaded and a pure function of
(params, noise); it is safe to call from many workers concurrently.
"""

from __future__ import annotations

import importlib.resources
import json
import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import rng as _rng

try:
    from . import _boxstep_kernel

    ENGINE = "cython"
except ImportError:  # pragma: no cover - depends on build environment
    _boxstep_kernel = None
    ENGINE = "numpy"

__all__ = [
    "ENGINE",
    "YEAR_SECONDS",
    "DT_YEARS",
    "SimulationFault",
    "BoxParams",
    "BoxState",
    "NoiseSeq",
    "FluxSet",
    "Trajectory",
    "density",
    "compute_fluxes",
    "tendencies",
    "euler_step",
    "simulate",
    "detect_collapse",
    "initial_state",
    "default_params",
    "load_defaults",
    "params_from_overrides",
    "statics_names",
    "statics_vector",
]

YEAR_SECONDS = 31557600.0  # Julian year
DT_YEARS = 0.25

FOURBOX = "four-box"
SIXBOX = "six-box"

FOURBOX_BOXES = ["north", "low", "south", "deep"]
SIXBOX_BOXES = ["n_atl", "n_pac", "low_atl", "low_pac", "south", "deep"]

FOURBOX_FLUXES = ["north", "south"]
SIXBOX_FLUXES = ["south", "north_atlantic", "north_pacific", "interbasin"]

FOURBOX_CHANNELS = [
    "m_n",
    "m_u",
    "m_eddy",
    "m_s_residual",
    "d_pyc",
    "t_north",
    "t_low",
    "t_south",
    "s_north",
    "s_low",
    "s_south",
]
SIXBOX_CHANNELS = (
    ["m_n_atl", "m_n_pac", "m_u_atl", "m_u_pac", "m_eddy", "m_s_residual", "m_ib",
     "d_pyc_atl", "d_pyc_pac"]
    + [f"t_{b}" for b in SIXBOX_BOXES]
    + [f"s_{b}" for b in SIXBOX_BOXES]
)


class SimulationFault(RuntimeError):
    """A step produced a non-finite value or violated box-state invariants."""

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message)
        self.step = step


def _frozen_array(values, n=None) -> np.ndarray:
    arr = np.array(values, dtype=np.float64)
    if n is not None and arr.shape != (n,):
        raise ValueError(f"expected {n} entries, got shape {arr.shape}")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class BoxParams:
    """Static covariates: flux baselines, mixing constants, geometry, ICs.

    Units are SI throughout (m^3/s fluxes, m^2/s diffusivities, m depths,
    psu salinities, degC temperatures, seconds for tau_relax).
    """

    n_basins: int
    fw_base: np.ndarray      # per flux, order FOURBOX_FLUXES / SIXBOX_FLUXES
    m_ek: float
    a_gm_coeff: float        # eddy return per meter of pycnocline (L_x/L_y folded in)
    k_v: float
    c_hydraulic: np.ndarray  # per basin, m^4 s^-1 kg^-1
    area_low: np.ndarray     # per basin, m^2
    basin_frac: np.ndarray   # Ekman split per basin, sums to 1
    volumes: np.ndarray      # fixed volumes: high-lat boxes then southern box
    v_total: float
    t_target: np.ndarray     # per surface box
    tau_relax: float         # seconds
    alpha: float
    beta: float
    rho0: float
    s_ref: float
    t_ref: float
    d_init: np.ndarray       # per basin
    s_init: np.ndarray       # per box
    t_init: np.ndarray       # per box
    m_ib: float = 0.0        # prescribed inter-basin exchange (six-box)

    def __post_init__(self):
        if self.n_basins not in (1, 2):
            raise ValueError("n_basins must be 1 (four-box) or 2 (six-box)")
        n_flux = 2 if self.n_basins == 1 else 4
        n_box = 4 if self.n_basins == 1 else 6
        n_surface = n_box - 1
        object.__setattr__(self, "fw_base", _frozen_array(self.fw_base, n_flux))
        object.__setattr__(self, "c_hydraulic", _frozen_array(self.c_hydraulic, self.n_basins))
        object.__setattr__(self, "area_low", _frozen_array(self.area_low, self.n_basins))
        object.__setattr__(self, "basin_frac", _frozen_array(self.basin_frac, self.n_basins))
        object.__setattr__(self, "volumes", _frozen_array(self.volumes, self.n_basins + 1))
        object.__setattr__(self, "t_target", _frozen_array(self.t_target, n_surface))
        object.__setattr__(self, "d_init", _frozen_array(self.d_init, self.n_basins))
        object.__setattr__(self, "s_init", _frozen_array(self.s_init, n_box))
        object.__setattr__(self, "t_init", _frozen_array(self.t_init, n_box))
        if not (self.area_low > 0).all() or not (self.volumes > 0).all() or self.v_total <= 0:
            raise ValueError("areas and volumes must be strictly positive")
        if self.k_v <= 0:
            raise ValueError("k_v must be strictly positive")
        if not ((self.d_init > 0) & (self.d_init < 4000)).all():
            raise ValueError("d_init must lie in (0, 4000) m")
        if not ((self.basin_frac > 0) & (self.basin_frac < 1)).all() and self.n_basins > 1:
            raise ValueError("basin_frac entries must lie in (0, 1)")
        if abs(self.basin_frac.sum() - 1.0) > 1e-12:
            raise ValueError("basin_frac must sum to 1 within 1e-12")

    @property
    def variant(self) -> str:
        return FOURBOX if self.n_basins == 1 else SIXBOX

    @property
    def flux_names(self) -> list[str]:
        return FOURBOX_FLUXES if self.n_basins == 1 else SIXBOX_FLUXES

    @property
    def box_names(self) -> list[str]:
        return FOURBOX_BOXES if self.n_basins == 1 else SIXBOX_BOXES

    @property
    def channel_names(self) -> list[str]:
        return FOURBOX_CHANNELS if self.n_basins == 1 else SIXBOX_CHANNELS

    @property
    def n_fluxes(self) -> int:
        return len(self.flux_names)

    @property
    def n_channels(self) -> int:
        return len(self.channel_names)

    def box_volumes(self, d_pyc: np.ndarray) -> np.ndarray:
        """Current volumes in box order; low-latitude boxes follow d_pyc."""
        d_pyc = np.asarray(d_pyc, dtype=np.float64)
        if self.n_basins == 1:
            v_low = self.area_low[0] * d_pyc[0]
            v_deep = self.v_total - self.volumes[0] - self.volumes[1] - v_low
            return np.array([self.volumes[0], v_low, self.volumes[1], v_deep])
        v_la = self.area_low[0] * d_pyc[0]
        v_lp = self.area_low[1] * d_pyc[1]
        v_deep = self.v_total - self.volumes.sum() - v_la - v_lp
        return np.array([self.volumes[0], self.volumes[1], v_la, v_lp, self.volumes[2], v_deep])


@dataclass
class BoxState:
    """Prognostic salt contents (psu m^3), temperatures, pycnocline depths."""

    q_salt: np.ndarray
    t_box: np.ndarray
    d_pyc: np.ndarray
    time: float = 0.0

    def copy(self) -> "BoxState":
        return BoxState(self.q_salt.copy(), self.t_box.copy(), self.d_pyc.copy(), self.time)

    def salinities(self, params: BoxParams) -> np.ndarray:
        return self.q_salt / params.box_volumes(self.d_pyc)


@dataclass(frozen=True)
class NoiseSeq:
    """White-noise perturbation matrix, reproducible from (seed, sigma, shape).

    Column j is drawn from an independent counter-based stream (one stream per
    flux); see :mod:`tipcast.rng` for the splitting scheme.
    """

    seed: int
    sigma: float
    values: np.ndarray  # [n_steps x n_fluxes]

    @classmethod
    def generate(cls, seed: int, sigma: float, n_steps: int, n_fluxes: int) -> "NoiseSeq":
        values = np.empty((n_steps, n_fluxes))
        for j in range(n_fluxes):
            values[:, j] = _rng.flux_stream(seed, j).normal(0.0, 1.0, n_steps) * sigma
        values.flags.writeable = False
        return cls(seed=int(seed), sigma=float(sigma), values=values)

    @classmethod
    def zeros(cls, n_steps: int, n_fluxes: int) -> "NoiseSeq":
        values = np.zeros((n_steps, n_fluxes))
        values.flags.writeable = False
        return cls(seed=0, sigma=0.0, values=values)


@dataclass
class FluxSet:
    """Diagnostic volume transports in m^3/s (m_n signed, per basin)."""

    m_n: np.ndarray
    m_u: np.ndarray
    m_eddy: float
    m_s_residual: float
    m_ib_effective: float


@dataclass
class Trajectory:
    """Simulated channel matrix plus forcing, parameters, collapse annotations."""

    dt_years: float
    channels: np.ndarray  # [n_steps x n_channels], row i at time i*dt
    noise: NoiseSeq
    params: BoxParams
    collapse_time_atlantic: Optional[float] = None
    collapse_time_pacific: Optional[float] = None
    final_state: Optional[BoxState] = None
    source: str = "simulator"

    @property
    def n_steps(self) -> int:
        return self.channels.shape[0]

    @property
    def channel_names(self) -> list[str]:
        return self.params.channel_names


# ---------------------------------------------------------------------------
# core physics


def density(t, s, params: BoxParams):
    """Linear equation of state rho0 * (1 - alpha*(t - t_ref) + beta*(s - s_ref))."""
    return params.rho0 * (1.0 - params.alpha * (np.asarray(t) - params.t_ref)
                          + params.beta * (np.asarray(s) - params.s_ref))


def _pack_fourbox(p: BoxParams) -> np.ndarray:
    return np.array([
        p.c_hydraulic[0], p.area_low[0], p.k_v, p.a_gm_coeff, p.m_ek,
        p.fw_base[0], p.fw_base[1],
        p.volumes[0], p.volumes[1], p.v_total,
        p.alpha, p.beta, p.rho0, p.t_ref, p.s_ref,
        p.t_target[0], p.t_target[1], p.t_target[2],
    ])


def _pack_sixbox(p: BoxParams) -> np.ndarray:
    return np.array([
        p.c_hydraulic[0], p.c_hydraulic[1], p.area_low[0], p.area_low[1],
        p.k_v, p.a_gm_coeff, p.m_ek,
        p.basin_frac[0], p.basin_frac[1],
        p.fw_base[0], p.fw_base[1], p.fw_base[2], p.fw_base[3],
        p.m_ib,
        p.volumes[0], p.volumes[1], p.volumes[2], p.v_total,
        p.alpha, p.beta, p.rho0, p.t_ref, p.s_ref,
        p.t_target[0], p.t_target[1], p.t_target[2], p.t_target[3], p.t_target[4],
    ])


def compute_fluxes(state: BoxState, params: BoxParams) -> FluxSet:
    """Volume transports from the current state; faults on d_pyc <= 0."""
    if (state.d_pyc <= 0).any():
        raise SimulationFault(f"pycnocline depth must be positive, got {state.d_pyc}")
    s = state.salinities(params)
    t = state.t_box
    if params.n_basins == 1:
        rho_n = density(t[0], s[0], params)
        rho_l = density(t[1], s[1], params)
        d = state.d_pyc[0]
        m_n = params.c_hydraulic[0] * (rho_n - rho_l) * d * d
        m_u = params.k_v * params.area_low[0] / d
        m_eddy = params.a_gm_coeff * d
        return FluxSet(np.array([m_n]), np.array([m_u]), float(m_eddy),
                       float(params.m_ek - m_eddy), 0.0)
    rho_na = density(t[0], s[0], params)
    rho_np = density(t[1], s[1], params)
    rho_la = density(t[2], s[2], params)
    rho_lp = density(t[3], s[3], params)
    d_a, d_p = state.d_pyc
    m_n_a = params.c_hydraulic[0] * (rho_na - rho_la) * d_a * d_a
    m_n_p = params.c_hydraulic[1] * (rho_np - rho_lp) * d_p * d_p
    m_u_a = params.k_v * params.area_low[0] / d_a
    m_u_p = params.k_v * params.area_low[1] / d_p
    dbar = (params.area_low[0] * d_a + params.area_low[1] * d_p) / params.area_low.sum()
    m_eddy = params.a_gm_coeff * dbar
    return FluxSet(np.array([m_n_a, m_n_p]), np.array([m_u_a, m_u_p]), float(m_eddy),
                   float(params.m_ek - m_eddy), float(params.m_ib))


def _up(flux: float, s_src: float, s_dst: float) -> float:
    return flux * (s_src if flux >= 0.0 else s_dst)


def _rates_fourbox(q, t, d, p: BoxParams, xi):
    """Per-second budgets; temperature part is advective only (no restoring)."""
    area = p.area_low[0]
    v_n, v_s = p.volumes
    v_l = area * d[0]
    v_d = p.v_total - v_n - v_s - v_l
    s_n, s_l, s_s, s_d = q[0] / v_n, q[1] / v_l, q[2] / v_s, q[3] / v_d

    rho_n = p.rho0 * (1.0 - p.alpha * (t[0] - p.t_ref) + p.beta * (s_n - p.s_ref))
    rho_l = p.rho0 * (1.0 - p.alpha * (t[1] - p.t_ref) + p.beta * (s_l - p.s_ref))
    m_n = p.c_hydraulic[0] * (rho_n - rho_l) * d[0] * d[0]
    m_u = p.k_v * area / d[0]
    m_eddy = p.a_gm_coeff * d[0]
    m_s = p.m_ek - m_eddy

    fw_n = p.fw_base[0] + xi[0]
    fw_s = p.fw_base[1] + xi[1]

    t1 = _up(m_n, s_l, s_n)
    t2 = _up(m_n, s_n, s_d)
    t3 = m_u * s_d
    t4 = _up(m_s, s_d, s_s)
    t5 = _up(m_s, s_s, s_l)

    dq = np.array([
        t1 - t2 - fw_n * p.s_ref,
        t3 + t5 - t1 + (fw_n + fw_s) * p.s_ref,
        t4 - t5 - fw_s * p.s_ref,
        t2 - t3 - t4,
    ])
    dd = np.array([(m_u + m_s - m_n) / area])

    at_n = (m_n * (t[1] - t[0]) if m_n >= 0.0 else -m_n * (t[3] - t[0])) / v_n
    at_l = m_u * (t[3] - t[1]) / v_l
    if m_s >= 0.0:
        at_l += m_s * (t[2] - t[1]) / v_l
    if m_n < 0.0:
        at_l += -m_n * (t[0] - t[1]) / v_l
    at_s = (m_s * (t[3] - t[2]) if m_s >= 0.0 else -m_s * (t[1] - t[2])) / v_s
    at_d = 0.0
    if m_n >= 0.0:
        at_d += m_n * (t[0] - t[3]) / v_d
    if m_s < 0.0:
        at_d += -m_s * (t[2] - t[3]) / v_d
    at = np.array([at_n, at_l, at_s, at_d])

    diag = (m_n, m_u, m_eddy, m_s, np.array([s_n, s_l, s_s, s_d]))
    return dq, at, dd, diag


def _rates_sixbox(q, t, d, p: BoxParams, xi):
    area_a, area_p = p.area_low
    frac_a, frac_p = p.basin_frac
    v_na, v_np, v_s = p.volumes
    v_la = area_a * d[0]
    v_lp = area_p * d[1]
    v_d = p.v_total - v_na - v_np - v_s - v_la - v_lp
    s_na, s_np, s_la, s_lp, s_so, s_d = (
        q[0] / v_na, q[1] / v_np, q[2] / v_la, q[3] / v_lp, q[4] / v_s, q[5] / v_d)

    rho_na = p.rho0 * (1.0 - p.alpha * (t[0] - p.t_ref) + p.beta * (s_na - p.s_ref))
    rho_np = p.rho0 * (1.0 - p.alpha * (t[1] - p.t_ref) + p.beta * (s_np - p.s_ref))
    rho_la = p.rho0 * (1.0 - p.alpha * (t[2] - p.t_ref) + p.beta * (s_la - p.s_ref))
    rho_lp = p.rho0 * (1.0 - p.alpha * (t[3] - p.t_ref) + p.beta * (s_lp - p.s_ref))
    m_n_a = p.c_hydraulic[0] * (rho_na - rho_la) * d[0] * d[0]
    m_n_p = p.c_hydraulic[1] * (rho_np - rho_lp) * d[1] * d[1]
    m_u_a = p.k_v * area_a / d[0]
    m_u_p = p.k_v * area_p / d[1]
    dbar = (area_a * d[0] + area_p * d[1]) / (area_a + area_p)
    m_eddy = p.a_gm_coeff * dbar
    m_s = p.m_ek - m_eddy
    m_ib = p.m_ib

    fw_so = p.fw_base[0] + xi[0]
    fw_na = p.fw_base[1] + xi[1]
    fw_np_ = p.fw_base[2] + xi[2]
    fw_ib = p.fw_base[3] + xi[3]

    t1a = _up(m_n_a, s_la, s_na)
    t2a = _up(m_n_a, s_na, s_d)
    t1p = _up(m_n_p, s_lp, s_np)
    t2p = _up(m_n_p, s_np, s_d)
    t3a = m_u_a * s_d
    t3p = m_u_p * s_d
    t4 = _up(m_s, s_d, s_so)
    t5a = _up(frac_a * m_s, s_so, s_la)
    t5p = _up(frac_p * m_s, s_so, s_lp)
    t6 = _up(m_ib, s_lp, s_la)

    dq = np.array([
        t1a - t2a - fw_na * p.s_ref,
        t1p - t2p - fw_np_ * p.s_ref,
        t3a + t5a + t6 - t1a + (fw_na + frac_a * fw_so + fw_ib) * p.s_ref,
        t3p + t5p - t6 - t1p + (fw_np_ + frac_p * fw_so - fw_ib) * p.s_ref,
        t4 - t5a - t5p - fw_so * p.s_ref,
        t2a + t2p - t3a - t3p - t4,
    ])
    dd = np.array([
        (m_u_a + frac_a * m_s + m_ib - m_n_a) / area_a,
        (m_u_p + frac_p * m_s - m_ib - m_n_p) / area_p,
    ])

    at_na = (m_n_a * (t[2] - t[0]) if m_n_a >= 0.0 else -m_n_a * (t[5] - t[0])) / v_na
    at_np = (m_n_p * (t[3] - t[1]) if m_n_p >= 0.0 else -m_n_p * (t[5] - t[1])) / v_np
    at_la = m_u_a * (t[5] - t[2]) / v_la
    if m_s >= 0.0:
        at_la += frac_a * m_s * (t[4] - t[2]) / v_la
    if m_ib >= 0.0:
        at_la += m_ib * (t[3] - t[2]) / v_la
    if m_n_a < 0.0:
        at_la += -m_n_a * (t[0] - t[2]) / v_la
    at_lp = m_u_p * (t[5] - t[3]) / v_lp
    if m_s >= 0.0:
        at_lp += frac_p * m_s * (t[4] - t[3]) / v_lp
    if m_ib < 0.0:
        at_lp += -m_ib * (t[2] - t[3]) / v_lp
    if m_n_p < 0.0:
        at_lp += -m_n_p * (t[1] - t[3]) / v_lp
    if m_s >= 0.0:
        at_s = m_s * (t[5] - t[4]) / v_s
    else:
        at_s = -m_s * (frac_a * (t[2] - t[4]) + frac_p * (t[3] - t[4])) / v_s
    at_d = 0.0
    if m_n_a >= 0.0:
        at_d += m_n_a * (t[0] - t[5]) / v_d
    if m_n_p >= 0.0:
        at_d += m_n_p * (t[1] - t[5]) / v_d
    if m_s < 0.0:
        at_d += -m_s * (t[4] - t[5]) / v_d
    at = np.array([at_na, at_np, at_la, at_lp, at_s, at_d])

    diag = (m_n_a, m_n_p, m_u_a, m_u_p, m_eddy, m_s,
            np.array([s_na, s_np, s_la, s_lp, s_so, s_d]))
    return dq, at, dd, diag


def tendencies(state: BoxState, params: BoxParams, noise_row) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Full right-hand side (dq/dt, dT/dt, dD/dt) including restoring, per second."""
    xi = np.asarray(noise_row, dtype=np.float64)
    if xi.shape != (params.n_fluxes,):
        raise ValueError(f"noise row must have {params.n_fluxes} entries, got {xi.shape}")
    if params.n_basins == 1:
        dq, at, dd, _ = _rates_fourbox(state.q_salt, state.t_box, state.d_pyc, params, xi)
    else:
        dq, at, dd, _ = _rates_sixbox(state.q_salt, state.t_box, state.d_pyc, params, xi)
    dt_temp = at.copy()
    n_surface = len(params.t_target)
    dt_temp[:n_surface] += (params.t_target - state.t_box[:n_surface]) / params.tau_relax
    out = np.concatenate([dq, dt_temp, dd])
    if not np.isfinite(out).all():
        raise SimulationFault("non-finite tendency")
    return dq, dt_temp, dd


def _validate_state(state: BoxState, params: BoxParams, step: int | None = None) -> None:
    d = state.d_pyc
    if not np.isfinite(d).all() or (d <= 0).any() or (d >= 4000).any():
        raise SimulationFault(f"pycnocline depth out of (0, 4000) m: {d}", step)
    vols = params.box_volumes(d)
    if (vols <= 0).any():
        raise SimulationFault(f"non-positive box volume: {vols}", step)
    s = state.q_salt / vols
    if not np.isfinite(s).all() or (s <= 0).any() or (s >= 60).any():
        raise SimulationFault(f"salinity out of (0, 60) psu: {s}", step)
    if not np.isfinite(state.t_box).all():
        raise SimulationFault("non-finite temperature", step)


def euler_step(state: BoxState, params: BoxParams, noise_row, dt_years: float = DT_YEARS) -> BoxState:
    """One forward-Euler step; restoring integrated exactly (stiff sub-term)."""
    if dt_years < 0:
        raise ValueError("dt must be non-negative")
    xi = np.asarray(noise_row, dtype=np.float64)
    if params.n_basins == 1:
        dq, at, dd, _ = _rates_fourbox(state.q_salt, state.t_box, state.d_pyc, params, xi)
    else:
        dq, at, dd, _ = _rates_sixbox(state.q_salt, state.t_box, state.d_pyc, params, xi)
    dt_s = dt_years * YEAR_SECONDS
    decay = math.exp(-dt_s / params.tau_relax)
    q_new = state.q_salt + dt_s * dq
    d_new = state.d_pyc + dt_s * dd
    t_adv = state.t_box + dt_s * at
    t_new = t_adv.copy()
    n_surface = len(params.t_target)
    t_new[:n_surface] = params.t_target + (t_adv[:n_surface] - params.t_target) * decay
    out = BoxState(q_new, t_new, d_new, state.time + dt_years)
    _validate_state(out, params)
    return out


def initial_state(params: BoxParams) -> BoxState:
    q = params.s_init * params.box_volumes(params.d_init)
    return BoxState(q, params.t_init.copy(), params.d_init.copy(), 0.0)


def _row_fourbox(ch, i, q, t, d, p: BoxParams):
    v_l = p.area_low[0] * d[0]
    v_d = p.v_total - p.volumes[0] - p.volumes[1] - v_l
    s_n, s_l, s_s = q[0] / p.volumes[0], q[1] / v_l, q[2] / p.volumes[1]
    rho_n = p.rho0 * (1.0 - p.alpha * (t[0] - p.t_ref) + p.beta * (s_n - p.s_ref))
    rho_l = p.rho0 * (1.0 - p.alpha * (t[1] - p.t_ref) + p.beta * (s_l - p.s_ref))
    m_eddy = p.a_gm_coeff * d[0]
    ch[i, 0] = p.c_hydraulic[0] * (rho_n - rho_l) * d[0] * d[0]
    ch[i, 1] = p.k_v * p.area_low[0] / d[0]
    ch[i, 2] = m_eddy
    ch[i, 3] = p.m_ek - m_eddy
    ch[i, 4] = d[0]
    ch[i, 5:8] = t[:3]
    ch[i, 8] = s_n
    ch[i, 9] = s_l
    ch[i, 10] = s_s


def _row_sixbox(ch, i, q, t, d, p: BoxParams):
    v_la = p.area_low[0] * d[0]
    v_lp = p.area_low[1] * d[1]
    v_d = p.v_total - p.volumes.sum() - v_la - v_lp
    vols = np.array([p.volumes[0], p.volumes[1], v_la, v_lp, p.volumes[2], v_d])
    s = q / vols
    rho = p.rho0 * (1.0 - p.alpha * (t[:4] - p.t_ref) + p.beta * (s[:4] - p.s_ref))
    dbar = (p.area_low[0] * d[0] + p.area_low[1] * d[1]) / p.area_low.sum()
    m_eddy = p.a_gm_coeff * dbar
    ch[i, 0] = p.c_hydraulic[0] * (rho[0] - rho[2]) * d[0] * d[0]
    ch[i, 1] = p.c_hydraulic[1] * (rho[1] - rho[3]) * d[1] * d[1]
    ch[i, 2] = p.k_v * p.area_low[0] / d[0]
    ch[i, 3] = p.k_v * p.area_low[1] / d[1]
    ch[i, 4] = m_eddy
    ch[i, 5] = p.m_ek - m_eddy
    ch[i, 6] = p.m_ib
    ch[i, 7] = d[0]
    ch[i, 8] = d[1]
    ch[i, 9:15] = t
    ch[i, 15:21] = s


def _run_python(pv_unused, q, t, d, noise, ch, dt_s, decay, params: BoxParams) -> int:
    """Pure-python engine, mirroring the compiled kernel step for step."""
    n_steps = ch.shape[0]
    rates = _rates_fourbox if params.n_basins == 1 else _rates_sixbox
    row = _row_fourbox if params.n_basins == 1 else _row_sixbox
    n_surface = len(params.t_target)
    state = BoxState(q, t, d)
    for i in range(n_steps):
        try:
            _validate_state(state, params, i)
        except SimulationFault:
            return i
        row(ch, i, q, t, d, params)
        if i == n_steps - 1:
            break
        dq, at, dd, _ = rates(q, t, d, params, noise[i])
        q += dt_s * dq
        d += dt_s * dd
        t_adv = t + dt_s * at
        t[:n_surface] = params.t_target + (t_adv[:n_surface] - params.t_target) * decay
        t[n_surface:] = t_adv[n_surface:]
    return -1


def simulate(params: BoxParams, noise: NoiseSeq, n_steps: int,
             initial: Optional[BoxState] = None, dt_years: float = DT_YEARS,
             engine: str | None = None) -> Trajectory:
    """Integrate n_steps rows (row 0 is the initial state) deterministically.

    Raises :class:`SimulationFault` carrying the failing step index if any
    state violates the box-state invariants.
    """
    if noise.values.shape[0] < n_steps:
        raise ValueError(f"noise has {noise.values.shape[0]} rows, need >= {n_steps}")
    if noise.values.shape[1] != params.n_fluxes:
        raise ValueError(f"noise has {noise.values.shape[1]} fluxes, expected {params.n_fluxes}")
    engine = engine or ENGINE
    state = (initial.copy() if initial is not None else initial_state(params))
    q, t, d = state.q_salt.astype(np.float64), state.t_box.astype(np.float64), state.d_pyc.astype(np.float64)
    ch = np.empty((n_steps, params.n_channels))
    dt_s = dt_years * YEAR_SECONDS
    decay = math.exp(-dt_s / params.tau_relax)
    noise_arr = np.ascontiguousarray(noise.values[:n_steps])

    if engine == "cython" and _boxstep_kernel is not None:
        pv = _pack_fourbox(params) if params.n_basins == 1 else _pack_sixbox(params)
        run = _boxstep_kernel.run_fourbox if params.n_basins == 1 else _boxstep_kernel.run_sixbox
        fault = run(pv, q, t, d, noise_arr, ch, dt_s, decay)
    else:
        fault = _run_python(None, q, t, d, noise_arr, ch, dt_s, decay, params)
    if fault >= 0:
        raise SimulationFault(f"box-state invariant violated at step {fault}", fault)

    final = BoxState(q, t, d, state.time + (n_steps - 1) * dt_years)
    traj = Trajectory(dt_years=dt_years, channels=ch, noise=noise, params=params,
                      final_state=final)
    traj.collapse_time_atlantic = detect_collapse(traj, "atlantic")
    if params.n_basins == 2:
        traj.collapse_time_pacific = detect_collapse(traj, "pacific")
    return traj


_COLLAPSE_CHANNEL = {
    (FOURBOX, "atlantic"): "m_n",
    (SIXBOX, "atlantic"): "m_n_atl",
    (SIXBOX, "pacific"): "m_n_pac",
}


def collapse_time_from_channels(channels: np.ndarray, channel_names: list[str],
                                dt_years: float, basin: str, variant: str) -> Optional[float]:
    key = (variant, basin)
    if key not in _COLLAPSE_CHANNEL:
        raise ValueError(f"unknown basin {basin!r} for {variant} model")
    col = channel_names.index(_COLLAPSE_CHANNEL[key])
    below = np.flatnonzero(channels[:, col] < 0.0)
    if below.size == 0:
        return None
    return float(below[0] * dt_years)


def detect_collapse(trajectory: Trajectory, basin: str) -> Optional[float]:
    """Earliest time the basin's overturning strength crosses below zero."""
    return collapse_time_from_channels(
        trajectory.channels, trajectory.channel_names, trajectory.dt_years,
        basin, trajectory.params.variant)


# ---------------------------------------------------------------------------
# defaults, static covariates, parameter overrides


def load_defaults(variant: str) -> dict:
    name = {FOURBOX: "fourbox.json", SIXBOX: "sixbox.json"}[variant]
    text = importlib.resources.files("tipcast.defaults").joinpath(name).read_text()
    return json.loads(text)


_FOURBOX_STATICS = [
    "fw_north", "fw_south", "m_ek", "a_gm_coeff", "k_v", "c_hydraulic", "area_low",
    "d_init", "s_init_north", "s_init_low", "s_init_south", "s_init_deep", "t_init_deep",
]
_SIXBOX_STATICS = [
    "fw_south", "fw_north_atlantic", "fw_north_pacific", "fw_interbasin",
    "m_ek", "a_gm_coeff", "k_v", "c_hydraulic_atl", "c_hydraulic_pac",
    "area_low_atl", "area_low_pac", "basin_frac_atl", "m_ib",
    "d_init_atl", "d_init_pac",
    "s_init_n_atl", "s_init_n_pac", "s_init_low_atl", "s_init_low_pac",
    "s_init_south", "s_init_deep", "t_init_deep",
]


def statics_names(variant: str) -> list[str]:
    return list(_FOURBOX_STATICS if variant == FOURBOX else _SIXBOX_STATICS)


def statics_vector(params: BoxParams) -> np.ndarray:
    """Static covariates conditioning the surrogate, in statics_names order."""
    if params.n_basins == 1:
        return np.array([
            params.fw_base[0], params.fw_base[1], params.m_ek, params.a_gm_coeff,
            params.k_v, params.c_hydraulic[0], params.area_low[0], params.d_init[0],
            params.s_init[0], params.s_init[1], params.s_init[2], params.s_init[3],
            params.t_init[3],
        ])
    return np.array([
        params.fw_base[0], params.fw_base[1], params.fw_base[2], params.fw_base[3],
        params.m_ek, params.a_gm_coeff, params.k_v,
        params.c_hydraulic[0], params.c_hydraulic[1],
        params.area_low[0], params.area_low[1], params.basin_frac[0], params.m_ib,
        params.d_init[0], params.d_init[1],
        params.s_init[0], params.s_init[1], params.s_init[2], params.s_init[3],
        params.s_init[4], params.s_init[5], params.t_init[5],
    ])


def params_from_overrides(variant: str, overrides: dict[str, float] | None = None) -> BoxParams:
    """Build BoxParams from the shipped defaults plus named static overrides."""
    cfg = load_defaults(variant)
    base = dict(cfg["params"])
    unknown = set(overrides or ()) - set(statics_names(variant))
    if unknown:
        raise KeyError(f"unknown static covariates: {sorted(unknown)}")
    values = {**base, **(overrides or {})}
    if variant == FOURBOX:
        return BoxParams(
            n_basins=1,
            fw_base=[values["fw_north"], values["fw_south"]],
            m_ek=values["m_ek"], a_gm_coeff=values["a_gm_coeff"], k_v=values["k_v"],
            c_hydraulic=[values["c_hydraulic"]], area_low=[values["area_low"]],
            basin_frac=[1.0],
            volumes=[values["v_north"], values["v_south"]], v_total=values["v_total"],
            t_target=[values["t_target_north"], values["t_target_low"], values["t_target_south"]],
            tau_relax=values["tau_relax_days"] * 86400.0,
            alpha=values["alpha"], beta=values["beta"], rho0=values["rho0"],
            s_ref=values["s_ref"], t_ref=values["t_ref"],
            d_init=[values["d_init"]],
            s_init=[values["s_init_north"], values["s_init_low"],
                    values["s_init_south"], values["s_init_deep"]],
            t_init=[values["t_target_north"], values["t_target_low"],
                    values["t_target_south"], values["t_init_deep"]],
        )
    frac_a = values["basin_frac_atl"]
    return BoxParams(
        n_basins=2,
        fw_base=[values["fw_south"], values["fw_north_atlantic"],
                 values["fw_north_pacific"], values["fw_interbasin"]],
        m_ek=values["m_ek"], a_gm_coeff=values["a_gm_coeff"], k_v=values["k_v"],
        c_hydraulic=[values["c_hydraulic_atl"], values["c_hydraulic_pac"]],
        area_low=[values["area_low_atl"], values["area_low_pac"]],
        basin_frac=[frac_a, 1.0 - frac_a],
        volumes=[values["v_n_atl"], values["v_n_pac"], values["v_south"]],
        v_total=values["v_total"],
        t_target=[values["t_target_n_atl"], values["t_target_n_pac"],
                  values["t_target_low_atl"], values["t_target_low_pac"],
                  values["t_target_south"]],
        tau_relax=values["tau_relax_days"] * 86400.0,
        alpha=values["alpha"], beta=values["beta"], rho0=values["rho0"],
        s_ref=values["s_ref"], t_ref=values["t_ref"],
        d_init=[values["d_init_atl"], values["d_init_pac"]],
        s_init=[values["s_init_n_atl"], values["s_init_n_pac"],
                values["s_init_low_atl"], values["s_init_low_pac"],
                values["s_init_south"], values["s_init_deep"]],
        t_init=[values["t_target_n_atl"], values["t_target_n_pac"],
                values["t_target_low_atl"], values["t_target_low_pac"],
                values["t_target_south"], values["t_init_deep"]],
        m_ib=values["m_ib"],
    )


def default_params(variant: str) -> BoxParams:
    return params_from_overrides(variant)


def near_threshold_params(variant: str) -> BoxParams:
    """Parameter set close to the saddle-node, for stochastic-timing studies."""
    cfg = load_defaults(variant)
    return params_from_overrides(variant, cfg.get("near_threshold", {}))


def default_bounds(variant: str) -> dict[str, tuple[float, float]]:
    cfg = load_defaults(variant)
    return {k: (float(v[0]), float(v[1])) for k, v in cfg["bounds"].items()}


def default_sigma(variant: str) -> float:
    return float(load_defaults(variant)["sigma"])
