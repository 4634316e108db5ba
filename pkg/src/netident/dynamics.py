"""Benchmark networked dynamical systems and the ground-truth simulator.

Each system is a pair of vectorized callables: a self-dynamics part F(x, t)
evaluated per node and a pairwise coupling part C(x_i, x_j) evaluated per
arc and summed over neighbors. Exact functional forms follow the standard
literature parameterizations; every constant lives in ``SystemParams`` and
can be overridden.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .basis import BasisLibrary, format_period
from .errors import IntegrationError, ParameterError
from .graph import Graph
from .trajectory import Trajectory

logger = logging.getLogger(__name__)

SYSTEMS = (
    "kuramoto",
    "sis",
    "mm",
    "rossler",
    "fhn",
    "hr",
    "mutualistic",
    "chua",
    "decay",
    "forced_diffusion",
)

_DEFAULT_CONSTANTS: dict[str, dict[str, float]] = {
    # phase oscillators; omega ~ Normal(omega_mean, omega_sigma) when sigma > 0
    "kuramoto": {"omega_mean": 0.3, "omega_sigma": 0.0},
    # contact process: recovery delta, transmission beta; slow enough that
    # the default 10-unit window keeps the identifying transient in view
    "sis": {"delta": 0.15, "beta": 0.05},
    # regulatory saturation with Hill exponent h
    "mm": {"decay": 1.0, "hill": 2.0},
    "rossler": {"a": 0.2, "b": 0.2, "c": 5.7},
    "fhn": {"a": 0.7, "b": 0.8, "eps_w": 0.08, "i_ext": 0.5},
    "hr": {"a": 1.0, "b": 3.0, "c": 1.0, "d": 5.0, "r": 0.006, "s": 4.0, "x_rest": -1.6, "i_ext": 3.2},
    "mutualistic": {"b_in": 0.1, "k_cap": 5.0, "c_low": 1.0, "d_sat": 5.0, "e_sat": 0.9, "h_sat": 0.1},
    "chua": {"alpha": 10.0, "beta": 14.87, "m0": -1.27, "m1": -0.68},
    "decay": {"rate": 1.0},
    "forced_diffusion": {"amp": 1.0, "period": 2.0},
}

_STATE_DIM = {
    "kuramoto": 1,
    "sis": 1,
    "mm": 1,
    "rossler": 3,
    "fhn": 2,
    "hr": 3,
    "mutualistic": 1,
    "chua": 3,
    "decay": 1,
    "forced_diffusion": 1,
}

_DEFAULT_COUPLING = {
    "kuramoto": 0.5,
    "sis": 0.05,
    "mm": 1.0,
    "rossler": 0.1,
    "fhn": 0.2,
    "hr": 0.1,
    "mutualistic": 1.0,
    "chua": 0.1,
    "decay": 0.0,
    "forced_diffusion": 0.5,
}

_X0_BOX = {
    "kuramoto": (-np.pi, np.pi),
    "sis": (0.05, 0.9),
    "mm": (0.1, 2.0),
    "rossler": (-4.0, 4.0),
    "fhn": (-2.0, 2.0),
    "hr": (-1.5, 1.5),
    "mutualistic": (0.1, 3.0),
    "chua": (-0.5, 0.5),
    "decay": (0.5, 1.5),
    "forced_diffusion": (3.0, 7.0),
}


@dataclass(frozen=True)
class SystemParams:
    """Identity and constants of one benchmark system instance."""

    system: str
    state_dim: int
    coupling: float
    constants: dict[str, float] = field(default_factory=dict)
    omega: np.ndarray | None = None  # per-node natural frequencies (kuramoto only)

    def __post_init__(self):
        if self.system not in SYSTEMS:
            raise ParameterError(f"unknown system '{self.system}'")
        if self.state_dim != _STATE_DIM[self.system]:
            raise ParameterError(
                f"{self.system} has state dimension {_STATE_DIM[self.system]}, got {self.state_dim}"
            )
        if self.omega is not None:
            object.__setattr__(self, "omega", np.asarray(self.omega, dtype=float))

    def constant(self, name: str) -> float:
        return float(self.constants[name])

    def to_dict(self) -> dict:
        out = {
            "system": self.system,
            "coupling": self.coupling,
            "constants": dict(self.constants),
        }
        if self.omega is not None:
            out["omega"] = [float(w) for w in self.omega]
        return out


def default_params(
    system: str,
    n: int | None = None,
    seed: int | None = None,
    coupling: float | None = None,
    **overrides: float,
) -> SystemParams:
    """Documented default parameters for a system, with per-field overrides.

    For Kuramoto with ``omega_sigma > 0``, per-node frequencies are drawn
    from Normal(omega_mean, omega_sigma) using ``seed`` (requires ``n``).
    """
    system = system.lower()
    if system not in SYSTEMS:
        raise ParameterError(f"unknown system '{system}'")
    constants = dict(_DEFAULT_CONSTANTS[system])
    for key, val in overrides.items():
        if key not in constants:
            raise ParameterError(f"{system} has no constant '{key}'")
        constants[key] = float(val)
    omega = None
    if system == "kuramoto" and constants["omega_sigma"] > 0:
        if n is None:
            raise ParameterError("heterogeneous frequencies require the node count")
        rng = np.random.default_rng(seed)
        omega = constants["omega_mean"] + constants["omega_sigma"] * rng.standard_normal(n)
    return SystemParams(
        system=system,
        state_dim=_STATE_DIM[system],
        coupling=_DEFAULT_COUPLING[system] if coupling is None else float(coupling),
        constants=constants,
        omega=omega,
    )


def initial_state(params: SystemParams, n: int, seed: int) -> np.ndarray:
    """Sample initial conditions uniformly from the system's default box."""
    lo, hi = _X0_BOX[params.system]
    rng = np.random.default_rng(seed)
    return lo + (hi - lo) * rng.random((n, params.state_dim))


# ---------------------------------------------------------------------------
# Right-hand sides
# ---------------------------------------------------------------------------


def _self_part(params: SystemParams, x: np.ndarray, t: float) -> np.ndarray:
    s = params.system
    c = params.constants
    out = np.empty_like(x)
    if s == "kuramoto":
        if params.omega is not None:
            out[:, 0] = params.omega
        else:
            out[:, 0] = c["omega_mean"]
    elif s == "sis":
        out[:, 0] = -c["delta"] * x[:, 0]
    elif s == "mm":
        out[:, 0] = -c["decay"] * x[:, 0]
    elif s == "rossler":
        out[:, 0] = -x[:, 1] - x[:, 2]
        out[:, 1] = x[:, 0] + c["a"] * x[:, 1]
        out[:, 2] = c["b"] + x[:, 2] * (x[:, 0] - c["c"])
    elif s == "fhn":
        out[:, 0] = x[:, 0] - x[:, 0] ** 3 / 3.0 - x[:, 1] + c["i_ext"]
        out[:, 1] = c["eps_w"] * (x[:, 0] + c["a"] - c["b"] * x[:, 1])
    elif s == "hr":
        out[:, 0] = x[:, 1] - c["a"] * x[:, 0] ** 3 + c["b"] * x[:, 0] ** 2 - x[:, 2] + c["i_ext"]
        out[:, 1] = c["c"] - c["d"] * x[:, 0] ** 2 - x[:, 1]
        out[:, 2] = c["r"] * (c["s"] * (x[:, 0] - c["x_rest"]) - x[:, 2])
    elif s == "mutualistic":
        xi = x[:, 0]
        out[:, 0] = c["b_in"] + xi * (1.0 - xi / c["k_cap"]) * (xi / c["c_low"] - 1.0)
    elif s == "chua":
        xa = x[:, 0]
        fx = c["m1"] * xa + 0.5 * (c["m0"] - c["m1"]) * (np.abs(xa + 1.0) - np.abs(xa - 1.0))
        out[:, 0] = c["alpha"] * (x[:, 1] - xa - fx)
        out[:, 1] = xa - x[:, 1] + x[:, 2]
        out[:, 2] = -c["beta"] * x[:, 1]
    elif s == "decay":
        out[:, 0] = -c["rate"] * x[:, 0]
    elif s == "forced_diffusion":
        out[:, 0] = c["amp"] * np.sin(2.0 * np.pi * t / c["period"])
    else:  # pragma: no cover
        raise ParameterError(f"unknown system '{s}'")
    return out


def _pair_part(params: SystemParams, xi: np.ndarray, xj: np.ndarray) -> np.ndarray:
    s = params.system
    k = params.coupling
    out = np.zeros_like(xi)
    if k == 0.0 or s == "decay":
        return out
    if s == "kuramoto":
        out[:, 0] = k * np.sin(xj[:, 0] - xi[:, 0])
    elif s == "sis":
        out[:, 0] = k * xj[:, 0] * (1.0 - xi[:, 0])
    elif s == "mm":
        h = params.constants["hill"]
        xh = xj[:, 0] ** h
        out[:, 0] = k * xh / (1.0 + xh)
    elif s in ("rossler", "fhn", "hr", "chua", "forced_diffusion"):
        out[:, 0] = k * (xj[:, 0] - xi[:, 0])
    elif s == "mutualistic":
        c = params.constants
        out[:, 0] = k * xi[:, 0] * xj[:, 0] / (c["d_sat"] + c["e_sat"] * xi[:, 0] + c["h_sat"] * xj[:, 0])
    else:  # pragma: no cover
        raise ParameterError(f"unknown system '{s}'")
    return out


def vector_field(params: SystemParams, g: Graph, x: np.ndarray, t: float) -> np.ndarray:
    """Full coupled right-hand side dx/dt at state x [n, d] and time t."""
    f = _self_part(params, x, t)
    if g.num_arcs and params.coupling != 0.0 and params.system != "decay":
        contrib = _pair_part(params, x[g.arc_src], x[g.arc_dst])
        f = f + g.aggregate_arcs(contrib)
    return f


# ---------------------------------------------------------------------------
# Simulation
# ---------------------------------------------------------------------------


def _step(rhs, x, t, dt, integrator):
    if integrator == "euler":
        return x + dt * rhs(x, t)
    k1 = rhs(x, t)
    k2 = rhs(x + 0.5 * dt * k1, t + 0.5 * dt)
    k3 = rhs(x + 0.5 * dt * k2, t + 0.5 * dt)
    k4 = rhs(x + dt * k3, t + dt)
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def simulate(
    params: SystemParams,
    g: Graph,
    x0: np.ndarray,
    dt: float,
    n_steps: int,
    integrator: str = "rk4",
    t0: float = 0.0,
) -> Trajectory:
    """Integrate the coupled system for ``n_steps`` time points (including x0).

    RK4 is the default; Euler is available for apples-to-apples comparisons
    with discrete-time training. Raises :class:`IntegrationError` naming the
    step index if the state blows up.
    """
    if dt <= 0:
        raise ParameterError("dt must be positive")
    if n_steps < 1:
        raise ParameterError("need at least one time point")
    if integrator not in ("rk4", "euler"):
        raise ParameterError("integrator must be 'rk4' or 'euler'")
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (g.n, params.state_dim):
        raise ParameterError(f"x0 must have shape ({g.n}, {params.state_dim})")
    if not np.all(np.isfinite(x0)):
        raise ParameterError("x0 must be finite")
    if params.system == "sis" and (x0.min() < 0.0 or x0.max() > 1.0):
        raise ParameterError("sis initial state must lie in [0, 1]")
    if params.omega is not None and len(params.omega) != g.n:
        raise ParameterError("omega array length must equal the node count")

    def rhs(x, t):
        return vector_field(params, g, x, t)

    values = np.empty((n_steps, g.n, params.state_dim), dtype=float)
    values[0] = x0
    x = x0
    for k in range(1, n_steps):
        x = _step(rhs, x, t0 + (k - 1) * dt, dt, integrator)
        if not np.all(np.isfinite(x)):
            raise IntegrationError("state became non-finite during simulation", step=k)
        values[k] = x
    return Trajectory.regular(values, dt=dt, t0=t0)


# ---------------------------------------------------------------------------
# Ground-truth coefficients on a candidate library
# ---------------------------------------------------------------------------


def true_coefficients(params: SystemParams, lib: BasisLibrary):
    """Project the system's exact equations onto library terms.

    Returns a :class:`netident.model.ModelSpec` when every true term exists
    in the library, else ``None`` (e.g. fractional or piecewise systems).
    Heterogeneous Kuramoto frequencies map onto their mean.
    """
    from .model import ModelSpec  # local import to avoid a cycle
    from .support import SupportMask

    mapping = _true_term_values(params, lib)
    if mapping is None:
        return None
    d = params.state_dim
    w_self = np.zeros((lib.n_self, d))
    w_pair = np.zeros((lib.n_pair, d))
    self_pos = {t.name: k for k, t in enumerate(lib.self_terms)}
    pair_pos = {t.name: k for k, t in enumerate(lib.pair_terms)}
    for (part, name, dim), value in mapping.items():
        table, pos = (w_self, self_pos) if part == "self" else (w_pair, pair_pos)
        if name not in pos:
            return None
        table[pos[name], dim] = value
    mask = SupportMask(self_mask=(w_self != 0).astype(np.uint8), pair_mask=(w_pair != 0).astype(np.uint8))
    return ModelSpec(lib=lib, mask=mask, w_self=w_self, w_pair=w_pair)


def _true_term_values(params: SystemParams, lib: BasisLibrary):
    s, k, c = params.system, params.coupling, params.constants
    d = params.state_dim

    def xn(i: int) -> str:
        return "x" if d == 1 else f"x{i + 1}"

    m: dict[tuple[str, str, int], float] = {}
    if s == "kuramoto":
        m[("self", "1", 0)] = c["omega_mean"]
        m[("pair", "sin(xj-xi)", 0)] = k
    elif s == "sis":
        m[("self", "x", 0)] = -c["delta"]
        m[("pair", "xj", 0)] = k
        m[("pair", "xi*xj", 0)] = -k
    elif s == "mm":
        if abs(lib.spec.hill_exponent - c["hill"]) > 1e-12:
            return None
        m[("self", "x", 0)] = -c["decay"]
        h = lib.spec.hill_exponent
        m[("pair", f"xj^{h}/(1+xj^{h})", 0)] = k
    elif s == "rossler":
        m[("self", "x2", 0)] = -1.0
        m[("self", "x3", 0)] = -1.0
        m[("pair", "x1j-x1i", 0)] = k
        m[("self", "x1", 1)] = 1.0
        m[("self", "x2", 1)] = c["a"]
        m[("self", "1", 2)] = c["b"]
        m[("self", "x1*x3", 2)] = 1.0
        m[("self", "x3", 2)] = -c["c"]
    elif s == "fhn":
        m[("self", "x1", 0)] = 1.0
        m[("self", "x1^3", 0)] = -1.0 / 3.0
        m[("self", "x2", 0)] = -1.0
        m[("self", "1", 0)] = c["i_ext"]
        m[("pair", "x1j-x1i", 0)] = k
        m[("self", "x1", 1)] = c["eps_w"]
        m[("self", "1", 1)] = c["eps_w"] * c["a"]
        m[("self", "x2", 1)] = -c["eps_w"] * c["b"]
    elif s == "hr":
        m[("self", "x2", 0)] = 1.0
        m[("self", "x1^3", 0)] = -c["a"]
        m[("self", "x1^2", 0)] = c["b"]
        m[("self", "x3", 0)] = -1.0
        m[("self", "1", 0)] = c["i_ext"]
        m[("pair", "x1j-x1i", 0)] = k
        m[("self", "1", 1)] = c["c"]
        m[("self", "x1^2", 1)] = -c["d"]
        m[("self", "x2", 1)] = -1.0
        m[("self", "x1", 2)] = c["r"] * c["s"]
        m[("self", "1", 2)] = -c["r"] * c["s"] * c["x_rest"]
        m[("self", "x3", 2)] = -c["r"]
    elif s == "decay":
        m[("self", "x", 0)] = -c["rate"]
    elif s == "forced_diffusion":
        sin_name = _matching_time_term(lib, c["period"])
        if sin_name is None:
            return None
        m[("self", sin_name, 0)] = c["amp"]
        m[("pair", "xj-xi", 0)] = k
    else:  # mutualistic, chua: not representable in the stock library
        return None
    return m


def _matching_time_term(lib: BasisLibrary, period: float) -> str | None:
    for t in lib.self_terms:
        if t.kind == "time_sin" and abs(t.period - period) <= 1e-9 * max(abs(period), 1.0):
            return t.name
    return None
