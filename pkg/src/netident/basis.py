"""Candidate term libraries for self dynamics and pairwise coupling.

A library is an ordered list of term descriptors, a pure function of its
spec, so feature ordering is stable across runs and platforms. Evaluation is
vectorized over flattened state batches; gradient variants feed the
forward-sensitivity machinery in :mod:`netident.fitting`.
"""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import ParameterError
from .trajectory import Trajectory

logger = logging.getLogger(__name__)

TAN_CLAMP = 1e6


def format_period(p: float) -> str:
    return repr(float(p))


def _comp_name(c: int, d: int) -> str:
    return "x" if d == 1 else f"x{c + 1}"


@dataclass(frozen=True)
class LibrarySpec:
    """Declarative description of which candidate terms to generate.

    The defaults cover the stock benchmark systems. Per-component intrinsic
    sin/cos (``self_trig``), clamped tan, and the plain coupling sinusoid
    ``sin(xj)`` are opt-in: on narrow state ranges they are numerically
    collinear with low-order polynomials and only degrade identification.
    """

    poly_degree: int = 3
    trig: bool = True  # coupling sin(xj - xi)
    self_trig: bool = False  # intrinsic sin/cos per component
    tan: bool = False  # intrinsic clamped tan per component
    coupling_sin: bool = False  # coupling sin(xj)
    hill: bool = True
    diffs: bool = True
    hill_exponent: int = 2
    time_periods: tuple[float, ...] = ()
    cross_products: tuple[tuple[int, int], ...] = ()  # coupling xi[a]*xj[b] pairs

    def __post_init__(self):
        if not 0 <= self.poly_degree <= 5:
            raise ParameterError("poly_degree must be in [0, 5]")
        if self.hill_exponent < 1:
            raise ParameterError("hill exponent must be >= 1")
        object.__setattr__(self, "time_periods", tuple(float(p) for p in self.time_periods))
        object.__setattr__(
            self, "cross_products", tuple((int(a), int(b)) for a, b in self.cross_products)
        )

    def to_dict(self) -> dict:
        return {
            "poly_degree": self.poly_degree,
            "trig": self.trig,
            "self_trig": self.self_trig,
            "tan": self.tan,
            "coupling_sin": self.coupling_sin,
            "hill": self.hill,
            "diffs": self.diffs,
            "hill_exponent": self.hill_exponent,
            "time_periods": list(self.time_periods),
            "cross_products": [list(p) for p in self.cross_products],
        }

    @staticmethod
    def from_dict(d: dict) -> "LibrarySpec":
        d = dict(d)
        d["time_periods"] = tuple(d.get("time_periods", ()))
        d["cross_products"] = tuple(tuple(p) for p in d.get("cross_products", ()))
        return LibrarySpec(**d)


@dataclass(frozen=True)
class SelfTerm:
    """One candidate term of the self-dynamics part; a function of (x, t)."""

    name: str
    kind: str  # monomial | sin | cos | tan | time_sin | time_cos
    exponents: tuple[int, ...] = ()
    component: int = 0
    period: float = 0.0


@dataclass(frozen=True)
class PairTerm:
    """One candidate coupling term; a function of (x_i, x_j)."""

    name: str
    kind: str  # diff | sin_diff | sin_j | lin_j | prod | hill
    component: int = 0
    component_i: int = 0
    exponent: int = 2
    antisymmetric: bool = False


@dataclass(frozen=True)
class BasisLibrary:
    """Ordered candidate libraries for the self and coupling parts."""

    state_dim: int
    self_terms: tuple[SelfTerm, ...]
    pair_terms: tuple[PairTerm, ...]
    spec: LibrarySpec

    @property
    def n_self(self) -> int:
        return len(self.self_terms)

    @property
    def n_pair(self) -> int:
        return len(self.pair_terms)

    @property
    def self_names(self) -> list[str]:
        return [t.name for t in self.self_terms]

    @property
    def pair_names(self) -> list[str]:
        return [t.name for t in self.pair_terms]

    @cached_property
    def _monomials(self) -> tuple[np.ndarray, np.ndarray]:
        """Indices and exponent matrix of monomial terms: (positions, [Km, d])."""
        idx = [k for k, t in enumerate(self.self_terms) if t.kind == "monomial"]
        exps = np.array([self.self_terms[k].exponents for k in idx], dtype=np.int64).reshape(
            len(idx), self.state_dim
        )
        return np.array(idx, dtype=np.int64), exps

    # -- self-dynamics terms ------------------------------------------------

    def eval_self(self, x: np.ndarray, t) -> np.ndarray:
        """Evaluate all self terms at states x [..., d] and time t (broadcastable)."""
        vals, _ = self._eval_self(x, t, need_grad=False)
        return vals

    def self_with_grad(self, x: np.ndarray, t) -> tuple[np.ndarray, np.ndarray]:
        return self._eval_self(x, t, need_grad=True)

    def _eval_self(self, x, t, need_grad: bool):
        # overflow to inf is expected while rollouts diverge; callers detect it
        with np.errstate(over="ignore", invalid="ignore"):
            return self._eval_self_impl(x, t, need_grad)

    def _eval_self_impl(self, x, t, need_grad: bool):
        x = np.asarray(x, dtype=float)
        lead = x.shape[:-1]
        d = self.state_dim
        if x.shape[-1] != d:
            raise ParameterError("state dimension mismatch")
        K = self.n_self
        vals = np.empty(lead + (K,), dtype=float)
        grads = np.zeros(lead + (K, d), dtype=float) if need_grad else None
        t_arr = np.broadcast_to(np.asarray(t, dtype=float), lead)

        mono_idx, exps = self._monomials
        if len(mono_idx):
            max_e = int(exps.max()) if exps.size else 0
            # power table: pt[..., c, e] = x[..., c] ** e
            pt = np.empty(lead + (d, max_e + 1), dtype=float)
            pt[..., 0] = 1.0
            for e in range(1, max_e + 1):
                pt[..., e] = pt[..., e - 1] * x
            comp_idx = np.broadcast_to(np.arange(d), exps.shape)
            factors = pt[..., comp_idx, exps]  # [..., Km, d]
            vals[..., mono_idx] = factors.prod(axis=-1)
            if need_grad:
                for c in range(d):
                    has = exps[:, c] > 0
                    if not has.any():
                        continue
                    sub = np.nonzero(has)[0]
                    rest = np.ones(lead + (len(sub),), dtype=float)
                    for c2 in range(d):
                        if c2 != c:
                            rest = rest * factors[..., sub, c2]
                    lower = pt[..., c, np.maximum(exps[sub, c] - 1, 0)]
                    grads[..., mono_idx[sub], c] = exps[sub, c] * lower * rest

        for k, term in enumerate(self.self_terms):
            if term.kind == "monomial":
                continue
            c = term.component
            if term.kind == "sin":
                vals[..., k] = np.sin(x[..., c])
                if need_grad:
                    grads[..., k, c] = np.cos(x[..., c])
            elif term.kind == "cos":
                vals[..., k] = np.cos(x[..., c])
                if need_grad:
                    grads[..., k, c] = -np.sin(x[..., c])
            elif term.kind == "tan":
                raw = np.tan(x[..., c])
                vals[..., k] = np.clip(raw, -TAN_CLAMP, TAN_CLAMP)
                if need_grad:
                    grads[..., k, c] = np.clip(1.0 + raw * raw, -TAN_CLAMP**2, TAN_CLAMP**2)
            elif term.kind == "time_sin":
                vals[..., k] = np.sin(2.0 * np.pi * t_arr / term.period)
            elif term.kind == "time_cos":
                vals[..., k] = np.cos(2.0 * np.pi * t_arr / term.period)
            else:  # pragma: no cover - guarded by construction
                raise ParameterError(f"unknown self term kind {term.kind}")
        return vals, grads

    # -- coupling terms -------------------------------------------------------

    @cached_property
    def pair_components(self) -> tuple[np.ndarray, np.ndarray]:
        """Per pair term: the component of x_i and of x_j it depends on."""
        ci = np.array([t.component_i for t in self.pair_terms], dtype=np.int64)
        cj = np.array([t.component for t in self.pair_terms], dtype=np.int64)
        return ci, cj

    def eval_pair(self, xi: np.ndarray, xj: np.ndarray) -> np.ndarray:
        vals, _, _ = self._eval_pair(xi, xj, need_grad=False)
        return vals

    def pair_with_grad(self, xi, xj) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Values plus dense gradients w.r.t. x_i and x_j, shapes [..., K, d]."""
        vals, gi, gj = self._eval_pair(xi, xj, need_grad=True)
        lead = vals.shape[:-1]
        d = self.state_dim
        ci, cj = self.pair_components
        di = np.zeros(lead + (self.n_pair, d), dtype=float)
        dj = np.zeros(lead + (self.n_pair, d), dtype=float)
        idx = np.arange(self.n_pair)
        di[..., idx, ci] = gi
        dj[..., idx, cj] = gj
        return vals, di, dj

    def pair_with_grad_compact(self, xi, xj) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Values plus the single nonzero gradient entry per term, [..., K].

        Every coupling term depends on one component of each endpoint (see
        ``pair_components``), so the dense [..., K, d] gradients are mostly
        zeros; the fitting hot loop uses this compact form.
        """
        return self._eval_pair(xi, xj, need_grad=True)

    def _eval_pair(self, xi, xj, need_grad: bool):
        with np.errstate(over="ignore", invalid="ignore"):
            return self._eval_pair_impl(xi, xj, need_grad)

    def _eval_pair_impl(self, xi, xj, need_grad: bool):
        xi = np.asarray(xi, dtype=float)
        xj = np.asarray(xj, dtype=float)
        if xi.shape != xj.shape or xi.shape[-1] != self.state_dim:
            raise ParameterError("pair inputs must share shape [..., d]")
        lead = xi.shape[:-1]
        K = self.n_pair
        vals = np.empty(lead + (K,), dtype=float)
        gi = np.zeros(lead + (K,), dtype=float) if need_grad else None
        gj = np.zeros(lead + (K,), dtype=float) if need_grad else None
        for k, term in enumerate(self.pair_terms):
            a, b = xi[..., term.component_i], xj[..., term.component]
            if term.kind == "diff":
                vals[..., k] = b - a
                if need_grad:
                    gi[..., k] = -1.0
                    gj[..., k] = 1.0
            elif term.kind == "sin_diff":
                diff = b - a
                vals[..., k] = np.sin(diff)
                if need_grad:
                    cosd = np.cos(diff)
                    gi[..., k] = -cosd
                    gj[..., k] = cosd
            elif term.kind == "sin_j":
                vals[..., k] = np.sin(b)
                if need_grad:
                    gj[..., k] = np.cos(b)
            elif term.kind == "lin_j":
                vals[..., k] = b
                if need_grad:
                    gj[..., k] = 1.0
            elif term.kind == "prod":
                vals[..., k] = a * b
                if need_grad:
                    gi[..., k] = b
                    gj[..., k] = a
            elif term.kind == "hill":
                h = term.exponent
                bh = b**h
                denom = 1.0 + bh
                vals[..., k] = bh / denom
                if need_grad:
                    gj[..., k] = h * b ** (h - 1) / (denom * denom)
            else:  # pragma: no cover
                raise ParameterError(f"unknown pair term kind {term.kind}")
        return vals, gi, gj


def build_library(spec: LibrarySpec, state_dim: int = 1) -> BasisLibrary:
    """Generate the ordered candidate libraries for a given state dimension.

    The default spec covers the stock benchmark systems: multivariate
    monomials up to ``poly_degree``, per-component sin/cos (plus optional
    clamped tan), and coupling terms per corresponding component
    (difference, sinusoids, linear/product, Hill saturation), optionally
    extended with globally shared periodic time terms.
    """
    if state_dim < 1:
        raise ParameterError("state_dim must be >= 1")
    d = state_dim
    self_terms: list[SelfTerm] = []
    for deg in range(spec.poly_degree + 1):
        for combo in itertools.combinations_with_replacement(range(d), deg):
            exps = tuple(combo.count(c) for c in range(d))
            self_terms.append(SelfTerm(name=_monomial_name(exps, d), kind="monomial", exponents=exps))
    if spec.self_trig:
        for c in range(d):
            xc = _comp_name(c, d)
            self_terms.append(SelfTerm(name=f"sin({xc})", kind="sin", component=c))
            self_terms.append(SelfTerm(name=f"cos({xc})", kind="cos", component=c))
    if spec.tan:
        for c in range(d):
            self_terms.append(SelfTerm(name=f"tan({_comp_name(c, d)})", kind="tan", component=c))
    for p in spec.time_periods:
        ps = format_period(p)
        self_terms.append(SelfTerm(name=f"sin(2*pi*t/{ps})", kind="time_sin", period=float(p)))
        self_terms.append(SelfTerm(name=f"cos(2*pi*t/{ps})", kind="time_cos", period=float(p)))

    pair_terms: list[PairTerm] = []
    for c in range(d):
        xc = _comp_name(c, d)
        if spec.diffs:
            pair_terms.append(
                PairTerm(name=f"{xc}j-{xc}i", kind="diff", component=c, component_i=c, antisymmetric=True)
            )
            if spec.trig:
                pair_terms.append(
                    PairTerm(
                        name=f"sin({xc}j-{xc}i)",
                        kind="sin_diff",
                        component=c,
                        component_i=c,
                        antisymmetric=True,
                    )
                )
        if spec.coupling_sin:
            pair_terms.append(PairTerm(name=f"sin({xc}j)", kind="sin_j", component=c))
        if spec.poly_degree >= 1:
            pair_terms.append(PairTerm(name=f"{xc}j", kind="lin_j", component=c))
        if spec.poly_degree >= 2:
            pair_terms.append(PairTerm(name=f"{xc}i*{xc}j", kind="prod", component=c, component_i=c))
        if spec.hill:
            h = spec.hill_exponent
            pair_terms.append(
                PairTerm(
                    name=f"{xc}j^{h}/(1+{xc}j^{h})",
                    kind="hill",
                    component=c,
                    exponent=h,
                )
            )
    for a, b in spec.cross_products:
        if not (0 <= a < d and 0 <= b < d):
            raise ParameterError("cross product component out of range")
        pair_terms.append(
            PairTerm(
                name=f"{_comp_name(a, d)}i*{_comp_name(b, d)}j",
                kind="prod",
                component=b,
                component_i=a,
            )
        )

    if not self_terms and not pair_terms:
        raise ParameterError("library spec generates no terms")
    names = [t.name for t in self_terms]
    if len(set(names)) != len(names):
        raise ParameterError("duplicate self term names")
    names = [t.name for t in pair_terms]
    if len(set(names)) != len(names):
        raise ParameterError("duplicate pair term names")
    return BasisLibrary(
        state_dim=d, self_terms=tuple(self_terms), pair_terms=tuple(pair_terms), spec=spec
    )


def _monomial_name(exps: tuple[int, ...], d: int) -> str:
    parts = []
    for c, e in enumerate(exps):
        if e == 0:
            continue
        xc = _comp_name(c, d)
        parts.append(xc if e == 1 else f"{xc}^{e}")
    return "*".join(parts) if parts else "1"


# ---------------------------------------------------------------------------
# Spectral period extraction
# ---------------------------------------------------------------------------


def dominant_periods(traj: Trajectory, n_peaks: int) -> list[float]:
    """Periods of the strongest oscillations in the node-averaged signal.

    The signal is averaged across nodes, mean-removed, and Fourier
    transformed (magnitudes pooled across state dimensions). The ``n_peaks``
    largest-magnitude nonzero-frequency components are returned as periods
    (1/frequency, in trajectory time units), strongest first. Bins adjacent
    to an already selected one are skipped so one broad peak cannot occupy
    several slots. A constant signal yields an empty list.
    """
    if traj.n_steps < 8:
        raise ParameterError("need at least 8 time points for period extraction")
    if n_peaks < 1:
        raise ParameterError("n_peaks must be >= 1")
    signal = traj.values.mean(axis=1)  # [T, d]
    signal = signal - signal.mean(axis=0, keepdims=True)
    scale = np.abs(traj.values).max()
    if np.abs(signal).max() <= 1e-12 * max(scale, 1.0):
        logger.warning("dominant_periods: node-averaged signal is constant")
        return []
    spectrum = np.abs(np.fft.rfft(signal, axis=0)).sum(axis=1)  # [T//2+1]
    spectrum[0] = 0.0
    total_time = traj.n_steps * traj.dt
    order = np.argsort(spectrum, kind="stable")[::-1]
    chosen: list[int] = []
    for k in order:
        k = int(k)
        if spectrum[k] <= 0:
            break
        if any(abs(k - c) <= 1 for c in chosen):
            continue
        chosen.append(k)
        if len(chosen) == n_peaks:
            break
    return [total_time / k for k in chosen]
