"""Learned equation container: library + support mask + shared coefficients."""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .basis import BasisLibrary, LibrarySpec, build_library
from .errors import EvaluationError, ParameterError
from .graph import Graph
from .support import SupportMask


@dataclass(frozen=True)
class ModelSpec:
    """Inferred node-invariant equations.

    Coefficients are shared by every node; masked-out entries are exactly
    zero (enforced at construction), so the trainable parameter count equals
    the number of active mask entries regardless of network size.
    """

    lib: BasisLibrary
    mask: SupportMask
    w_self: np.ndarray  # [K_f, d]
    w_pair: np.ndarray  # [K_c, d]

    def __post_init__(self):
        d = self.lib.state_dim
        w_self = np.asarray(self.w_self, dtype=float).reshape(self.lib.n_self, d)
        w_pair = np.asarray(self.w_pair, dtype=float).reshape(self.lib.n_pair, d)
        if self.mask.self_mask.shape != w_self.shape or self.mask.pair_mask.shape != w_pair.shape:
            raise ParameterError("mask shape must match the library and state dimension")
        if not (np.all(np.isfinite(w_self)) and np.all(np.isfinite(w_pair))):
            raise ParameterError("coefficients must be finite")
        object.__setattr__(self, "w_self", w_self * self.mask.self_mask)
        object.__setattr__(self, "w_pair", w_pair * self.mask.pair_mask)

    @property
    def state_dim(self) -> int:
        return self.lib.state_dim

    @property
    def n_active(self) -> int:
        return self.mask.n_active

    def active_terms(self) -> list[tuple[str, str, int, float]]:
        """(part, term name, output dim, coefficient) for every nonzero entry."""
        out = []
        for k, t in enumerate(self.lib.self_terms):
            for dim in range(self.state_dim):
                if self.w_self[k, dim] != 0.0:
                    out.append(("self", t.name, dim, float(self.w_self[k, dim])))
        for k, t in enumerate(self.lib.pair_terms):
            for dim in range(self.state_dim):
                if self.w_pair[k, dim] != 0.0:
                    out.append(("pair", t.name, dim, float(self.w_pair[k, dim])))
        return out

    # -- serialization -----------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "library": self.lib.spec.to_dict(),
            "state_dim": self.state_dim,
            "mask": self.mask.to_dict(),
            "coefficients": {"self": self.w_self.tolist(), "pair": self.w_pair.tolist()},
            "equations": equation_strings(self),
        }

    @staticmethod
    def from_dict(d: dict) -> "ModelSpec":
        lib = build_library(LibrarySpec.from_dict(d["library"]), state_dim=int(d["state_dim"]))
        return ModelSpec(
            lib=lib,
            mask=SupportMask.from_dict(d["mask"]),
            w_self=np.asarray(d["coefficients"]["self"], dtype=float),
            w_pair=np.asarray(d["coefficients"]["pair"], dtype=float),
        )

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @staticmethod
    def load(path) -> "ModelSpec":
        with open(path, "r", encoding="utf-8") as fh:
            return ModelSpec.from_dict(json.load(fh))


def model_rhs(model: ModelSpec, g: Graph, x: np.ndarray, t) -> np.ndarray:
    """Right-hand side of the learned equations at state x [n, d] and time t.

    Per node i: (masked self coefficients)' theta_f(x_i, t) plus the sum over
    neighbors j of (masked pair coefficients)' theta_c(x_i, x_j), accumulated
    in neighbor-list order.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (g.n, model.state_dim):
        raise ParameterError(f"state must have shape ({g.n}, {model.state_dim})")
    feats = model.lib.eval_self(x, t)  # [n, K_f]
    out = feats @ model.w_self
    if g.num_arcs and model.lib.n_pair:
        pair = model.lib.eval_pair(x[g.arc_src], x[g.arc_dst])  # [A, K_c]
        out = out + g.aggregate_arcs(pair @ model.w_pair)
    if not np.all(np.isfinite(out)):
        node = int(np.argwhere(~np.isfinite(out))[0][0])
        bad_feat = np.argwhere(~np.isfinite(feats[node]))
        term = model.lib.self_names[int(bad_feat[0][0])] if len(bad_feat) else "coupling sum"
        raise EvaluationError(f"non-finite right-hand side at node {node} (term {term})")
    return out


def equation_strings(model: ModelSpec, precision: int = 4) -> list[str]:
    """Human-readable equations, one line per output state dimension."""
    d = model.state_dim
    lines = []
    for dim in range(d):
        lhs = "dx_i/dt" if d == 1 else f"dx{dim + 1}_i/dt"
        parts = []
        for k, t in enumerate(model.lib.self_terms):
            w = model.w_self[k, dim]
            if w != 0.0:
                parts.append(_fmt_term(w, t.name, precision, first=not parts))
        pair_parts = []
        for k, t in enumerate(model.lib.pair_terms):
            w = model.w_pair[k, dim]
            if w != 0.0:
                pair_parts.append(_fmt_term(w, t.name, precision, first=not pair_parts))
        rhs = " ".join(parts) if parts else "0"
        if pair_parts:
            rhs += " + sum_j [" + " ".join(pair_parts) + "]"
        lines.append(f"{lhs} = {rhs}")
    return lines


def _fmt_term(w: float, name: str, precision: int, first: bool) -> str:
    mag = f"{abs(w):.{precision}g}"
    body = mag if name == "1" else f"{mag}*{name}"
    if first:
        return body if w >= 0 else f"-{body}"
    return ("+ " if w >= 0 else "- ") + body
