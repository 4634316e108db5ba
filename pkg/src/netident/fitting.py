"""Shared-coefficient fitting under a fixed support mask.

The learned field is linear in its coefficients, so the Jacobian of a
multi-step rollout with respect to every active coefficient is propagated
exactly alongside the state (forward sensitivity, one trajectory per active
coefficient). The optimizer takes damped Gauss-Newton steps built from that
Jacobian; masked-out entries stay exactly zero throughout.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .basis import BasisLibrary
from .errors import IntegrationError, OptimizationError, ParameterError
from .graph import Graph
from .model import ModelSpec, model_rhs
from .support import SparseCoefficients, SupportMask
from .trajectory import Trajectory

logger = logging.getLogger(__name__)

BLOWUP_LIMIT = 1e9


@dataclass(frozen=True)
class FitConfig:
    """Tunables of the coefficient-fitting stage."""

    tau: float | None = None  # rollout step; defaults to the trajectory dt
    horizon: int = 100
    batch: int = 4
    lr: float = 1.0
    max_iters: int = 150
    tol: float = 1e-6
    step_tol: float = 1e-3  # relative parameter-motion stop (noise-floor regime)
    patience: int = 6  # stop after this many iterations without a better best loss
    integrator: str = "euler"  # training chain; 'midpoint' cuts discretization bias
    seed: int = 0
    mu0: float = 1e-3  # initial Gauss-Newton damping
    loss_cap: float = 1e6  # a diverging rollout contributes this loss

    def __post_init__(self):
        if self.tau is not None and self.tau <= 0:
            raise ParameterError("tau must be positive")
        if self.horizon < 1:
            raise ParameterError("horizon must be >= 1")
        if self.lr <= 0:
            raise ParameterError("lr must be positive")
        if self.batch < 1 or self.max_iters < 1:
            raise ParameterError("batch and max_iters must be >= 1")
        if self.integrator not in ("euler", "midpoint"):
            raise ParameterError("integrator must be 'euler' or 'midpoint'")

    def to_dict(self) -> dict:
        return {
            "tau": self.tau,
            "horizon": self.horizon,
            "batch": self.batch,
            "lr": self.lr,
            "max_iters": self.max_iters,
            "tol": self.tol,
            "step_tol": self.step_tol,
            "patience": self.patience,
            "integrator": self.integrator,
            "seed": self.seed,
            "mu0": self.mu0,
            "loss_cap": self.loss_cap,
        }


@dataclass(frozen=True)
class FitResult:
    model: ModelSpec
    loss_history: list[float]
    n_iters: int
    restarts: int
    converged: bool


# ---------------------------------------------------------------------------
# Rollout operations
# ---------------------------------------------------------------------------


def rollout(
    model: ModelSpec, g: Graph, x_start: np.ndarray, t_start: float, horizon: int, tau: float
) -> np.ndarray:
    """Explicit Euler chain of ``horizon`` steps; each step feeds on the
    model's own previous prediction. Returns the predicted states [H, n, d]."""
    if horizon < 1:
        raise ParameterError("horizon must be >= 1")
    x = np.asarray(x_start, dtype=float)
    out = np.empty((horizon,) + x.shape)
    t = float(t_start)
    for h in range(horizon):
        x = x + tau * model_rhs(model, g, x, t)
        if not np.all(np.isfinite(x)) or np.abs(x).max() > BLOWUP_LIMIT:
            raise IntegrationError("rollout diverged", step=h + 1)
        out[h] = x
        t += tau
    return out


def _stride_for(traj: Trajectory, tau: float) -> int:
    dt = traj.dt
    stride = int(round(tau / dt))
    if stride < 1 or abs(stride * dt - tau) > 1e-9 * max(dt, tau):
        raise ParameterError("tau must be a positive integer multiple of the sampling interval")
    return stride


def rollout_loss(
    model: ModelSpec,
    g: Graph,
    traj: Trajectory,
    t_index: int,
    horizon: int,
    tau: float | None = None,
) -> float:
    """Mean squared error of a rollout from the observed state at ``t_index``
    against the observed segment, averaged over nodes, steps, and dimensions."""
    tau = traj.dt if tau is None else tau
    stride = _stride_for(traj, tau)
    if t_index < 0 or t_index + horizon * stride >= traj.n_steps:
        raise ParameterError("segment exceeds the trajectory")
    pred = rollout(model, g, traj.values[t_index], float(traj.times[t_index]), horizon, tau)
    target = traj.values[t_index + stride : t_index + stride * (horizon + 1) : stride]
    return float(np.mean((pred - target) ** 2))


# ---------------------------------------------------------------------------
# Batched forward-sensitivity engine
# ---------------------------------------------------------------------------


def _active_indices(mask: SupportMask) -> tuple[np.ndarray, np.ndarray]:
    return np.argwhere(mask.self_mask > 0), np.argwhere(mask.pair_mask > 0)


def _pack(w_self: np.ndarray, w_pair: np.ndarray, act_s: np.ndarray, act_p: np.ndarray) -> np.ndarray:
    return np.concatenate(
        [w_self[act_s[:, 0], act_s[:, 1]], w_pair[act_p[:, 0], act_p[:, 1]]]
    )


def _unpack(
    p: np.ndarray, lib: BasisLibrary, act_s: np.ndarray, act_p: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    w_self = np.zeros((lib.n_self, lib.state_dim))
    w_pair = np.zeros((lib.n_pair, lib.state_dim))
    ns = len(act_s)
    w_self[act_s[:, 0], act_s[:, 1]] = p[:ns]
    w_pair[act_p[:, 0], act_p[:, 1]] = p[ns:]
    return w_self, w_pair


def _aggregate_batched(g: Graph, arc_values: np.ndarray) -> np.ndarray:
    """Sum arc-axis=-2 values into source nodes for arrays [..., A, X]."""
    moved = np.moveaxis(arc_values, -2, 0)  # [A, ..., X]
    agg = g.aggregate_arcs(moved)
    return np.moveaxis(agg, 0, -2)


def _aggregate_last(g: Graph, arc_values: np.ndarray) -> np.ndarray:
    """Sum arc-axis=-1 values into source nodes for arrays [..., A]."""
    moved = np.moveaxis(arc_values, -1, 0)
    agg = g.aggregate_arcs(moved)
    return np.moveaxis(agg, 0, -1)


def _segment_stats(
    lib: BasisLibrary,
    g: Graph,
    values: np.ndarray,
    times: np.ndarray,
    starts: np.ndarray,
    horizon: int,
    tau: float,
    stride: int,
    w_self: np.ndarray,
    w_pair: np.ndarray,
    act_s: np.ndarray,
    act_p: np.ndarray,
    need_grad: bool,
    loss_cap: float,
    integrator: str = "euler",
):
    """Loss (and optionally exact gradient and Gauss-Newton matrix) of the
    averaged rollout error over a batch of segment starts."""
    B = len(starts)
    n, d = values.shape[1], values.shape[2]
    H = horizon
    P = (len(act_s) + len(act_p)) if need_grad else 0
    x = values[starts].copy()  # [B, n, d]
    t = times[starts].copy()
    S = np.zeros((P, B, n, d)) if need_grad else None
    alive = np.ones(B, dtype=bool)
    seg_sq = np.zeros(B)
    grad = np.zeros(P)
    jtj = np.zeros((P, P))
    src, dst = g.arc_src, g.arc_dst
    A = g.num_arcs
    use_pair = lib.n_pair > 0 and A > 0
    ns = len(act_s)

    if use_pair and need_grad:
        ci, cj = lib.pair_components
        terms_i = [np.nonzero(ci == c)[0] for c in range(d)]
        terms_j = [np.nonzero(cj == c)[0] for c in range(d)]

    def field(xc, tc, Sc):
        """Field value and, when sensitivities are given, their time derivative
        (Jacobian-vector product plus per-coefficient forcing)."""
        if Sc is not None:
            feats, dfeats = lib.self_with_grad(xc, tc[:, None])
        else:
            feats = lib.eval_self(xc, tc[:, None])
        f = feats @ w_self
        agg_pair = None
        if use_pair:
            xi, xj = xc[:, src, :], xc[:, dst, :]
            if Sc is not None:
                pair, gpi, gpj = lib.pair_with_grad_compact(xi, xj)
            else:
                pair = lib.eval_pair(xi, xj)
            agg_pair = _aggregate_batched(g, pair)  # [B, n, K_c]
            f = f + agg_pair @ w_pair
        if Sc is None:
            return f, None
        # Jacobian-vector products of the field on every sensitivity;
        # the state dimension is tiny, so contract it in explicit slabs.
        V = np.tensordot(dfeats, w_self, axes=([2], [0]))  # [B,n,m',M]
        JS = np.zeros((P, B, n, d))
        for m in range(d):
            JS += Sc[:, :, :, m, None] * V[None, :, :, m, :]
        if use_pair:
            for m in range(d):
                ti, tj = terms_i[m], terms_j[m]
                wi = w_pair[ti] if len(ti) else None
                if wi is not None and wi.any():
                    # source-side factor depends only on the source node, so
                    # aggregate the arc Jacobian first (no P-sized arc arrays)
                    agg_ui = _aggregate_batched(g, gpi[:, :, ti] @ wi)  # [B,n,M]
                    JS += Sc[:, :, :, m, None] * agg_ui[None]
                wj = w_pair[tj] if len(tj) else None
                if wj is not None and wj.any():
                    uj_m = gpj[:, :, tj] @ wj  # [B,A,M]
                    s_dst_m = Sc[:, :, dst, m]  # [P,B,A]
                    for M in range(d):
                        if wj[:, M].any():
                            JS[:, :, :, M] += _aggregate_last(g, s_dst_m * uj_m[None, :, :, M])
        if ns:
            JS[np.arange(ns), :, :, act_s[:, 1]] += np.moveaxis(feats[:, :, act_s[:, 0]], -1, 0)
        if len(act_p) and use_pair:
            JS[ns + np.arange(len(act_p)), :, :, act_p[:, 1]] += np.moveaxis(
                agg_pair[:, :, act_p[:, 0]], -1, 0
            )
        return f, JS

    for h in range(1, H + 1):
        f, dS = field(x, t, S)
        if integrator == "midpoint":
            x_mid = x + 0.5 * tau * f
            S_mid = S + 0.5 * tau * dS if need_grad else None
            f, dS = field(x_mid, t + 0.5 * tau, S_mid)
        if need_grad:
            S = S + tau * dS
        x = x + tau * f
        t += tau
        finite = np.isfinite(x).all(axis=(1, 2)) & (np.abs(x).max(axis=(1, 2)) < BLOWUP_LIMIT)
        newly_dead = alive & ~finite
        if newly_dead.any():
            alive = alive & finite
            x[~alive] = 0.0  # frozen; their loss is capped below
            if need_grad:
                S[:, ~alive] = 0.0
        if not alive.any():
            break
        r = x - values[starts + h * stride]
        r[~alive] = 0.0
        seg_sq += np.einsum("bnd,bnd->b", r, r)
        if need_grad:
            S2 = S.reshape(P, -1)
            rflat = r.ravel()
            grad += 2.0 * (S2 @ rflat)
            jtj += S2 @ S2.T

    denom = H * n * d
    seg_loss = np.minimum(seg_sq / denom, loss_cap)
    seg_loss[~alive] = loss_cap
    loss = float(seg_loss.mean())
    if not need_grad:
        return loss, None, None
    scale = 1.0 / (B * denom)
    return loss, grad * scale, jtj * (2.0 * scale)


def rollout_gradient(
    model: ModelSpec,
    g: Graph,
    traj: Trajectory,
    starts,
    horizon: int,
    tau: float | None = None,
    integrator: str = "euler",
) -> tuple[float, np.ndarray]:
    """Averaged rollout loss over ``starts`` and its exact gradient with
    respect to the active coefficients (forward sensitivity)."""
    tau = traj.dt if tau is None else tau
    stride = _stride_for(traj, tau)
    starts = np.atleast_1d(np.asarray(starts, dtype=np.int64))
    if starts.min() < 0 or starts.max() + horizon * stride >= traj.n_steps:
        raise ParameterError("segment exceeds the trajectory")
    act_s, act_p = _active_indices(model.mask)
    loss, grad, _ = _segment_stats(
        model.lib,
        g,
        traj.values,
        traj.times,
        starts,
        horizon,
        tau,
        stride,
        model.w_self,
        model.w_pair,
        act_s,
        act_p,
        need_grad=True,
        loss_cap=1e6,
        integrator=integrator,
    )
    return loss, grad


# ---------------------------------------------------------------------------
# Optimizer
# ---------------------------------------------------------------------------


def fit(
    traj: Trajectory,
    g: Graph,
    mask: SupportMask,
    lib: BasisLibrary,
    cfg: FitConfig | None = None,
    init: SparseCoefficients | None = None,
) -> FitResult:
    """Fit the shared coefficients by minimizing the averaged rollout error.

    Active coefficients start at the support stage's clustered mean (zero
    when absent). Each iteration draws segment starts without replacement
    from a seeded epoch shuffle, computes the exact forward-sensitivity
    gradient and Gauss-Newton matrix, and takes a damped step; rejected
    steps raise the damping. Ten consecutive non-improving iterations halve
    the step scale and restart from the best coefficients (three restarts at
    most, then :class:`OptimizationError`).
    """
    cfg = cfg or FitConfig()
    tau = traj.dt if cfg.tau is None else cfg.tau
    stride = _stride_for(traj, tau)
    n_starts = traj.n_steps - cfg.horizon * stride
    if n_starts < 1:
        raise ParameterError("trajectory must cover at least horizon+1 points")
    act_s, act_p = _active_indices(mask)
    if init is not None:
        p = _pack(init.self_coef, init.pair_coef, act_s, act_p)
    else:
        p = np.zeros(len(act_s) + len(act_p))

    rng = np.random.default_rng(cfg.seed)
    order = rng.permutation(n_starts)
    pos = 0

    def next_batch() -> np.ndarray:
        nonlocal order, pos
        take = min(cfg.batch, n_starts)
        if pos + take > len(order):
            order = rng.permutation(n_starts)
            pos = 0
        batch = order[pos : pos + take]
        pos += take
        return batch

    def stats(pvec: np.ndarray, batch: np.ndarray, need_grad: bool):
        w_self, w_pair = _unpack(pvec, lib, act_s, act_p)
        return _segment_stats(
            lib,
            g,
            traj.values,
            traj.times,
            batch,
            cfg.horizon,
            tau,
            stride,
            w_self,
            w_pair,
            act_s,
            act_p,
            need_grad,
            cfg.loss_cap,
            integrator=cfg.integrator,
        )

    lr = cfg.lr
    mu = cfg.mu0
    best_p = p.copy()
    best_loss = np.inf
    bad_streak = 0
    slow_streak = 0
    stale = 0
    restarts = 0
    converged = False
    history: list[float] = []
    P = len(p)
    eye = np.eye(P)

    it = 0
    for it in range(1, cfg.max_iters + 1):
        batch = next_batch()
        loss, grad, jtj = stats(p, batch, need_grad=True)
        history.append(loss)
        if loss < best_loss * (1.0 - cfg.tol):
            stale = 0
        if loss < best_loss:
            best_loss = loss
            best_p = p.copy()
        diag = np.clip(np.diag(jtj), 1e-30, None)
        accepted = False
        loss_new = loss
        rel_step = np.inf
        for _ in range(8):
            try:
                delta = np.linalg.solve(jtj + mu * np.diag(diag) + 1e-30 * eye, -grad)
            except np.linalg.LinAlgError:
                mu *= 10.0
                continue
            cand = p + lr * delta
            loss_new, _, _ = stats(cand, batch, need_grad=False)
            if np.isfinite(loss_new) and loss_new < loss:
                rel_step = float(np.linalg.norm(lr * delta) / max(np.linalg.norm(p), 1e-12))
                p = cand
                accepted = True
                mu = max(mu / 3.0, 1e-12)
                break
            mu = min(mu * 10.0, 1e12)
        if accepted:
            if loss_new < best_loss * (1.0 - cfg.tol):
                stale = 0
            if loss_new < best_loss:
                best_loss = loss_new
                best_p = p.copy()
            slow = (loss - loss_new) / max(loss, 1e-300) < cfg.tol or rel_step < cfg.step_tol
        else:
            # flat rejection: the damped step cannot improve this batch
            slow = (
                np.isfinite(loss_new)
                and loss < cfg.loss_cap
                and abs(loss_new - loss) <= cfg.tol * max(loss, 1e-300)
            )
        slow_streak = slow_streak + 1 if slow else 0
        stale += 1
        if slow_streak >= 2 or (accepted and loss_new <= 1e-300):
            converged = True
            break
        if stale >= cfg.patience and best_loss < cfg.loss_cap:
            # the best loss has stopped improving; batch-to-batch bouncing at
            # the discretization or noise floor is not divergence
            converged = True
            break
        diverging = (not np.isfinite(loss_new)) or (not accepted and not slow)
        bad_streak = bad_streak + 1 if diverging else 0
        if bad_streak >= 10:
            restarts += 1
            if restarts > 3:
                raise OptimizationError(
                    f"no progress after {restarts - 1} restarts (best loss {best_loss:.3e})"
                )
            lr *= 0.5
            p = best_p.copy()
            mu = cfg.mu0
            bad_streak = 0
            logger.info("fit restart %d: halving step scale to %.3g", restarts, lr)

    w_self, w_pair = _unpack(best_p, lib, act_s, act_p)
    model = ModelSpec(lib=lib, mask=mask, w_self=w_self, w_pair=w_pair)
    logger.info(
        "fit finished after %d iterations (loss %.3e, converged=%s, restarts=%d)",
        it,
        best_loss,
        converged,
        restarts,
    )
    return FitResult(
        model=model, loss_history=history, n_iters=it, restarts=restarts, converged=converged
    )


def refine_mask(
    model: ModelSpec, threshold: float, per_dimension: bool = False
) -> tuple[SupportMask, ModelSpec]:
    """Zero entries with |w| below threshold * max|w| in both mask and
    coefficients; re-fitting afterwards is the caller's choice.

    With ``per_dimension`` the cutoff uses each output dimension's own
    largest magnitude, which keeps slow subsystems (for example a bursting
    neuron's adaptation equation, orders of magnitude below the fast
    variables) out of reach of junk pruned from the fast dimensions.
    """
    if threshold < 0:
        raise ParameterError("threshold must be nonnegative")
    stacked = np.concatenate([np.abs(model.w_self), np.abs(model.w_pair)], axis=0)
    if per_dimension:
        cut = threshold * stacked.max(axis=0, keepdims=True)
    else:
        cut = threshold * (stacked.max() if stacked.size else 0.0)
    keep_self = np.abs(model.w_self) >= cut
    keep_pair = np.abs(model.w_pair) >= cut
    new_self = model.mask.self_mask * keep_self.astype(np.uint8)
    new_pair = model.mask.pair_mask * keep_pair.astype(np.uint8)
    if new_self.sum() + new_pair.sum() == 0:
        raise ParameterError("refine threshold prunes every term")
    mask = SupportMask(self_mask=new_self, pair_mask=new_pair)
    refined = ModelSpec(lib=model.lib, mask=mask, w_self=model.w_self, w_pair=model.w_pair)
    return mask, refined
