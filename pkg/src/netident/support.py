"""Support discovery: sampled per-node sparse regressions and cluster consensus.

A small node subset is regressed against the candidate libraries with a
Lasso penalty; the per-node coefficient vectors are clustered with DBSCAN,
and the union of clusters votes a single binary mask of active terms that
every later stage treats as a hard sparsity constraint.
"""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .basis import BasisLibrary
from .errors import ConsensusError, InsufficientDataError, ParameterError
from .graph import Graph
from .lasso import lasso_standardized
from .trajectory import Trajectory

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SupportConfig:
    """Tunables of the support-discovery stage."""

    k_sample: int = 50
    lam: float | None = None  # None = automatic per-node choice
    lambda_scale: float = 1e-3  # lam = lambda_scale * max|X'y| when automatic
    noise_factor: float = 1.0  # noise-adaptive floor multiplier (0 disables)
    lambda_cap: float = 0.1  # automatic lam never exceeds lambda_cap * lambda_max
    eps: float = 0.1
    m_min: int = 5
    delta: float = 0.0
    delta_rel: float = 0.01  # per-dimension relative floor on the consensus vote
    pooled: bool = True  # union the sample-pooled regression support into the mask
    pool_count: int = 5  # disjoint sub-pools for the stability vote (<=1 disables)
    pool_vote: float = 0.8  # fraction of sub-pools that must agree on a term
    node_max_sweeps: int = 400  # sweep budget per node vote (pooled solve gets the full budget)
    seed: int = 0
    derivative_scheme: str = "central"

    def __post_init__(self):
        if self.m_min < 2:
            raise ParameterError("m_min must be >= 2")
        if self.k_sample < self.m_min:
            raise ParameterError("k_sample must be >= m_min")
        if self.lam is not None and self.lam < 0:
            raise ParameterError("lambda must be nonnegative")
        if self.eps <= 0:
            raise ParameterError("eps must be positive")
        if self.derivative_scheme not in ("central", "forward"):
            raise ParameterError("derivative_scheme must be 'central' or 'forward'")

    def to_dict(self) -> dict:
        return {
            "k_sample": self.k_sample,
            "lam": self.lam,
            "lambda_scale": self.lambda_scale,
            "noise_factor": self.noise_factor,
            "lambda_cap": self.lambda_cap,
            "eps": self.eps,
            "m_min": self.m_min,
            "delta": self.delta,
            "delta_rel": self.delta_rel,
            "pooled": self.pooled,
            "pool_count": self.pool_count,
            "pool_vote": self.pool_vote,
            "node_max_sweeps": self.node_max_sweeps,
            "seed": self.seed,
            "derivative_scheme": self.derivative_scheme,
        }


@dataclass(frozen=True)
class SparseCoefficients:
    """Per-node regression result: one column per output state dimension."""

    self_coef: np.ndarray  # [K_f, d]
    pair_coef: np.ndarray  # [K_c, d]

    def __post_init__(self):
        object.__setattr__(self, "self_coef", np.asarray(self.self_coef, dtype=float))
        object.__setattr__(self, "pair_coef", np.asarray(self.pair_coef, dtype=float))
        if not (np.all(np.isfinite(self.self_coef)) and np.all(np.isfinite(self.pair_coef))):
            raise ParameterError("coefficients must be finite")

    def flatten(self) -> np.ndarray:
        return np.concatenate([self.self_coef.ravel(), self.pair_coef.ravel()])


@dataclass(frozen=True)
class SupportMask:
    """Binary selector of active library terms, per output dimension."""

    self_mask: np.ndarray  # [K_f, d] in {0,1}
    pair_mask: np.ndarray  # [K_c, d] in {0,1}

    def __post_init__(self):
        sm = np.asarray(self.self_mask, dtype=np.uint8)
        pm = np.asarray(self.pair_mask, dtype=np.uint8)
        if np.any(sm > 1) or np.any(pm > 1):
            raise ParameterError("mask entries must be 0 or 1")
        if sm.sum() + pm.sum() == 0:
            raise ParameterError("mask must have at least one active entry")
        object.__setattr__(self, "self_mask", sm)
        object.__setattr__(self, "pair_mask", pm)

    @property
    def n_active(self) -> int:
        return int(self.self_mask.sum() + self.pair_mask.sum())

    def to_dict(self) -> dict:
        return {"self": self.self_mask.tolist(), "pair": self.pair_mask.tolist()}

    @staticmethod
    def from_dict(d: dict) -> "SupportMask":
        return SupportMask(
            self_mask=np.asarray(d["self"], dtype=np.uint8),
            pair_mask=np.asarray(d["pair"], dtype=np.uint8),
        )


@dataclass(frozen=True)
class SupportResult:
    """Consensus mask plus diagnostics from the sampled regressions."""

    mask: SupportMask
    init_coefficients: SparseCoefficients  # for fit initialization
    per_node: list[SparseCoefficients]
    labels: np.ndarray
    sampled_nodes: np.ndarray
    pooled: SparseCoefficients | None = None  # shared-coefficient regression over the sample


# ---------------------------------------------------------------------------
# Numerical derivatives
# ---------------------------------------------------------------------------


def estimate_derivatives(traj: Trajectory, scheme: str = "central") -> Trajectory:
    """Fill ``derivs`` with finite differences of the observed states.

    Central differences at interior points with second-order one-sided
    stencils at the endpoints; the forward scheme uses one-step differences.
    """
    T = traj.n_steps
    if T < 3:
        raise InsufficientDataError("need at least 3 time points for derivatives")
    dt = traj.dt
    x = traj.values
    d = np.empty_like(x)
    if scheme == "central":
        d[1:-1] = (x[2:] - x[:-2]) / (2.0 * dt)
        d[0] = (-3.0 * x[0] + 4.0 * x[1] - x[2]) / (2.0 * dt)
        d[-1] = (3.0 * x[-1] - 4.0 * x[-2] + x[-3]) / (2.0 * dt)
    elif scheme == "forward":
        d[:-1] = (x[1:] - x[:-1]) / dt
        d[-1] = (x[-1] - x[-2]) / dt
    else:
        raise ParameterError("scheme must be 'central' or 'forward'")
    return Trajectory(values=x, times=traj.times, derivs=d)


# ---------------------------------------------------------------------------
# Per-node sparse regression
# ---------------------------------------------------------------------------


def node_design_matrix(
    traj: Trajectory, g: Graph, lib: BasisLibrary, node: int
) -> tuple[np.ndarray, np.ndarray]:
    """Design matrix [T, K_f + K_c] and derivative targets [T, d] for one node.

    Coupling features are summed over the node's neighbors before regression:
    coefficients are shared across edges, so the summed feature is the
    correct regressor and the design stays T-by-(K_f + K_c).
    """
    if traj.derivs is None:
        raise ParameterError("trajectory needs derivatives; call estimate_derivatives first")
    if not 0 <= node < g.n:
        raise ParameterError("node id out of range")
    T = traj.n_steps
    xs = traj.values[:, node, :]  # [T, d]
    feats_self = lib.eval_self(xs, traj.times)  # [T, K_f]
    neigh = g.neighbors_of(node)
    if len(neigh) and lib.n_pair:
        xi = np.repeat(xs[:, None, :], len(neigh), axis=1)  # [T, deg, d]
        xj = traj.values[:, neigh, :]
        pair = lib.eval_pair(xi, xj).sum(axis=1)  # [T, K_c]
    else:
        pair = np.zeros((T, lib.n_pair))
    X = np.concatenate([feats_self, pair], axis=1)
    return X, traj.derivs[:, node, :]


def _choose_lambda(X: np.ndarray, y: np.ndarray, cfg: SupportConfig) -> float:
    """Automatic penalty on unit-norm scaled columns: a fixed fraction of
    lambda_max with a noise-adaptive floor estimated from the least-squares
    residual (universal threshold)."""
    if X.size == 0:
        return 0.0
    T = X.shape[0]
    scale = np.sqrt(np.einsum("ij,ij->j", X, X) / T)
    ok = scale > 1e-12 * max(1.0, float(np.abs(X).max()))
    Xs = np.zeros_like(X)
    Xs[:, ok] = X[:, ok] / scale[ok]
    lam_max = float(np.abs(Xs.T @ y).max())
    lam = cfg.lambda_scale * lam_max
    if cfg.noise_factor > 0:
        K = X.shape[1]
        coef, *_ = np.linalg.lstsq(Xs, y, rcond=None)
        resid = y - Xs @ coef
        dof = max(T - np.linalg.matrix_rank(Xs), 1)
        sigma = float(np.sqrt(resid @ resid / dof))
        lam_noise = cfg.noise_factor * sigma * np.sqrt(2.0 * np.log(max(K, 2)) * T)
        # the universal threshold assumes iid noise; under structural model
        # error (e.g. a partly wrong graph) the residual is correlated and the
        # floor overshoots, so cap it well below lambda_max
        lam = min(max(lam, lam_noise), cfg.lambda_cap * lam_max)
    return lam


def node_regression(
    traj: Trajectory,
    g: Graph,
    lib: BasisLibrary,
    node: int,
    lam: float | None = None,
    cfg: SupportConfig | None = None,
    design: tuple[np.ndarray, np.ndarray] | None = None,
) -> SparseCoefficients:
    """Lasso regression of one node's derivatives on the candidate features.

    One independent solve per output state dimension. ``lam=None`` selects
    the penalty automatically per dimension (see :func:`_choose_lambda`).
    """
    cfg = cfg or SupportConfig()
    X, Y = design if design is not None else node_design_matrix(traj, g, lib, node)
    d = Y.shape[1]
    coef = np.zeros((X.shape[1], d))
    for dim in range(d):
        y = Y[:, dim]
        lam_dim = _choose_lambda(X, y, cfg) if lam is None else lam
        # a constant library term is penalized like any other column, so the
        # columns are scaled to unit norm but not centered
        fit = lasso_standardized(
            X, y, lam_dim, fit_intercept=False, max_sweeps=cfg.node_max_sweeps
        )
        coef[:, dim] = fit.coef
    return SparseCoefficients(self_coef=coef[: lib.n_self], pair_coef=coef[lib.n_self :])


def pooled_regression(
    traj: Trajectory,
    g: Graph,
    lib: BasisLibrary,
    nodes: np.ndarray,
    lam: float | None = None,
    cfg: SupportConfig | None = None,
    designs: list[tuple[np.ndarray, np.ndarray]] | None = None,
) -> SparseCoefficients:
    """Single Lasso over the stacked designs of several nodes.

    Stacking enforces the node-invariance assumption during support
    discovery: representations that need node-dependent coefficients (the
    classic ambiguity of per-node views on contact-style couplings, where a
    neighbor sum minus degree-times-self mimics a diffusive term) no longer
    fit, so the shared sparse solution is far better identified. Cost stays
    proportional to the sample size, not the network size.
    """
    cfg = cfg or SupportConfig()
    blocks = designs if designs is not None else [
        node_design_matrix(traj, g, lib, int(s)) for s in nodes
    ]
    X = np.concatenate([b[0] for b in blocks], axis=0)
    Y = np.concatenate([b[1] for b in blocks], axis=0)
    d = Y.shape[1]
    coef = np.zeros((X.shape[1], d))
    for dim in range(d):
        y = Y[:, dim]
        lam_dim = _choose_lambda(X, y, cfg) if lam is None else lam
        fit = lasso_standardized(X, y, lam_dim, fit_intercept=False)
        coef[:, dim] = fit.coef
    return SparseCoefficients(self_coef=coef[: lib.n_self], pair_coef=coef[lib.n_self :])


def _pick(pooled_vals: np.ndarray, fallback: np.ndarray | None, mask: np.ndarray) -> np.ndarray:
    out = pooled_vals * mask
    if fallback is not None:
        missing = (out == 0) & (mask > 0)
        out = np.where(missing, fallback * mask, out)
    return out


def _stability_vote(traj, g, lib, nodes, designs, cfg: SupportConfig):
    """Activity vote over disjoint sub-pools of the sampled nodes.

    Each sub-pool gets its own shared-coefficient Lasso; a term enters the
    mask only when at least ``pool_vote`` of the sub-pools select it. Terms
    that merely absorb node-specific structural error (wrong or missing
    edges) fail the vote because their identity shifts from pool to pool.
    """
    if cfg.pool_count <= 1 or len(nodes) < 2 * cfg.pool_count:
        return None
    n_pools = cfg.pool_count
    votes_self = np.zeros((lib.n_self, lib.state_dim))
    votes_pair = np.zeros((lib.n_pair, lib.state_dim))
    for p in range(n_pools):
        idx = np.arange(p, len(nodes), n_pools)
        sub = pooled_regression(
            traj, g, lib, nodes[idx], lam=cfg.lam, cfg=cfg, designs=[designs[i] for i in idx]
        )
        votes_self += np.abs(sub.self_coef) > 0
        votes_pair += np.abs(sub.pair_coef) > 0
    need = int(np.ceil(cfg.pool_vote * n_pools))
    return (votes_self >= need).astype(np.uint8), (votes_pair >= need).astype(np.uint8)


# ---------------------------------------------------------------------------
# Density-based clustering (standard DBSCAN, Euclidean metric)
# ---------------------------------------------------------------------------


def dbscan(points: np.ndarray, eps: float, m_min: int) -> np.ndarray:
    """Label points with cluster ids (noise = -1); deterministic in input order.

    A point is a core point when its eps-ball (itself included) holds at
    least ``m_min`` points; clusters grow breadth-first from core points in
    index order.
    """
    points = np.asarray(points, dtype=float)
    if points.ndim != 2 or len(points) == 0:
        raise ParameterError("need a nonempty 2-D point array")
    if eps <= 0 or m_min < 1:
        raise ParameterError("eps must be positive and m_min >= 1")
    n = len(points)
    d2 = ((points[:, None, :] - points[None, :, :]) ** 2).sum(-1)
    within = d2 <= eps * eps
    n_within = within.sum(axis=1)
    core = n_within >= m_min
    labels = np.full(n, -1, dtype=np.int64)
    cluster = 0
    for start in range(n):
        if labels[start] != -1 or not core[start]:
            continue
        frontier = [start]
        labels[start] = cluster
        while frontier:
            p = frontier.pop(0)
            if not core[p]:
                continue
            for q in np.nonzero(within[p])[0]:
                if labels[q] == -1:
                    labels[q] = cluster
                    frontier.append(int(q))
        cluster += 1
    return labels


# ---------------------------------------------------------------------------
# Consensus
# ---------------------------------------------------------------------------


def consensus_mask(
    coefficients: list[SparseCoefficients],
    labels: np.ndarray,
    delta: float = 0.0,
    delta_rel: float = 0.01,
) -> SupportMask:
    """Vote a binary mask from all clustered (non-noise) coefficient vectors.

    An entry activates when the mean absolute coefficient across the pooled
    clusters exceeds ``delta``. ``delta_rel`` adds a per-output-dimension
    relative floor (a fraction of that dimension's largest mean magnitude)
    so vanishing spurious terms cannot ride in on a strict zero threshold.
    """
    labels = np.asarray(labels)
    if len(labels) != len(coefficients):
        raise ParameterError("one label per coefficient vector required")
    keep = labels >= 0
    if not keep.any():
        raise ConsensusError(
            "all sampled regressions were labeled noise; increase eps or sample more nodes"
        )
    sel = [c for c, k in zip(coefficients, keep) if k]
    mean_self = np.mean([np.abs(c.self_coef) for c in sel], axis=0)
    mean_pair = np.mean([np.abs(c.pair_coef) for c in sel], axis=0)
    d = mean_self.shape[1]
    thresh = np.full(d, float(delta))
    if delta_rel > 0:
        stacked = np.concatenate([mean_self, mean_pair], axis=0)
        dim_max = stacked.max(axis=0) if len(stacked) else np.zeros(d)
        thresh = np.maximum(thresh, delta_rel * dim_max)
    self_mask = (mean_self > thresh).astype(np.uint8)
    pair_mask = (mean_pair > thresh).astype(np.uint8)
    if self_mask.sum() + pair_mask.sum() == 0:
        raise ConsensusError(
            "consensus produced an empty mask; lower the penalty or threshold"
        )
    return SupportMask(self_mask=self_mask, pair_mask=pair_mask)


def clustered_mean(
    coefficients: list[SparseCoefficients], labels: np.ndarray, mask: SupportMask
) -> SparseCoefficients:
    """Signed mean of the clustered coefficient vectors, restricted to the mask."""
    keep = np.asarray(labels) >= 0
    sel = [c for c, k in zip(coefficients, keep) if k]
    mean_self = np.mean([c.self_coef for c in sel], axis=0) * mask.self_mask
    mean_pair = np.mean([c.pair_coef for c in sel], axis=0) * mask.pair_mask
    return SparseCoefficients(self_coef=mean_self, pair_coef=mean_pair)


def discover_support(
    traj: Trajectory,
    g: Graph,
    lib: BasisLibrary,
    cfg: SupportConfig | None = None,
    threads: int = 1,
) -> SupportResult:
    """Sample nodes, regress each, cluster, and return the consensus mask.

    Nodes are sampled uniformly without replacement (zero-degree nodes are
    skipped when the library has coupling terms, since they carry no coupling
    information). The result is independent of the thread count.
    """
    cfg = cfg or SupportConfig()
    if cfg.k_sample > g.n:
        raise ParameterError("cannot sample more nodes than the graph has")
    work = traj if traj.derivs is not None else estimate_derivatives(traj, cfg.derivative_scheme)
    eligible = np.arange(g.n)
    if lib.n_pair:
        eligible = eligible[g.degrees > 0]
    if len(eligible) == 0:
        raise ConsensusError("no eligible nodes to sample (all isolated)")
    k = min(cfg.k_sample, len(eligible))
    if k < cfg.k_sample:
        logger.warning("only %d eligible nodes; sampling all of them", k)
    rng = np.random.default_rng(cfg.seed)
    nodes = np.sort(rng.choice(eligible, size=k, replace=False))

    def solve(node: int):
        design = node_design_matrix(work, g, lib, int(node))
        return design, node_regression(work, g, lib, int(node), lam=cfg.lam, cfg=cfg, design=design)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            solved = list(pool.map(solve, nodes))
    else:
        solved = [solve(node) for node in nodes]
    designs = [s[0] for s in solved]
    per_node = [s[1] for s in solved]

    flat = np.stack([c.flatten() for c in per_node])
    scales = np.median(np.abs(flat), axis=0)
    scales[scales < 1e-12] = 1.0
    labels = dbscan(flat / scales, eps=cfg.eps, m_min=cfg.m_min)
    logger.info(
        "support discovery: %d sampled nodes, %d clustered, %d noise",
        len(nodes),
        int((labels >= 0).sum()),
        int((labels < 0).sum()),
    )
    mask = init = None
    consensus_exc: ConsensusError | None = None
    try:
        mask = consensus_mask(per_node, labels, delta=cfg.delta, delta_rel=cfg.delta_rel)
        init = clustered_mean(per_node, labels, mask)
    except ConsensusError as exc:
        if not cfg.pooled:
            raise
        consensus_exc = exc
    pooled = None
    if cfg.pooled:
        pooled = pooled_regression(work, g, lib, nodes, lam=cfg.lam, cfg=cfg, designs=designs)
        pooled_self = (np.abs(pooled.self_coef) > 0).astype(np.uint8)
        pooled_pair = (np.abs(pooled.pair_coef) > 0).astype(np.uint8)
        vote = _stability_vote(work, g, lib, nodes, designs, cfg)
        if vote is not None:
            vote_self, vote_pair = vote
            if vote_self.sum() + vote_pair.sum() > 0:
                # terms confirmed by a supermajority of disjoint sub-pools;
                # node-specific structural error cannot vote consistently
                base = init
                mask = SupportMask(self_mask=vote_self, pair_mask=vote_pair)
                init = SparseCoefficients(
                    self_coef=_pick(pooled.self_coef, base.self_coef if base else None, vote_self),
                    pair_coef=_pick(pooled.pair_coef, base.pair_coef if base else None, vote_pair),
                )
                for dim in range(mask.self_mask.shape[1]):
                    active = [lib.self_names[i] for i in np.nonzero(mask.self_mask[:, dim])[0]]
                    active += [lib.pair_names[i] for i in np.nonzero(mask.pair_mask[:, dim])[0]]
                    logger.debug("support mask dim %d: %s", dim, active)
                return SupportResult(
                    mask=mask,
                    init_coefficients=init,
                    per_node=per_node,
                    labels=labels,
                    sampled_nodes=nodes,
                    pooled=pooled,
                )
        if pooled_self.sum() + pooled_pair.sum() == 0 and mask is None:
            raise consensus_exc or ConsensusError("pooled regression selected no terms")
        if mask is None:
            logger.warning(
                "per-node consensus failed (%s); using the pooled support alone", consensus_exc
            )
            mask = SupportMask(self_mask=pooled_self, pair_mask=pooled_pair)
            init = pooled
        else:
            mask = SupportMask(
                self_mask=np.maximum(mask.self_mask, pooled_self),
                pair_mask=np.maximum(mask.pair_mask, pooled_pair),
            )
            # pooled values are the better start where available; clustered mean elsewhere
            init = SparseCoefficients(
                self_coef=np.where(pooled_self, pooled.self_coef, init.self_coef * mask.self_mask),
                pair_coef=np.where(pooled_pair, pooled.pair_coef, init.pair_coef * mask.pair_mask),
            )
    for dim in range(mask.self_mask.shape[1]):
        active = [lib.self_names[i] for i in np.nonzero(mask.self_mask[:, dim])[0]]
        active += [lib.pair_names[i] for i in np.nonzero(mask.pair_mask[:, dim])[0]]
        logger.debug("support mask dim %d: %s", dim, active)
    return SupportResult(
        mask=mask,
        init_coefficients=init,
        per_node=per_node,
        labels=labels,
        sampled_nodes=nodes,
        pooled=pooled,
    )
