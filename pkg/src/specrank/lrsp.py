"""Low-rank subspace proximal operator.

Replaces full singular-value thresholding with shrinkage inside an adaptively
chosen column subspace: score the columns, softly select a budget of them,
orthonormalize the weighted sketch, shrink in the r-dimensional coordinates,
and fuse the inner proposals by their estimated projection residuals.  Every
random element is drawn from seeded generators, so repeated calls with the
same inputs are bitwise identical.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.special import expit

from .errors import DegenerateSelectionError, DimensionError, NumericError
from .svt import svt_full

# Gate argument whose sigmoid rounds to exactly 1.0 in double precision while
# keeping the state finite; used for the exactness regime.
EXACT_GATE_BETA = 50.0


@dataclass(frozen=True)
class LrspConfig:
    """Static parameters of the subspace proximal.

    ``r`` is the target rank, ``kappa`` the column budget, ``theta`` the
    shrinkage threshold applied in the subspace, ``probes`` the Gaussian
    probe count for the residual estimate, and ``inner_steps`` the number of
    proposals generated and fused per application.  The temperature follows
    ``max(tau_min, tau0 * gamma**(t-1))``; ``beta1`` seeds the cumulative
    gate argument which grows by ``c_beta * (1 - rho)`` per inner step, and
    ``nu`` sharpens the residual-aware fusion.
    """

    r: int
    kappa: int
    theta: float
    probes: int = 8
    inner_steps: int = 3
    tau0: float = 1.0
    gamma: float = 0.5
    tau_min: float = 0.1
    beta1: float = 0.5
    c_beta: float = 0.5
    nu: float = 10.0
    seed: int = 0
    eps: float = 1e-12

    def __post_init__(self):
        if self.r < 1 or self.kappa < 1 or self.probes < 1 or self.inner_steps < 1:
            raise ValueError("r, kappa, probes, and inner_steps must all be >= 1")
        if self.r > self.kappa:
            raise ValueError(f"target rank {self.r} exceeds column budget {self.kappa}")
        if not (np.isfinite(self.theta) and self.theta >= 0.0):
            raise ValueError("theta must be finite and >= 0")
        if not (self.tau0 > 0.0 and self.tau_min > 0.0):
            raise ValueError("tau0 and tau_min must be > 0")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie strictly between 0 and 1")
        if not (np.isfinite(self.beta1) and self.beta1 > 0.0):
            raise ValueError("beta1 must be finite and > 0")
        if self.c_beta < 0.0:
            raise ValueError("c_beta must be >= 0")
        if not self.nu > 0.0:
            raise ValueError("nu must be > 0")
        if self.seed < 0:
            raise ValueError("seed must be >= 0")
        if not self.eps > 0.0:
            raise ValueError("eps must be > 0")


@dataclass(frozen=True)
class LrspState:
    """Cross-call state: cumulative gate argument and the importance memory.

    ``memory_g`` is the exponential moving average of column importances from
    previous applications (None before the first one); ``mu`` is its decay.
    """

    beta: float
    memory_g: np.ndarray | None = None
    mu: float = 0.5

    def __post_init__(self):
        if not np.isfinite(self.beta):
            raise ValueError("beta must be finite")
        if not 0.0 <= self.mu <= 1.0:
            raise ValueError("mu must lie in [0, 1]")
        if self.memory_g is not None:
            mem = np.array(self.memory_g, dtype=float, copy=True)
            if mem.ndim != 1:
                raise DimensionError("memory_g must be 1-d")
            if not np.all((mem >= 0.0) & (mem <= 1.0)):
                raise ValueError("memory_g entries must lie in [0, 1]")
            mem.flags.writeable = False
            object.__setattr__(self, "memory_g", mem)


@dataclass(frozen=True)
class Selector:
    """Hard column choice with per-column scalings.

    ``indices`` are distinct column positions; ``weights`` are the matching
    nonnegative scalings (importance gate times soft-selection weight), with
    total mass at most 1.
    """

    indices: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        idx = np.array(self.indices, dtype=int, copy=True)
        wts = np.array(self.weights, dtype=float, copy=True)
        if idx.ndim != 1 or wts.shape != idx.shape:
            raise DimensionError("indices and weights must be 1-d and aligned")
        if idx.size < 1:
            raise ValueError("selector must keep at least one column")
        if np.any(idx < 0) or np.unique(idx).size != idx.size:
            raise ValueError("indices must be distinct and nonnegative")
        if not np.all(np.isfinite(wts)) or np.any(wts < 0.0):
            raise ValueError("weights must be finite and >= 0")
        if wts.sum() > 1.0 + 1e-9:
            raise ValueError("selector weights must sum to at most 1")
        idx.flags.writeable = False
        wts.flags.writeable = False
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "weights", wts)

    @property
    def kappa(self) -> int:
        return self.indices.size


@dataclass(frozen=True)
class SubspaceBasis:
    """Orthonormal d x r basis; ``n_completed`` counts columns that had to be
    filled with random directions because the sketch was rank deficient."""

    q: np.ndarray
    n_completed: int

    def __post_init__(self):
        q = np.array(self.q, dtype=float, copy=True)
        if q.ndim != 2:
            raise DimensionError("basis must be a d x r matrix")
        gram = q.T @ q
        if np.abs(gram - np.eye(q.shape[1])).max() > 1e-10:
            raise ValueError("basis columns are not orthonormal")
        if self.n_completed < 0:
            raise ValueError("n_completed must be >= 0")
        q.flags.writeable = False
        object.__setattr__(self, "q", q)


@dataclass(frozen=True)
class StepDiagnostics:
    """Record of one inner step; ``weight`` is the fusion weight assigned to
    the step's proposal after all steps completed."""

    t: int
    tau: float
    beta: float
    rho_hat: float
    weight: float
    n_completed: int
    elapsed_ns: int


@dataclass(frozen=True)
class LrspDiagnostics:
    steps: tuple[StepDiagnostics, ...]
    total_elapsed_ns: int


def diagnostics_lines(stage: int, diag: LrspDiagnostics) -> list[str]:
    """Serialize one application's diagnostics, one CSV line per inner step."""
    lines = []
    for s in diag.steps:
        fields = (
            str(stage),
            str(s.t),
            format(s.tau, ".17g"),
            format(s.beta, ".17g"),
            format(s.rho_hat, ".17g"),
            format(s.weight, ".17g"),
            str(s.elapsed_ns),
        )
        lines.append(",".join(fields))
    return lines


def _as_matrix(u) -> np.ndarray:
    a = np.asarray(u, dtype=float)
    if a.ndim != 2:
        raise DimensionError(f"expected a d x n matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix entries must be finite")
    return a


def column_importance(u, state: LrspState) -> np.ndarray:
    """Per-column importances in (0, 1) from standardized column norms.

    The raw importance is the sigmoid of the standardized column l2 norm;
    when the state carries a memory vector it is blended in with decay
    ``state.mu`` (the blended vector is also what the memory update stores).
    """
    a = _as_matrix(u)
    norms = np.linalg.norm(a, axis=0)
    z = (norms - norms.mean()) / (norms.std() + 1e-12)
    g = expit(z)
    if state.memory_g is not None:
        if state.memory_g.shape != g.shape:
            raise DimensionError(
                f"memory has {state.memory_g.shape[0]} entries but the matrix has "
                f"{g.shape[0]} columns"
            )
        g = (1.0 - state.mu) * g + state.mu * state.memory_g
    return g


def score_columns(u, seed) -> np.ndarray:
    """Selection scores via a fixed seeded random projection.

    Each column is projected through a seeded Gaussian m x d matrix
    (m = min(d, 16)) and scored against a seeded query vector, so scores are
    deterministic per seed, linear in each column, and identical for
    duplicate columns.
    """
    a = _as_matrix(u)
    d = a.shape[0]
    m = min(d, 16)
    rng = np.random.default_rng(seed)
    p = rng.standard_normal((m, d))
    q = rng.standard_normal(m)
    return q @ (p @ a)


def soft_topk(s, kappa: int, tau: float) -> np.ndarray:
    """Differentiable top-kappa weights over scores.

    Scores are shifted by the (kappa+1)-th largest value (ties resolved
    toward lower indices), scaled by the temperature, passed through a
    softplus, and normalized to sum to 1.
    """
    s = np.asarray(s, dtype=float)
    if s.ndim != 1:
        raise DimensionError(f"scores must be 1-d, got shape {s.shape}")
    if not np.all(np.isfinite(s)):
        raise ValueError("scores must be finite")
    n = s.size
    if not 1 <= kappa < n:
        raise ValueError(f"kappa must satisfy 1 <= kappa < {n}, got {kappa}")
    if not tau > 0.0:
        raise ValueError("tau must be > 0")
    order = np.argsort(-s, kind="stable")
    pivot = s[order[kappa]]
    shifted = (s - pivot) / tau
    # softplus via logaddexp keeps large shifted scores from overflowing
    sp = np.logaddexp(0.0, shifted)
    return sp / sp.sum()


def build_selector(g, w, kappa: int) -> Selector:
    """Keep the kappa heaviest soft weights; scale each kept column by g * w."""
    g = np.asarray(g, dtype=float)
    w = np.asarray(w, dtype=float)
    if g.ndim != 1 or g.shape != w.shape:
        raise DimensionError("g and w must be 1-d and aligned")
    if not 1 <= kappa <= w.size:
        raise ValueError(f"kappa must satisfy 1 <= kappa <= {w.size}, got {kappa}")
    if not np.any(w > 0.0):
        raise DegenerateSelectionError("all column weights are zero")
    order = np.argsort(-w, kind="stable")
    idx = order[:kappa]
    return Selector(idx, g[idx] * w[idx])


def sparse_pool(u, omega: Selector) -> np.ndarray:
    """Weighted sum of the selected columns."""
    a = _as_matrix(u)
    if omega.indices.max() >= a.shape[1]:
        raise DimensionError("selector indices exceed column count")
    return a[:, omega.indices] @ omega.weights


def orthonormal_subspace(u, omega: Selector, r: int, seed=0) -> SubspaceBasis:
    """Orthonormal basis of the selected-and-weighted sketch.

    Column-pivoted QR of the d x kappa sketch supplies the leading
    directions; if the sketch's numerical rank falls short of ``r``, the
    remaining columns are seeded random vectors orthonormalized against the
    computed ones, and the count of such fills is reported.
    """
    a = _as_matrix(u)
    d, n = a.shape
    if omega.indices.max() >= n:
        raise DimensionError("selector indices exceed column count")
    if r < 1 or r > d or r > omega.kappa:
        raise ValueError(f"rank must satisfy 1 <= r <= min(d={d}, kappa={omega.kappa})")
    sketch = a[:, omega.indices] * omega.weights[None, :]
    qf, rf, _ = scipy.linalg.qr(sketch, mode="economic", pivoting=True)
    diag = np.abs(np.diag(rf))
    if diag.size == 0 or diag[0] == 0.0:
        rank = 0
    else:
        rank = int(np.count_nonzero(diag > max(sketch.shape) * np.finfo(float).eps * diag[0]))
    keep = min(rank, r)
    q = np.empty((d, r))
    q[:, :keep] = qf[:, :keep]
    rng = np.random.default_rng(seed)
    filled = keep
    attempts = 0
    while filled < r:
        attempts += 1
        if attempts > 100 * r:
            raise NumericError("could not complete an orthonormal basis")
        v = rng.standard_normal(d)
        for _ in range(2):
            v = v - q[:, :filled] @ (q[:, :filled].T @ v)
        nv = np.linalg.norm(v)
        if nv > 1e-8:
            q[:, filled] = v / nv
            filled += 1
    return SubspaceBasis(q, r - keep)


def residual_ratio(u, q, g, probes: int, seed, eps: float = 1e-12) -> float:
    """Probed fraction of importance-weighted energy outside span(q).

    A seeded Gaussian block of ``probes`` columns is scaled per column by the
    importances and pushed through the matrix; the ratio of the projected
    residual to the total (plus ``eps``) lands in [0, 1).
    """
    a = _as_matrix(u)
    q = np.asarray(q, dtype=float)
    g = np.asarray(g, dtype=float)
    if q.ndim != 2 or q.shape[0] != a.shape[0]:
        raise DimensionError("basis rows must match the matrix")
    if g.shape != (a.shape[1],):
        raise DimensionError("importances must have one entry per column")
    if probes < 1:
        raise ValueError("probes must be >= 1")
    if not eps > 0.0:
        raise ValueError("eps must be > 0")
    rng = np.random.default_rng(seed)
    xi = rng.standard_normal((a.shape[1], probes))
    m = a @ (g[:, None] * xi)
    resid = m - q @ (q.T @ m)
    return float(np.linalg.norm(resid) / (np.linalg.norm(m) + eps))


def refine_and_increment(rho_tilde: float, pooled, config: LrspConfig) -> tuple[float, float]:
    """Pass the residual estimate through and derive the gate increment.

    The refinement is the identity; the increment ``c_beta * (1 - rho)``
    grows the gate faster when the subspace captured more energy.  ``pooled``
    is accepted for interface fidelity but does not affect the rule.
    """
    rho_tilde = float(rho_tilde)
    if not 0.0 <= rho_tilde < 1.0:
        raise ValueError(f"rho_tilde must lie in [0, 1), got {rho_tilde}")
    np.asarray(pooled, dtype=float)
    return rho_tilde, config.c_beta * (1.0 - rho_tilde)


def temperature(t: int, config: LrspConfig) -> float:
    """Exponential selection temperature with a floor."""
    if t < 1:
        raise ValueError("t must be >= 1")
    return max(config.tau_min, config.tau0 * config.gamma ** (t - 1))


def subspace_proximal(u, q, theta: float, beta: float) -> np.ndarray:
    """Shrink inside span(q), gated against the plain projection.

    The input is compressed to B = q.T u, singular values of B are
    soft-thresholded, the result is blended with B by the gate
    sigmoid(beta), and mapped back through q.  Output rank is at most the
    basis width.
    """
    a = _as_matrix(u)
    q = np.asarray(q, dtype=float)
    if q.ndim != 2 or q.shape[0] != a.shape[0]:
        raise DimensionError("basis rows must match the matrix")
    if np.abs(q.T @ q - np.eye(q.shape[1])).max() > 1e-8:
        raise ValueError("q columns must be orthonormal")
    if not np.isfinite(beta):
        raise ValueError("beta must be finite")
    b = q.T @ a
    alpha = float(expit(beta))
    b_tilde = (1.0 - alpha) * b + alpha * svt_full(b, theta)
    return q @ b_tilde


def fusion_weights(rho_hats, nu: float) -> np.ndarray:
    """Softmin weights over residual estimates; sums to 1."""
    r = np.asarray(rho_hats, dtype=float)
    if r.ndim != 1 or r.size < 1:
        raise ValueError("rho_hats must be a nonempty 1-d sequence")
    if not np.all(np.isfinite(r)):
        raise ValueError("rho_hats must be finite")
    if not nu > 0.0:
        raise ValueError("nu must be > 0")
    z = -nu * r
    z = z - z.max()
    e = np.exp(z)
    return e / e.sum()


def fuse_proposals(proposals, rho_hats, nu: float) -> np.ndarray:
    """Residual-aware convex combination of proposals."""
    if len(proposals) == 0:
        raise ValueError("need at least one proposal")
    if len(proposals) != len(rho_hats):
        raise DimensionError("one residual estimate per proposal required")
    mats = [np.asarray(p, dtype=float) for p in proposals]
    shape = mats[0].shape
    for m in mats[1:]:
        if m.shape != shape:
            raise DimensionError("proposals must share one shape")
    w = fusion_weights(rho_hats, nu)
    out = np.zeros(shape)
    for wt, m in zip(w, mats):
        out += wt * m
    return out


def lrsp_apply(u, config: LrspConfig, state: LrspState):
    """Run the full subspace proximal: T inner steps plus fusion.

    Per inner step: soft column selection at the scheduled temperature,
    sketch orthonormalization, residual probing, gate increment, and the
    gated subspace shrinkage, all from seeds derived from ``config.seed``.
    With ``kappa`` equal to the column count the selection is uniform over
    all columns (the soft pivot needs a left-out column), which together with
    ``r = d`` and a saturated gate reproduces full singular-value
    thresholding.

    Returns the fused matrix, the advanced state, and per-step diagnostics.
    """
    t_start = time.perf_counter_ns()
    a = _as_matrix(u)
    d, n = a.shape
    if config.kappa > n:
        raise DimensionError(f"column budget {config.kappa} exceeds {n} columns")
    if config.r > d:
        raise DimensionError(f"target rank {config.r} exceeds {d} rows")
    if state.memory_g is not None and state.memory_g.shape != (n,):
        raise DimensionError(
            f"memory has {state.memory_g.shape[0]} entries but the matrix has {n} columns"
        )

    g = column_importance(a, state)
    scores = score_columns(a, config.seed)
    beta = float(state.beta)
    proposals = []
    rho_hats = []
    records = []
    for t in range(1, config.inner_steps + 1):
        t_step = time.perf_counter_ns()
        tau = temperature(t, config)
        if config.kappa == n:
            w = np.full(n, 1.0 / n)
        else:
            w = soft_topk(scores, config.kappa, tau)
        omega = build_selector(g, w, config.kappa)
        basis = orthonormal_subspace(a, omega, config.r, seed=[config.seed, 202, t])
        rho = residual_ratio(a, basis.q, g, config.probes, [config.seed, 101, t], config.eps)
        pooled = sparse_pool(a, omega)
        rho_hat, delta_beta = refine_and_increment(rho, pooled, config)
        proposals.append(subspace_proximal(a, basis.q, config.theta, beta))
        rho_hats.append(rho_hat)
        records.append((t, tau, beta, rho_hat, basis.n_completed, time.perf_counter_ns() - t_step))
        beta += delta_beta

    weights = fusion_weights(rho_hats, config.nu)
    out = np.zeros((d, n))
    for wt, p in zip(weights, proposals):
        out += wt * p
    steps = tuple(
        StepDiagnostics(
            t=rec[0],
            tau=rec[1],
            beta=rec[2],
            rho_hat=rec[3],
            weight=float(wt),
            n_completed=rec[4],
            elapsed_ns=rec[5],
        )
        for rec, wt in zip(records, weights)
    )
    diag = LrspDiagnostics(steps=steps, total_elapsed_ns=time.perf_counter_ns() - t_start)
    new_state = LrspState(beta=beta, memory_g=g, mu=state.mu)
    return out, new_state, diag
