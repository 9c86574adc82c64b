"""Executable checks of the variance bounds and related diagnostics.

Closed-form checks (factorised-Gaussian line bound, dropout convexity,
hypercube corollary) use exact output moments and an absolute tolerance.
Monte Carlo checks (convex-hull bound with dropped inputs, the mean-gap
bound for deep dropped-input dropout) carry standard errors and use a
4-standard-error slack.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import nnls

from .networks import (FFGParams, MCDOParams, NetworkSpec,
                       closed_form_1hl_moments, closed_form_1hl_moments_mcdo,
                       forward, sample_params)
from .rng import RngStream

CLOSED_FORM_TOL = 1e-9
HULL_RESIDUAL_TOL = 1e-8
MC_SE_FACTOR = 4.0
_MC_BLOCK = 20_000


@dataclass(frozen=True)
class LineProbe:
    """A line x(lam) = direction * lam + offset with an evaluation grid."""

    direction: np.ndarray
    offset: np.ndarray
    lam_lo: float = -1.0
    lam_hi: float = 1.0
    grid_size: int = 21

    def __post_init__(self):
        object.__setattr__(self, "direction",
                           np.asarray(self.direction, dtype=float))
        object.__setattr__(self, "offset", np.asarray(self.offset, dtype=float))
        if self.direction.shape != self.offset.shape:
            raise ValueError("direction and offset must share a shape")
        if not self.lam_lo < 0.0 < self.lam_hi:
            raise ValueError("grid must straddle lambda = 0")

    @property
    def axis_orthogonal(self) -> bool:
        """Whether direction_d * offset_d = 0 holds in every coordinate."""
        return bool(np.all(np.abs(self.direction * self.offset) < 1e-12))

    def lambdas(self) -> np.ndarray:
        grid = np.linspace(self.lam_lo, self.lam_hi, self.grid_size)
        return np.sort(np.append(grid, 0.0)) if 0.0 not in grid else grid

    def points(self, lambdas: np.ndarray | None = None) -> np.ndarray:
        lam = self.lambdas() if lambdas is None else np.asarray(lambdas)
        return lam[:, None] * self.direction + self.offset

    def describe(self) -> str:
        return (f"line dir={np.round(self.direction, 4).tolist()} "
                f"offset={np.round(self.offset, 4).tolist()} "
                f"lam=[{self.lam_lo:g},{self.lam_hi:g}]x{self.grid_size}")


@dataclass
class BoundReport:
    """Outcome of one bound check."""

    probe: str
    max_violation: float
    tolerance: float
    violating_inputs: list = field(default_factory=list)
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return bool(self.max_violation <= self.tolerance)

    def to_json(self) -> str:
        def plain(v):
            if isinstance(v, (np.floating, np.integer)):
                return float(v)
            if isinstance(v, (np.bool_, bool)):
                return bool(v)
            return v

        return json.dumps({
            "probe": self.probe,
            "max_violation": float(self.max_violation),
            "tolerance": float(self.tolerance),
            "passed": self.passed,
            "violating_inputs": [np.asarray(v).tolist()
                                 for v in self.violating_inputs],
            "details": {k: plain(v) for k, v in self.details.items()},
        })


def variance_on_line(spec: NetworkSpec, dist: FFGParams | MCDOParams,
                     probe: LineProbe) -> tuple[np.ndarray, np.ndarray]:
    """(lambdas, closed-form Var[f]) along the probe, first output."""
    lam = probe.lambdas()
    x = probe.points(lam)
    if isinstance(dist, FFGParams):
        m = closed_form_1hl_moments(spec, dist, x)
    else:
        m = closed_form_1hl_moments_mcdo(spec, dist, x)
    return lam, np.asarray(m.variance)[:, 0]


def check_thm1(spec: NetworkSpec, dist: FFGParams, probe: LineProbe,
               tol: float = CLOSED_FORM_TOL) -> BoundReport:
    """Line bound for factorised Gaussians.

    Along a line with direction_d * offset_d = 0 per coordinate, for every
    grid triple lam1 <= 0 <= lam2, |lam*| <= min(|lam1|, |lam2|):

        Var[f(x(lam*))] <= Var[f(x(lam1))] + Var[f(x(lam2))]

    Reports the largest bound excess over all triples (positive = violation).
    """
    if not probe.axis_orthogonal:
        raise ValueError("probe must satisfy direction_d * offset_d = 0")
    lam, var = variance_on_line(spec, dist, probe)
    order = np.argsort(np.abs(lam))
    inner_max = np.maximum.accumulate(var[order])  # max Var over |lam| <= t
    abs_sorted = np.abs(lam)[order]
    neg = lam <= 0
    pos = lam >= 0
    worst = -np.inf
    worst_triple = None
    for i in np.flatnonzero(neg):
        for j in np.flatnonzero(pos):
            reach = min(abs(lam[i]), abs(lam[j]))
            k = np.searchsorted(abs_sorted, reach, side="right") - 1
            excess = inner_max[k] - var[i] - var[j]
            if excess > worst:
                worst = excess
                k_star = order[np.argmax(np.where(abs_sorted <= reach,
                                                  var[order], -np.inf))]
                worst_triple = (lam[i], lam[k_star], lam[j])
    violating = []
    if worst > tol and worst_triple is not None:
        violating = [probe.points(np.asarray(worst_triple))]
    return BoundReport(probe.describe(), float(worst), tol, violating,
                       details={"kind": "ffg-line-bound",
                                "worst_triple": list(map(float, worst_triple))})


def check_hypercube(spec: NetworkSpec, dist: FFGParams, half_side: float,
                    points: np.ndarray,
                    tol: float = CLOSED_FORM_TOL) -> BoundReport:
    """Corollary bound: Var inside an origin-centred hypercube is at most
    the sum of the variances at its 2^D vertices."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    d = points.shape[1]
    if np.any(np.abs(points) > half_side):
        raise ValueError("points must lie inside the hypercube")
    corners = half_side * (2.0 * np.stack(np.meshgrid(
        *([[0, 1]] * d), indexing="ij"), axis=-1).reshape(-1, d) - 1.0)
    var_corners = np.asarray(
        closed_form_1hl_moments(spec, dist, corners).variance)[:, 0]
    var_inside = np.asarray(
        closed_form_1hl_moments(spec, dist, points).variance)[:, 0]
    excess = var_inside - var_corners.sum()
    worst = int(np.argmax(excess))
    violating = [points[worst]] if excess[worst] > tol else []
    return BoundReport(f"hypercube half_side={half_side:g} D={d}",
                       float(excess[worst]), tol, violating,
                       details={"kind": "hypercube-corollary"})


def check_convexity_mcdo(spec: NetworkSpec, dist: MCDOParams,
                         x_a: np.ndarray, x_b: np.ndarray, ts: np.ndarray,
                         tol: float = CLOSED_FORM_TOL) -> BoundReport:
    """Convexity of the dropout variance (inputs kept) along a segment:

        Var[f(t a + (1-t) b)] <= t Var[f(a)] + (1-t) Var[f(b)]
    """
    if dist.drop_inputs:
        raise ValueError("convexity requires inputs not dropped")
    x_a = np.asarray(x_a, dtype=float)
    x_b = np.asarray(x_b, dtype=float)
    ts = np.asarray(ts, dtype=float)
    mids = ts[:, None] * x_a + (1.0 - ts)[:, None] * x_b
    var = np.asarray(closed_form_1hl_moments_mcdo(
        spec, dist, np.vstack([x_a[None], x_b[None], mids])).variance)[:, 0]
    va, vb, vm = var[0], var[1], var[2:]
    residual = vm - (ts * va + (1.0 - ts) * vb)
    worst = int(np.argmax(residual))
    violating = [mids[worst]] if residual[worst] > tol else []
    return BoundReport(
        f"segment {np.round(x_a, 3).tolist()} -> {np.round(x_b, 3).tolist()}",
        float(residual[worst]), tol, violating,
        details={"kind": "mcdo-convexity", "worst_t": float(ts[worst])})


def origin_in_hull(points: np.ndarray, residual_tol: float = HULL_RESIDUAL_TOL):
    """Test 0 in conv(points) by nonnegative least squares on the moment system."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    a = np.vstack([points.T, np.ones(points.shape[0])])
    b = np.append(np.zeros(points.shape[1]), 1.0)
    _, residual = nnls(a, b)
    return residual < residual_tol, residual


def _mc_var_with_se(spec: NetworkSpec, dist, x: np.ndarray, n_samples: int,
                    rng: RngStream):
    """MC mean/variance of f(x) plus standard errors of both estimates."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    gen = rng.generator()
    sums = np.zeros((4, x.shape[0]))
    done = 0
    while done < n_samples:
        block = min(_MC_BLOCK, n_samples - done)
        theta = sample_params(dist, gen, n_samples=block)
        out = forward(spec, theta, x)[:, :, 0]
        for k in range(4):
            sums[k] += np.power(out, k + 1).sum(axis=0)
        done += block
    m1, m2, m3, m4 = sums / n_samples
    var = (m2 - m1 ** 2) * n_samples / (n_samples - 1)
    mu4 = m4 - 4 * m3 * m1 + 6 * m2 * m1 ** 2 - 3 * m1 ** 4
    se_mean = np.sqrt(np.maximum(var, 0.0) / n_samples)
    se_var = np.sqrt(np.maximum(mu4 - var ** 2, 0.0) / n_samples)
    return m1, np.maximum(var, 0.0), se_mean, se_var


def check_thm5_convex_hull(spec: NetworkSpec, dist: MCDOParams,
                           hull_points: np.ndarray, n_samples: int,
                           rng: RngStream) -> BoundReport:
    """Dropped-inputs bound: Var[f(0)] <= max over the hull points' variances.

    Variances are Monte Carlo estimates; the tolerance is four combined
    standard errors.
    """
    if not dist.drop_inputs:
        raise ValueError("bound applies to dropped inputs")
    hull_points = np.atleast_2d(np.asarray(hull_points, dtype=float))
    inside, residual = origin_in_hull(hull_points)
    if not inside:
        raise ValueError(f"origin not in the convex hull (residual {residual:g})")
    x = np.vstack([np.zeros((1, hull_points.shape[1])), hull_points])
    _, var, _, se_var = _mc_var_with_se(spec, dist, x, n_samples, rng)
    best = int(np.argmax(var[1:])) + 1
    tol = MC_SE_FACTOR * float(np.hypot(se_var[0], se_var[best]))
    violation = float(var[0] - var[best])
    return BoundReport(f"hull of {hull_points.shape[0]} points",
                       violation, tol,
                       [np.zeros(hull_points.shape[1])] if violation > tol else [],
                       details={"kind": "mcdo-hull-bound",
                                "var_origin": float(var[0]),
                                "max_hull_var": float(var[best]),
                                "n_samples": n_samples})


def check_deep_dropout_prop(spec: NetworkSpec, dist: MCDOParams,
                            x: np.ndarray, x_prime: np.ndarray,
                            n_samples: int, rng: RngStream) -> BoundReport:
    """Mean-gap bound for dropped-inputs dropout of any depth:

        |E[f(x)] - E[f(x')]| <= 2 eps sqrt(2/p),  eps^2 > max variance.

    eps is estimated from the larger MC standard deviation (inflated by its
    own standard error); the gap carries a 4-SE slack.
    """
    if not dist.drop_inputs:
        raise ValueError("bound applies to dropped inputs")
    pts = np.vstack([np.atleast_2d(x), np.atleast_2d(x_prime)])
    mean, var, se_mean, se_var = _mc_var_with_se(spec, dist, pts, n_samples, rng)
    eps_sq = float(np.max(var + se_var))
    eps = np.sqrt(eps_sq)
    bound = 2.0 * eps * np.sqrt(2.0 / dist.dropout_rate)
    gap = float(abs(mean[0] - mean[1]))
    slack = MC_SE_FACTOR * float(np.hypot(se_mean[0], se_mean[1]))
    return BoundReport("mean-gap bound", gap - bound, slack, [],
                       details={"kind": "mcdo-mean-gap", "gap": gap,
                                "bound": float(bound), "eps": float(eps),
                                "n_samples": n_samples})


def batch_ffg_variance(mu_u, sd_u, mu_v, sd_v, mu_w, sd_w, sd_b,
                       points) -> np.ndarray:
    """Closed-form Var[f] for a stack of 1HL FFG nets at per-net points.

    Shapes: mu_u/sd_u (B, I, D); mu_v/sd_v/mu_w/sd_w (B, I); sd_b (B,);
    points (B, P, D). Returns (B, P).
    """
    from .moments import relu_gaussian_mean, relu_gaussian_var
    mean_a = np.einsum("bpd,bid->bpi", points, mu_u) + mu_v[:, None, :]
    var_a = np.einsum("bpd,bid->bpi", np.square(points), np.square(sd_u)) \
        + np.square(sd_v)[:, None, :]
    v1 = relu_gaussian_var(mean_a, var_a)
    m1 = relu_gaussian_mean(mean_a, var_a)
    m2 = v1 + np.square(m1)
    return np.einsum("bpi,bi->bp", v1, np.square(mu_w)) \
        + np.einsum("bpi,bi->bp", m2, np.square(sd_w)) \
        + np.square(sd_b)[:, None]


def batch_mcdo_variance(w_u, v, w, p, points) -> np.ndarray:
    """Closed-form Var[f] for stacked 1HL dropout nets (inputs kept).

    Shapes: w_u (B, I, D); v/w (B, I); p (B,); points (B, P, D) -> (B, P).
    """
    act = np.maximum(np.einsum("bpd,bid->bpi", points, w_u)
                     + v[:, None, :], 0.0)
    scale = (p * (1.0 - p))[:, None]
    return scale * np.einsum("bpi,bi->bp", np.square(act), np.square(w))


def _random_ffg_stack(gen, batch, width, input_dim):
    return dict(
        mu_u=gen.standard_normal((batch, width, input_dim)),
        sd_u=gen.uniform(0.05, 1.5, (batch, width, input_dim)),
        mu_v=gen.standard_normal((batch, width)),
        sd_v=gen.uniform(0.05, 1.5, (batch, width)),
        mu_w=gen.standard_normal((batch, width)) / np.sqrt(width),
        sd_w=gen.uniform(0.05, 1.0, (batch, width)) / np.sqrt(width),
        sd_b=gen.uniform(0.05, 1.0, batch),
    )


def fuzz_line_bound(n_nets: int, rng: RngStream, width: int = 50,
                    max_dim: int = 3, grid_size: int = 21,
                    batch: int = 500) -> float:
    """Worst line-bound excess over random FFG nets and valid probes.

    Probes satisfy direction_d * offset_d = 0 per coordinate; for each net
    every grid triple (lam1 <= 0 <= lam2, |lam*| <= min) is checked against
    the closed-form variance. Negative return means no violation.
    """
    gen = rng.generator()
    lam = np.linspace(-1.0, 1.0, grid_size)
    order = np.argsort(np.abs(lam))
    abs_sorted = np.abs(lam)[order]
    neg = np.flatnonzero(lam <= 0)
    pos = np.flatnonzero(lam >= 0)
    pairs = [(i, j, np.searchsorted(abs_sorted,
                                    min(abs(lam[i]), abs(lam[j])),
                                    side="right") - 1)
             for i in neg for j in pos]
    worst = -np.inf
    done = 0
    while done < n_nets:
        b = min(batch, n_nets - done)
        d = int(gen.integers(1, max_dim + 1))
        nets = _random_ffg_stack(gen, b, width, d)
        on_line = gen.random((b, d)) < 0.5
        on_line[~np.any(on_line, axis=1), 0] = True
        direction = np.where(on_line, gen.standard_normal((b, d)), 0.0)
        offset = np.where(on_line, 0.0, 2.0 * gen.standard_normal((b, d)))
        scale = gen.uniform(0.5, 2.0, b)
        points = (scale[:, None] * lam[None, :])[:, :, None] \
            * direction[:, None, :] + offset[:, None, :]
        var = batch_ffg_variance(points=points, **nets)
        inner_max = np.maximum.accumulate(var[:, order], axis=1)
        for i, j, k in pairs:
            excess = inner_max[:, k] - var[:, i] - var[:, j]
            worst = max(worst, float(excess.max()))
        done += b
    return worst


def fuzz_hypercube(n_nets: int, rng: RngStream, dim: int, width: int = 50,
                   n_points: int = 20, batch: int = 500) -> float:
    """Worst excess of interior variance over the vertex-sum bound."""
    gen = rng.generator()
    corners_unit = 2.0 * np.stack(np.meshgrid(
        *([[0, 1]] * dim), indexing="ij"), axis=-1).reshape(-1, dim) - 1.0
    worst = -np.inf
    done = 0
    while done < n_nets:
        b = min(batch, n_nets - done)
        nets = _random_ffg_stack(gen, b, width, dim)
        half = gen.uniform(0.3, 2.0, b)
        inner = gen.uniform(-1.0, 1.0, (b, n_points, dim)) * half[:, None, None]
        corners = corners_unit[None, :, :] * half[:, None, None]
        var = batch_ffg_variance(
            points=np.concatenate([inner, corners], axis=1), **nets)
        excess = var[:, :n_points].max(axis=1) \
            - var[:, n_points:].sum(axis=1)
        worst = max(worst, float(excess.max()))
        done += b
    return worst


def fuzz_convexity(n_nets: int, rng: RngStream, width: int = 50,
                   max_dim: int = 3, n_ts: int = 9,
                   batch: int = 500) -> float:
    """Worst midpoint-convexity residual over random dropout nets."""
    gen = rng.generator()
    ts = np.linspace(0.05, 0.95, n_ts)
    worst = -np.inf
    done = 0
    while done < n_nets:
        b = min(batch, n_nets - done)
        d = int(gen.integers(1, max_dim + 1))
        w_u = gen.standard_normal((b, width, d))
        v = gen.standard_normal((b, width))
        w = gen.standard_normal((b, width)) / np.sqrt(width)
        p = gen.uniform(0.05, 0.5, b)
        x_a = 2.0 * gen.standard_normal((b, d))
        x_b = 2.0 * gen.standard_normal((b, d))
        mids = ts[None, :, None] * x_a[:, None, :] \
            + (1.0 - ts)[None, :, None] * x_b[:, None, :]
        points = np.concatenate([x_a[:, None, :], x_b[:, None, :], mids],
                                axis=1)
        var = batch_mcdo_variance(w_u, v, w, p, points)
        chord = ts[None, :] * var[:, 0:1] + (1.0 - ts)[None, :] * var[:, 1:2]
        worst = max(worst, float((var[:, 2:] - chord).max()))
        done += b
    return worst


def overconfidence_ratio(gp_var, q_var):
    """sqrt(Var_ref / Var_q); both variances must be strictly positive."""
    gp_var = np.asarray(gp_var, dtype=float)
    q_var = np.asarray(q_var, dtype=float)
    if np.any(gp_var <= 0) or np.any(q_var <= 0):
        raise ValueError("variances must be positive")
    out = np.sqrt(gp_var / q_var)
    return out if out.ndim else float(out)
