"""Constructive 2-hidden-layer networks matching target mean/variance pairs.

Both families get a two-unit (plus averaging copies for dropout) second
hidden layer: one pathway carries the target mean, the other the square
root of the target variance. The first-hidden-layer sub-networks are
deterministic function approximators fitted by ADAM regression.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
import torch

from . import optim
from .networks import FFGParams, MCDOParams, NetworkSpec
from .rng import RngStream
from .tnets import DTYPE

TINY_STD = 1e-6


class SubfitError(RuntimeError):
    """A deterministic sub-network failed to reach its fit tolerance."""


@dataclass(frozen=True)
class UniversalBudget:
    """Capacity knobs of the construction."""

    subnet_width: int = 200
    subnet_iterations: int = 50_000
    learning_rate: float = 1e-3
    averaging_copies: int = 16   # dropout only: first-layer copies per pathway
    head_copies: int = 64        # dropout only: mean-pathway units in layer 2

    def doubled(self) -> "UniversalBudget":
        """Double every capacity knob.

        The head-copy count shows up in the dropout variance error as a
        p/(head * (1-p)) term, so it must scale along with the sub-network
        width and the averaging copies for the total error to halve.
        """
        return replace(self, subnet_width=2 * self.subnet_width,
                       averaging_copies=2 * self.averaging_copies,
                       head_copies=2 * self.head_copies)


@dataclass
class Subnet:
    """A fitted deterministic 1HL regressor y ~= w @ psi(U x + v) + b."""

    u: np.ndarray
    v: np.ndarray
    w: np.ndarray
    b: float
    sup_error: float

    def predict(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return np.maximum(x @ self.u.T + self.v, 0.0) @ self.w + self.b


def fit_subnet(grid_x: np.ndarray, targets: np.ndarray, width: int,
               iterations: int, learning_rate: float, rng: RngStream,
               tolerance: float | None = None) -> Subnet:
    """ADAM regression of a deterministic 1HL ReLU net onto grid targets.

    Kink positions are initialised across the grid's range so narrow targets
    are reachable. Raises :class:`SubfitError` if a tolerance is given and
    the final sup error exceeds it.
    """
    grid_x = np.atleast_2d(np.asarray(grid_x, dtype=float))
    targets = np.asarray(targets, dtype=float)
    gen = rng.generator()
    d = grid_x.shape[1]
    reach = float(np.max(np.abs(grid_x))) + 1e-6
    u0 = gen.standard_normal((width, d))
    v0 = gen.uniform(-reach, reach, width) * np.linalg.norm(u0, axis=1)
    w0 = gen.standard_normal(width) / math.sqrt(width)
    b0 = float(np.mean(targets))

    x_t = torch.tensor(grid_x, dtype=DTYPE)
    y_t = torch.tensor(targets, dtype=DTYPE)
    leaves = [torch.tensor(a, dtype=DTYPE, requires_grad=True)
              for a in (u0, v0, w0, np.array(b0))]
    state = optim.adam_init([p.detach() for p in leaves])
    for _ in range(iterations):
        u, v, w, b = leaves
        pred = torch.relu(x_t @ u.T + v) @ w + b
        loss = torch.mean(torch.square(pred - y_t))
        grads = torch.autograd.grad(loss, leaves)
        with torch.no_grad():
            new_vals, state = optim.adam_step(
                [p.detach() for p in leaves], grads, state, learning_rate)
            for p, nv in zip(leaves, new_vals):
                p.data = nv
    u, v, w, b = [p.detach().numpy().copy() for p in leaves]
    net = Subnet(u, v, w, float(b), 0.0)
    sup = float(np.max(np.abs(net.predict(grid_x) - targets)))
    net.sup_error = sup
    if tolerance is not None and sup > tolerance:
        raise SubfitError(f"sup fit error {sup:g} exceeds tolerance {tolerance:g}")
    return net


def _build_ffg(spec_in_dim: int, net_g: Subnet, net_h: Subnet,
               g_min: float) -> tuple[NetworkSpec, FFGParams]:
    j_g, j_h = net_g.u.shape[0], net_h.u.shape[0]
    spec = NetworkSpec(spec_in_dim, (j_g + j_h, 2), 1)
    w0 = np.vstack([net_g.u, net_h.u])
    b0 = np.concatenate([net_g.v, net_h.v])
    w1 = np.zeros((2, j_g + j_h))
    w1[0, :j_g] = net_g.w
    w1[1, j_g:] = net_h.w
    b1 = np.array([net_g.b, net_h.b])
    w2 = np.array([[1.0, 0.0]])
    b2 = np.array([g_min])
    log_tiny = math.log(TINY_STD)
    w2_log_std = np.array([[log_tiny, 0.0]])  # Var[w2] = 1 on the h pathway
    dist = FFGParams(
        spec,
        weight_mean=[w0, w1, w2],
        weight_log_std=[np.full_like(w0, log_tiny),
                        np.full_like(w1, log_tiny), w2_log_std],
        bias_mean=[b0, b1, b2],
        bias_log_std=[np.full_like(b0, log_tiny),
                      np.full_like(b1, log_tiny),
                      np.array([log_tiny])],
    )
    return spec, dist


def _build_mcdo(spec_in_dim: int, net_g: Subnet, net_h: Subnet, b2: float,
                p: float, copies: int, head: int
                ) -> tuple[NetworkSpec, MCDOParams]:
    j_g, j_h = net_g.u.shape[0], net_h.u.shape[0]
    keep = 1.0 - p
    width1 = copies * (j_g + j_h)
    spec = NetworkSpec(spec_in_dim, (width1, head + 2), 1)

    w0 = np.vstack([np.tile(net_g.u, (copies, 1)),
                    np.tile(net_h.u, (copies, 1))])
    b0 = np.concatenate([np.tile(net_g.v, copies), np.tile(net_h.v, copies)])

    row_g = np.zeros(width1)
    row_g[:copies * j_g] = np.tile(net_g.w, copies) / (keep * copies)
    row_h = np.zeros(width1)
    row_h[copies * j_g:] = np.tile(net_h.w, copies) / (keep * copies)

    w1 = np.vstack([row_h, row_h, np.tile(row_g, (head, 1))])
    b1 = np.concatenate([[net_h.b, net_h.b], np.full(head, net_g.b)])

    alpha = 1.0 / (head * keep)
    w2 = np.concatenate([[1.0, -1.0], np.full(head, alpha)])[None, :]
    b2_arr = np.array([b2])
    dist = MCDOParams(spec, [w0, w1, w2], [b0, b1, b2_arr],
                      dropout_rate=p, drop_inputs=False)
    return spec, dist


@dataclass
class UniversalResult:
    spec: NetworkSpec
    dist: FFGParams | MCDOParams
    subnet_errors: tuple[float, float]

    def moments(self, x: np.ndarray, n_samples: int, rng: RngStream):
        """Output mean/variance with standard errors: (mean, var, se_m, se_v).

        FFG uses plain Monte Carlo over weight draws. For dropout the head
        masks are integrated analytically (their conditional moments are
        closed-form), so the Monte Carlo runs only over first-layer masks;
        with all second-layer weights frozen this is exact in the limit and
        has much smaller variance than crude sampling.
        """
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if isinstance(self.dist, FFGParams):
            from .networks import predictive_mc
            m = predictive_mc(self.spec, self.dist, x, n_samples, rng)
            mean = np.asarray(m.mean)[:, 0]
            var = np.asarray(m.variance)[:, 0]
            se_m = np.sqrt(var / n_samples)
            se_v = var * np.sqrt(2.0 / n_samples)
            return mean, var, se_m, se_v
        return self._mcdo_moments(x, n_samples, rng)

    def _mcdo_moments(self, x: np.ndarray, n_samples: int, rng: RngStream):
        d = self.dist
        p = d.dropout_rate
        keep = 1.0 - p
        head = d.weights[2].shape[1] - 2
        alpha = 1.0 / (head * keep)
        psi1 = np.maximum(x @ d.weights[0].T + d.biases[0], 0.0)
        row_v = d.weights[1][0]
        row_m = d.weights[1][2]
        b_v, b_m = d.biases[1][0], d.biases[1][2]
        b2 = d.biases[2][0]
        gen = rng.generator()
        width1 = psi1.shape[1]
        n_pts = x.shape[0]
        # raw moments of psi(a_m) (orders 1..4) and E[psi(a_v)^2] per point
        sums_m = np.zeros((4, n_pts))
        sum_v2 = np.zeros(n_pts)
        block_cap = max(1, int(2e7 / (n_pts * width1)) or 1)
        done = 0
        while done < n_samples:
            block = min(block_cap, n_samples - done)
            masks = (gen.random((block, width1)) < keep).astype(float)
            a_m = psi1 @ (masks * row_m).T + b_m   # (n, S)
            a_v = psi1 @ (masks * row_v).T + b_v
            pm = np.maximum(a_m, 0.0)
            pv = np.maximum(a_v, 0.0)
            acc = pm.copy()
            for k in range(4):
                sums_m[k] += acc.sum(axis=1)
                if k < 3:
                    acc *= pm
            sum_v2 += np.square(pv).sum(axis=1)
            done += block
        m1, m2, m3, m4 = sums_m / n_samples
        ev2 = sum_v2 / n_samples
        var_pm = np.maximum(m2 - m1 ** 2, 0.0) * n_samples / (n_samples - 1)
        mean = m1 + b2
        var = p * keep * (2.0 * ev2 + alpha ** 2 * head * m2) + var_pm
        mu4 = np.maximum(m4 - 4 * m3 * m1 + 6 * m2 * m1 ** 2 - 3 * m1 ** 4, 0.0)
        se_m = np.sqrt(var_pm / n_samples)
        se_v = np.sqrt(mu4 / n_samples)  # dominated by the Var[psi(a_m)] term
        return mean, var, se_m, se_v


def construct_universal_2hl(grid_x: np.ndarray, target_mean: np.ndarray,
                            target_var: np.ndarray, family: str,
                            budget: UniversalBudget, rng: RngStream,
                            dropout_rate: float = 0.05,
                            mean_shift: float = 0.5,
                            std_shift: float = 0.0,
                            subfit_tolerance: float | None = 0.05
                            ) -> UniversalResult:
    """Build a 2HL network whose output moments approximate the targets.

    ``family`` is ``"ffg"`` or ``"mcdo"``. The mean pathway regresses onto
    ``target_mean`` shifted to be positive; the variance pathway regresses
    onto the square root of ``target_var`` (for dropout, rescaled by
    1/sqrt(2 p (1-p)) and lifted by ``std_shift`` to stay positive).
    """
    grid_x = np.atleast_2d(np.asarray(grid_x, dtype=float))
    g = np.asarray(target_mean, dtype=float)
    h = np.asarray(target_var, dtype=float)
    if np.any(h < 0):
        raise ValueError("target variance must be non-negative")
    d = grid_x.shape[1]
    fit = lambda tgt, child: fit_subnet(
        grid_x, tgt, budget.subnet_width, budget.subnet_iterations,
        budget.learning_rate, rng.child(child), tolerance=subfit_tolerance)

    if family == "ffg":
        g_min = float(np.min(g))
        net_g = fit(g - g_min, 0)
        net_h = fit(np.sqrt(h), 1)
        spec, dist = _build_ffg(d, net_g, net_h, g_min)
    elif family == "mcdo":
        p = dropout_rate
        b2 = float(np.min(g)) - mean_shift
        net_g = fit(g - b2, 0)
        net_h = fit(np.sqrt(h / (2.0 * p * (1.0 - p))) + std_shift, 1)
        spec, dist = _build_mcdo(d, net_g, net_h, b2, p,
                                 budget.averaging_copies, budget.head_copies)
    else:
        raise ValueError(f"unknown family {family!r}")
    return UniversalResult(spec, dist, (net_g.sup_error, net_h.sup_error))
