"""Dataset containers, synthetic generators and the Naval-propulsion loader.

Synthetic regression targets are drawn from the wide-limit prior of the
network under study (via its kernel for small sets, via a width-4096
network sample for large ones) so that the model class is well specified
and any uncertainty pathology is attributable to inference.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np

from .bounds import LineProbe
from .gp import NngpKernelConfig, nngp_gram
from .linalg import cholesky_factor
from .rng import RngStream

# Per-depth prior weight scale keeping the function-space prior std roughly
# constant (about 10-15 at the cluster centres) as depth grows.
SIGMA_W_TABLE = {1: 4.0, 2: 3.0, 3: 2.25, 4: 2.0, 5: 2.0,
                 6: 1.9, 7: 1.75, 8: 1.75, 9: 1.7, 10: 1.65}

NAVAL_ROWS = 11_934
NAVAL_RAW_COLS = 18         # 16 sensor features + 2 decay targets
NAVAL_FEATURES = 14         # after dropping constant sensor columns

DATA_DIR_ENV = "BNNUQ_DATA_DIR"


@dataclass(frozen=True)
class Normalization:
    x_mean: np.ndarray
    x_std: np.ndarray
    y_mean: float
    y_std: float


@dataclass(frozen=True)
class Dataset:
    X: np.ndarray
    y: np.ndarray
    normalization: Normalization | None = None

    def __post_init__(self):
        if self.X.ndim != 2 or self.y.shape != (self.X.shape[0],):
            raise ValueError("X must be (N, D) with matching y of shape (N,)")

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    def subset(self, idx) -> "Dataset":
        return Dataset(self.X[idx], self.y[idx], self.normalization)


def normalize(x: np.ndarray, y: np.ndarray) -> Dataset:
    """Zero-mean, unit-std per feature dimension and for the target."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    x_mean, x_std = x.mean(axis=0), x.std(axis=0)
    y_mean, y_std = float(y.mean()), float(y.std())
    if np.any(x_std == 0) or y_std == 0:
        raise ValueError("cannot normalize a constant column")
    norm = Normalization(x_mean, x_std, y_mean, y_std)
    return Dataset((x - x_mean) / x_std, (y - y_mean) / y_std, norm)


def _gp_prior_draw(x: np.ndarray, kernel: NngpKernelConfig,
                   gen: np.random.Generator) -> np.ndarray:
    """Exact draw from the wide-limit prior at the rows of x."""
    gram = nngp_gram(kernel, x)
    lower, _ = cholesky_factor(gram)
    return lower @ gen.standard_normal(x.shape[0])


def _wide_net_prior_draw(x: np.ndarray, kernel: NngpKernelConfig,
                         gen: np.random.Generator,
                         width: int = 4096) -> np.ndarray:
    """Approximate wide-limit prior draw via a width-4096 network sample.

    Used instead of a Cholesky draw when N is too large to factor.
    """
    d = x.shape[1]
    h = x
    fan_in = d
    for _ in range(kernel.depth):
        w = gen.standard_normal((width, fan_in)) * kernel.sigma_w / math.sqrt(fan_in)
        b = gen.standard_normal(width) * kernel.sigma_b
        h = np.maximum(h @ w.T + b, 0.0)
        fan_in = width
    w = gen.standard_normal(width) * kernel.sigma_w / math.sqrt(width)
    b = gen.standard_normal() * kernel.sigma_b
    return h @ w + b


def gen_two_cluster_2d(seed: int, depth: int = 1,
                       sigma_w: float | None = None, sigma_b: float = 1.0,
                       noise_std: float = 0.1, points_per_cluster: int = 50,
                       cluster_std: float = 0.1) -> Dataset:
    """Two Gaussian clusters at (1, 1) and (-1, -1) with wide-limit targets.

    Targets are a draw from the depth-matched wide-limit prior plus
    N(0, noise_std^2) observation noise; inputs are left unnormalised.
    """
    gen = RngStream(seed, 101).generator()
    sigma_w = SIGMA_W_TABLE[depth] if sigma_w is None else sigma_w
    centers = np.array([[1.0, 1.0], [-1.0, -1.0]])
    x = np.vstack([c + cluster_std * gen.standard_normal((points_per_cluster, 2))
                   for c in centers])
    kernel = NngpKernelConfig(depth, sigma_w, sigma_b, 2)
    y = _gp_prior_draw(x, kernel, gen) + noise_std * gen.standard_normal(len(x))
    return Dataset(x, y)


def gen_random_clusters(seed: int, input_dim: int = 5, depth: int = 1,
                        sigma_w: float = math.sqrt(2.0), sigma_b: float = 1.0,
                        noise_std: float = 0.01,
                        points_per_cluster: int = 50,
                        cluster_std: float = 0.1
                        ) -> tuple[Dataset, LineProbe]:
    """Two clusters centred randomly on the sphere of radius sqrt(D).

    Returns the dataset and the probe line joining the cluster centres
    (lam = -1 and 1 at the centres, midpoint at lam = 0).
    """
    gen = RngStream(seed, 102).generator()
    radius = math.sqrt(input_dim)
    centers = gen.standard_normal((2, input_dim))
    centers *= radius / np.linalg.norm(centers, axis=1, keepdims=True)
    x = np.vstack([c + cluster_std * gen.standard_normal(
        (points_per_cluster, input_dim)) for c in centers])
    kernel = NngpKernelConfig(depth, sigma_w, sigma_b, input_dim)
    y = _gp_prior_draw(x, kernel, gen) + noise_std * gen.standard_normal(len(x))
    midpoint = centers.mean(axis=0)
    direction = (centers[1] - centers[0]) / 2.0
    probe = LineProbe(direction, midpoint, -1.2, 1.2, 301)
    return Dataset(x, y), probe


def load_naval(path: str) -> Dataset:
    """Load the UCI condition-based-maintenance (naval propulsion) file.

    Expects 11,934 whitespace-separated rows of 16 sensor readings plus two
    decay coefficients. Constant sensor columns are dropped (leaving 14
    features), the compressor decay coefficient (first target column) is the
    regression target, and everything is normalised.
    """
    raw = np.loadtxt(path)
    if raw.shape != (NAVAL_ROWS, NAVAL_RAW_COLS):
        raise ValueError(
            f"expected {NAVAL_ROWS} x {NAVAL_RAW_COLS} naval data, "
            f"got {raw.shape}")
    features = raw[:, :16]
    keep = features.std(axis=0) > 0
    features = features[:, keep]
    if features.shape[1] != NAVAL_FEATURES:
        raise ValueError(
            f"expected {NAVAL_FEATURES} non-constant features, "
            f"got {features.shape[1]}")
    target = raw[:, 16]
    return normalize(features, target)


def find_naval(path: str | None = None) -> str | None:
    """Locate the raw naval file from an explicit path or the cache dir."""
    candidates = []
    if path:
        candidates.append(path)
    cache = os.environ.get(DATA_DIR_ENV)
    if cache:
        candidates += [os.path.join(cache, name)
                       for name in ("data.txt", "naval.txt", "uci_cbm.txt")]
    for cand in candidates:
        if os.path.isfile(cand):
            return cand
    return None


def gen_naval_like(seed: int, n_points: int = NAVAL_ROWS,
                   n_clusters: int = 27, input_dim: int = NAVAL_FEATURES,
                   noise_std: float = 0.01) -> Dataset:
    """Synthetic stand-in with the naval dataset's gross structure.

    Clustered covariates whose centres spread mostly along one direction
    (so the first principal component dominates), and a smooth target that
    varies over a 3-D projection dominated by that direction, drawn from a
    depth-1 wide-limit prior with sigma_w = sqrt(2) plus small noise.
    Everything is normalised like the real data.
    """
    gen = RngStream(seed, 103).generator()
    principal = gen.standard_normal(input_dim)
    principal /= np.linalg.norm(principal)
    along = gen.uniform(-4.5, 4.5, n_clusters)
    across = 0.5 * gen.standard_normal((n_clusters, input_dim))
    centers = along[:, None] * principal + across
    assignment = gen.integers(0, n_clusters, n_points)
    x = centers[assignment] + 0.05 * gen.standard_normal((n_points, input_dim))
    # smooth low-dimensional target: principal direction plus two minor ones
    minor = gen.standard_normal((input_dim, 2))
    minor /= np.linalg.norm(minor, axis=0)
    proj = np.column_stack([x @ principal, 0.5 * (x @ minor)])
    kernel = NngpKernelConfig(1, math.sqrt(2.0), 1.0, proj.shape[1])
    y = _wide_net_prior_draw(proj, kernel, gen)
    y = y + noise_std * gen.standard_normal(n_points)
    return normalize(x, y)
