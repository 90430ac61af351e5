"""Compact place descriptors: log-power features and a trained linear map.

The raw feature vector concatenates, per modality channel in the fixed
order (photometry, range, intensity), the per-degree powers for degrees
below ``l_feat``, compressed through log1p.  Channels are standardized over
their measured cells first so modality scales do not dominate.

A linear embedding W x + b maps the feature vector to the stored descriptor.
It is trained with SGD on a margin triplet loss over (anchor, positive,
negative) examples mined from trajectory poses:

    loss = [d_ap - d_an + margin]_+ + [d_ap - spread]_+

with plain euclidean distances between embeddings.  The bias gradient of
this loss is identically zero (it cancels in every distance), so b keeps
its initialization; it is retained for format compatibility.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameterError, ShapeMismatchError
from .grid import SphericalGrid
from .sht import forward_sht
from .spectra import power_spectrum, standardize_support

DEFAULT_L_FEAT = 64
DEFAULT_EMBED_DIM = 256
DEFAULT_MARGIN = 2.0
DEFAULT_SPREAD = 0.2
DEFAULT_LR = 0.0046
DEFAULT_BATCH = 13


def feature_vector(
    channels: np.ndarray,
    grid: SphericalGrid,
    l_feat: int = DEFAULT_L_FEAT,
    standardize: bool = True,
) -> np.ndarray:
    """Log-power feature vector of a (3, 2B, 2B) channel stack, (3*l_feat,)."""
    channels = np.asarray(channels, dtype=np.float64)
    if channels.shape != (3,) + grid.shape:
        raise ShapeMismatchError(
            f"expected (3, {grid.shape[0]}, {grid.shape[1]}) channels, got {channels.shape}"
        )
    if not 1 <= l_feat <= grid.bandwidth:
        raise InvalidParameterError(
            f"l_feat must be in [1, {grid.bandwidth}], got {l_feat}"
        )
    parts = []
    for ch in channels:
        if standardize:
            ch = standardize_support(ch)
        spec = forward_sht(ch, grid, l_max=l_feat)
        parts.append(np.log1p(power_spectrum(spec)))
    return np.concatenate(parts)


@dataclass
class EmbeddingModel:
    """Linear descriptor map: embed(x) = W x + b, no output normalization."""

    weights: np.ndarray  # (d_out, d_in)
    bias: np.ndarray     # (d_out,)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64).reshape(-1)
        if self.weights.ndim != 2 or self.weights.shape[0] != self.bias.size:
            raise ShapeMismatchError(
                f"weights {self.weights.shape} incompatible with bias ({self.bias.size},)"
            )

    @property
    def d_in(self) -> int:
        return self.weights.shape[1]

    @property
    def d_out(self) -> int:
        return self.weights.shape[0]

    def embed(self, x: np.ndarray) -> np.ndarray:
        """Map features (d_in,) or a batch (n, d_in) to descriptors."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.d_in:
            raise ShapeMismatchError(
                f"feature dimension {x.shape[-1]} does not match model d_in={self.d_in}"
            )
        return x @ self.weights.T + self.bias


def init_embedding(d_in: int, d_out: int = DEFAULT_EMBED_DIM, seed: int = 0) -> EmbeddingModel:
    """Seeded uniform(+-1/sqrt(d_in)) weights, zero bias."""
    if d_in < 1 or d_out < 1:
        raise InvalidParameterError("embedding dimensions must be positive")
    rng = np.random.default_rng(seed)
    bound = 1.0 / np.sqrt(d_in)
    weights = rng.uniform(-bound, bound, size=(d_out, d_in))
    return EmbeddingModel(weights=weights, bias=np.zeros(d_out))


def triplet_loss(
    anchor: np.ndarray,
    positive: np.ndarray,
    negative: np.ndarray,
    margin: float = DEFAULT_MARGIN,
    spread: float = DEFAULT_SPREAD,
) -> float:
    """Mean hinge loss over a batch of embedded triplets (rows)."""
    anchor, positive, negative = (np.atleast_2d(np.asarray(a, dtype=np.float64))
                                  for a in (anchor, positive, negative))
    d_ap = np.linalg.norm(anchor - positive, axis=1)
    d_an = np.linalg.norm(anchor - negative, axis=1)
    pull = np.maximum(d_ap - d_an + margin, 0.0)
    clamp = np.maximum(d_ap - spread, 0.0)
    return float(np.mean(pull + clamp))


def _triplet_grad(
    model: EmbeddingModel,
    feats: tuple[np.ndarray, np.ndarray, np.ndarray],
    margin: float,
    spread: float,
) -> tuple[np.ndarray, float]:
    """Mean weight gradient over one batch and the batch loss."""
    xa, xp, xn = feats
    ea, ep, en = model.embed(xa), model.embed(xp), model.embed(xn)
    diff_ap = ea - ep
    diff_an = ea - en
    d_ap = np.linalg.norm(diff_ap, axis=1)
    d_an = np.linalg.norm(diff_an, axis=1)
    # Unit directions; zero where the distance vanishes (subgradient choice).
    u_ap = np.zeros_like(diff_ap)
    u_an = np.zeros_like(diff_an)
    nz = d_ap > 0
    u_ap[nz] = diff_ap[nz] / d_ap[nz, None]
    nz = d_an > 0
    u_an[nz] = diff_an[nz] / d_an[nz, None]

    # Hinge activations as floats: both terms can pull on u_ap at once.
    pull_on = ((d_ap - d_an + margin) > 0).astype(np.float64)
    clamp_on = ((d_ap - spread) > 0).astype(np.float64)
    n = len(xa)
    # dL/dW = sum_i g_e x^T for each leg; hinge kinks contribute zero.
    ga = u_ap * (pull_on + clamp_on)[:, None] - u_an * pull_on[:, None]
    gp = -u_ap * (pull_on + clamp_on)[:, None]
    gn = u_an * pull_on[:, None]
    grad_w = (ga.T @ xa + gp.T @ xp + gn.T @ xn) / n
    loss = float(np.mean(np.maximum(d_ap - d_an + margin, 0.0)
                         + np.maximum(d_ap - spread, 0.0)))
    return grad_w, loss


def train_embedding(
    features: np.ndarray,
    triplets: np.ndarray,
    d_out: int = DEFAULT_EMBED_DIM,
    epochs: int = 40,
    lr: float = DEFAULT_LR,
    batch_size: int = DEFAULT_BATCH,
    margin: float = DEFAULT_MARGIN,
    spread: float = DEFAULT_SPREAD,
    seed: int = 0,
    model: EmbeddingModel | None = None,
) -> tuple[EmbeddingModel, list[float]]:
    """SGD on the triplet loss; deterministic for a fixed seed.

    ``features`` holds one feature vector per row; ``triplets`` holds index
    rows (anchor, positive, negative).  Returns the model and the mean loss
    per epoch.
    """
    features = np.asarray(features, dtype=np.float64)
    triplets = np.asarray(triplets, dtype=np.int64).reshape(-1, 3)
    if len(triplets) == 0:
        raise InvalidParameterError("cannot train on zero triplets")
    if triplets.min() < 0 or triplets.max() >= len(features):
        raise InvalidParameterError("triplet indices out of range")
    if model is None:
        model = init_embedding(features.shape[1], d_out=d_out, seed=seed)
    rng = np.random.default_rng(seed)
    history = []
    for _ in range(epochs):
        order = rng.permutation(len(triplets))
        losses = []
        for start in range(0, len(order), batch_size):
            batch = triplets[order[start:start + batch_size]]
            feats = (features[batch[:, 0]], features[batch[:, 1]], features[batch[:, 2]])
            grad_w, loss = _triplet_grad(model, feats, margin, spread)
            model.weights -= lr * grad_w
            losses.append(loss)
        history.append(float(np.mean(losses)))
    return model, history


def mine_triplets(
    positions: np.ndarray,
    min_spacing: float = 0.10,
    positive_radius: float = 5.0,
    negative_range: tuple[float, float] = (6.0, 20.0),
    seed: int = 0,
) -> np.ndarray:
    """Mine (anchor, positive, negative) index triples from trajectory positions.

    Poses are first thinned greedily in order, keeping a pose only when it
    lies at least ``min_spacing`` from every pose already kept.  Every
    ordered pair of kept poses closer than ``positive_radius`` becomes an
    (anchor, positive); the negative is drawn uniformly (seeded) from the
    kept poses whose distance to the anchor falls inside ``negative_range``.
    Pairs with no eligible negative are dropped.  Indices refer to the
    original ``positions`` rows.
    """
    positions = np.asarray(positions, dtype=np.float64).reshape(-1, 3)
    lo, hi = negative_range
    if not 0 < lo <= hi:
        raise InvalidParameterError(f"invalid negative range ({lo}, {hi})")
    kept: list[int] = []
    for i, p in enumerate(positions):
        if all(np.linalg.norm(p - positions[j]) >= min_spacing for j in kept):
            kept.append(i)
    kept_arr = np.array(kept, dtype=np.int64)
    if len(kept_arr) < 3:
        return np.empty((0, 3), dtype=np.int64)
    pts = positions[kept_arr]
    dists = np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=2)
    rng = np.random.default_rng(seed)
    triplets = []
    for a in range(len(kept_arr)):
        negatives = np.flatnonzero((dists[a] >= lo) & (dists[a] <= hi))
        positives = np.flatnonzero((dists[a] > 0) & (dists[a] < positive_radius))
        if len(negatives) == 0:
            continue
        for p in positives:
            n = negatives[rng.integers(len(negatives))]
            triplets.append((kept_arr[a], kept_arr[p], kept_arr[n]))
    if not triplets:
        return np.empty((0, 3), dtype=np.int64)
    return np.array(triplets, dtype=np.int64)
