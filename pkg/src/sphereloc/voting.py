"""Confidence accumulation over degrees and z-score candidate voting.

Per-degree correlations Q(l) of a query against a candidate are folded into
a confidence G(l).  The increment at degree l shrinks with both the degree
and the correlation magnitude:

    G(1) = Q(1)
    G(l) = Q(l-1) + Q(l) * (1 - Q(l)^2)^(l-1) * prod_{i=1}^{l-1} (2i-1)/(2i)

For a constant correlation q the increment terms are the series expansion
of sign(q), so chaining them (``carry="accumulated"``) saturates G at +-1
for any moderately correlated candidate and stops discriminating; worse,
mixed-magnitude profiles push the partial sums past 1.  The default
``carry="previous"`` restarts each degree from the raw Q(l-1), which keeps
G tracking the actual correlation level.  Each degree's G is mapped to
[0, 1] via g = (G+1)/2 and becomes a standard-normal quantile; a
candidate's vote is the sum of those z-scores over degrees 1..l_max-1.
The selected candidate is the argmax; the margin is the gap to the
runner-up.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtri

from .errors import InvalidParameterError
from .sht import Spectrum
from .taper import fused_correlation

# Probability clamp keeping the normal quantile finite.
PROB_EPS = 1e-9

CARRY_MODES = ("previous", "accumulated")
ZSCORE_MODES = ("described", "literal")


def confidence_profile(q: np.ndarray, carry: str = "previous") -> np.ndarray:
    """Confidence G(l) per degree, clamped to [-1, 1]; index 0 is unused and 0.

    ``carry="previous"`` (default) restarts each step from the raw Q(l-1);
    ``carry="accumulated"`` continues from G(l-1) instead.
    """
    if carry not in CARRY_MODES:
        raise InvalidParameterError(f"carry must be one of {CARRY_MODES}, got {carry!r}")
    q = np.clip(np.asarray(q, dtype=np.float64), -1.0, 1.0)
    if q.ndim != 1 or len(q) < 2:
        raise InvalidParameterError("need correlations for at least degrees 0 and 1")
    g = np.zeros_like(q)
    g[1] = q[1]
    half_prod = 1.0  # prod_{i=1}^{l-1} (2i-1)/(2i)
    for l in range(2, len(q)):
        half_prod *= (2 * (l - 1) - 1) / (2.0 * (l - 1))
        base = q[l - 1] if carry == "previous" else g[l - 1]
        step = base + q[l] * (1.0 - q[l] ** 2) ** (l - 1) * half_prod
        # mixed-magnitude profiles can push the raw sum past +-1
        g[l] = min(1.0, max(-1.0, step))
    return g


def z_score(g, mode: str = "described"):
    """Standard-normal quantile of a confidence g in [0, 1].

    ``described`` (default) evaluates the quantile at g directly: zero at
    g = 0.5, negative below, positive above.  ``literal`` evaluates it at
    g/2, which is never positive.  Scalar in, scalar out; arrays map
    elementwise.
    """
    if mode not in ZSCORE_MODES:
        raise InvalidParameterError(f"mode must be one of {ZSCORE_MODES}, got {mode!r}")
    p = np.asarray(g, dtype=np.float64)
    if np.any(p < 0.0) or np.any(p > 1.0):
        raise InvalidParameterError("confidence must lie in [0, 1]")
    if mode == "literal":
        p = p / 2.0
    p = np.clip(p, PROB_EPS, 1.0 - PROB_EPS)
    out = ndtri(p)
    return float(out) if out.ndim == 0 else out


def degree_zscores(g: np.ndarray, mode: str = "described") -> np.ndarray:
    """Map confidences G in [-1, 1] through g -> (G+1)/2, then ``z_score``."""
    p = (np.clip(np.asarray(g, dtype=np.float64), -1.0, 1.0) + 1.0) / 2.0
    return z_score(p, mode=mode)


def vote_score(
    q: np.ndarray,
    carry: str = "previous",
    mode: str = "described",
) -> float:
    """Scalar vote for one candidate: summed z-scores over degrees >= 1."""
    g = confidence_profile(q, carry=carry)
    return float(degree_zscores(g[1:], mode=mode).sum())


@dataclass
class VoteResult:
    """Outcome of scoring candidates against one query."""

    scores: np.ndarray            # (n_candidates,)
    selected: int                 # argmax; ties go to the lowest index
    margin: float                 # best minus runner-up; inf for one candidate
    correlations: list[np.ndarray] = field(default_factory=list)
    confidences: list[np.ndarray] = field(default_factory=list)


def vote(
    query_ws: list[Spectrum],
    candidate_ws: list[list[Spectrum]],
    carry: str = "previous",
    mode: str = "described",
    keep_correlations: bool = False,
) -> VoteResult:
    """Score candidates by multitaper correlation against the query.

    Both sides are precomputed per-taper fused spectra (see
    ``windowed_fused_spectra``), so the query-side transforms are shared
    across candidates.
    """
    if not candidate_ws:
        raise InvalidParameterError("vote needs at least one candidate")
    scores = np.empty(len(candidate_ws))
    correlations = []
    confidences = []
    for i, cand in enumerate(candidate_ws):
        qbar = fused_correlation(query_ws, cand)
        scores[i] = vote_score(qbar, carry=carry, mode=mode)
        if keep_correlations:
            correlations.append(qbar)
            confidences.append(confidence_profile(qbar, carry=carry))
    selected = int(np.argmax(scores))
    if len(scores) > 1:
        margin = float(scores[selected] - np.partition(scores, -2)[-2])
    else:
        margin = math.inf
    return VoteResult(scores=scores, selected=selected, margin=margin,
                      correlations=correlations, confidences=confidences)
