"""Hierarchy-weighted similarity between caption and video features.

Scores are computed node-by-node per layer; action and entity nodes carry
softmax weights derived from caption-internal similarities, the whole-layer
weight is fixed to 1, and the final score is the plain mean of the three
layer scores. An empty entity layer contributes 0 while the divisor stays 3
(config: empty_layer_policy = "zero").
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .blocks import softmax, softmax_vjp
from .config import RunConfig
from .dataset import FeatureBundle
from .errors import DataError
from .params import ModelParams
from .pipeline import (
    PairFeatures,
    TextCache,
    TextGrad,
    pair_forward,
    text_forward,
    video_forward,
)

LAYER_COUNT = 3


# ---------------------------------------------------------------------------
# Learned per-node weights (caption-only quantities)
# ---------------------------------------------------------------------------


@dataclass
class WeightCache:
    sim2: np.ndarray  # (n2,)
    w2: np.ndarray    # (n2,)
    sim3: np.ndarray  # (n3,)
    w3: np.ndarray    # (n3,)


def layer2_weights(e1: np.ndarray, m2: np.ndarray):
    """Action weights from overall-node vs projected-action similarity."""
    sim2 = m2 @ e1
    return sim2, softmax(sim2)


def layer3_weights(m2: np.ndarray, e3: np.ndarray, parent3: list[int],
                   sim2: np.ndarray):
    """Entity weights couple the parent action's importance with the
    entity-action association."""
    if e3.shape[0] == 0:
        return np.zeros(0), np.zeros(0)
    parents = np.asarray(parent3)
    sim3 = (m2[parents] * e3).sum(axis=1)
    return sim3, softmax(sim2[parents] + sim3)


def text_weights(tc: TextCache) -> WeightCache:
    sim2, w2 = layer2_weights(tc.e1, tc.m2)
    sim3, w3 = layer3_weights(tc.m2, tc.e3, tc.index.parent3, sim2)
    return WeightCache(sim2=sim2, w2=w2, sim3=sim3, w3=w3)


# ---------------------------------------------------------------------------
# Per-pair score assembly
# ---------------------------------------------------------------------------


@dataclass
class ScoreBreakdown:
    score1: float
    score2: np.ndarray  # (n2,)
    score3: np.ndarray  # (n3,)
    sim2: np.ndarray
    sim3: np.ndarray
    w2: np.ndarray
    w3: np.ndarray
    layer_scores: tuple[float, float, float]
    final: float


def node_scores(tc: TextCache, pf: PairFeatures):
    score1 = float(tc.e1 @ pf.ev1)
    score2 = (tc.e2 * pf.ev2).sum(axis=1)
    score3 = (tc.e3 * pf.ev3).sum(axis=1)
    return score1, score2, score3


def final_score(score1: float, score2: np.ndarray, score3: np.ndarray,
                wc: WeightCache) -> ScoreBreakdown:
    s1 = score1  # whole-layer weight is fixed to 1
    s2 = float(wc.w2 @ score2)
    s3 = float(wc.w3 @ score3) if score3.size else 0.0
    final = (s1 + s2 + s3) / 3.0
    return ScoreBreakdown(
        score1=score1, score2=score2, score3=score3,
        sim2=wc.sim2, sim3=wc.sim3, w2=wc.w2, w3=wc.w3,
        layer_scores=(s1, s2, s3), final=final,
    )


def score_pair(tc: TextCache, wc: WeightCache, pf: PairFeatures) -> ScoreBreakdown:
    s1, s2, s3 = node_scores(tc, pf)
    return final_score(s1, s2, s3, wc)


def score_pair_backward(final_bar: float, tc: TextCache, wc: WeightCache,
                        pf: PairFeatures, bd: ScoreBreakdown, tg: TextGrad):
    """Backprop final -> (boundary grads on caption projections, pooled-video
    grads). Returns (ev1_bar, ev2_bar); entity-level pooled features carry no
    parameter gradient (frozen patch averages)."""
    lbar = final_bar / 3.0
    n3 = bd.score3.size

    # layer 1
    tg.e1 += lbar * pf.ev1
    ev1_bar = lbar * tc.e1

    # layer 2 weighted sum
    w2_bar = lbar * bd.score2
    score2_bar = lbar * wc.w2
    tg.e2 += score2_bar[:, None] * pf.ev2
    ev2_bar = score2_bar[:, None] * tc.e2

    # layer 3 weighted sum (pooled patch means are constants)
    sim2_bar = softmax_vjp(wc.w2, w2_bar)
    if n3:
        w3_bar = lbar * bd.score3
        score3_bar = lbar * wc.w3
        tg.e3 += score3_bar[:, None] * pf.ev3

        z_bar = softmax_vjp(wc.w3, w3_bar)
        parents = np.asarray(tc.index.parent3)
        np.add.at(sim2_bar, parents, z_bar)
        sim3_bar = z_bar
        # parents may repeat, so scatter-add rather than fancy-index +=
        np.add.at(tg.m2, parents, sim3_bar[:, None] * tc.e3)
        tg.e3 += sim3_bar[:, None] * tc.m2[parents]

    # layer 2 weight similarities
    tg.e1 += sim2_bar @ tc.m2
    tg.m2 += sim2_bar[:, None] * tc.e1

    return ev1_bar, ev2_bar


# ---------------------------------------------------------------------------
# Cross-pair score matrix
# ---------------------------------------------------------------------------


def score_matrix(bundles_t: list[FeatureBundle], bundles_v: list[FeatureBundle],
                 params: ModelParams, cfg: RunConfig,
                 threads: int = 1) -> np.ndarray:
    """Rows are captions, columns are videos. Fusion is caption-guided, so
    the matrix is not symmetric even on the diagonal manifest."""
    tcs = [text_forward(b, params) for b in bundles_t]
    wcs = [text_weights(tc) for tc in tcs]
    vcs = [video_forward(b, params) for b in bundles_v]
    n_t, n_v = len(tcs), len(vcs)
    out = np.zeros((n_t, n_v))

    def cell(ij: tuple[int, int]) -> float:
        i, j = ij
        pf = pair_forward(tcs[i], vcs[j], cfg)
        return score_pair(tcs[i], wcs[i], pf).final

    coords = [(i, j) for i in range(n_t) for j in range(n_v)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            values = list(pool.map(cell, coords))
    else:
        values = [cell(c) for c in coords]
    for (i, j), v in zip(coords, values):
        out[i, j] = v
    return out


def dsl_postprocess(s: np.ndarray, tau_dsl: float, direction: str = "t2v") -> np.ndarray:
    """Dual-softmax prior weighting of a score matrix before ranking.

    For caption-to-video ranking each entry is multiplied by the softmax of
    its column over captions; the video-to-caption direction mirrors this
    over rows.
    """
    if s.size == 0:
        raise DataError("dsl_postprocess: empty score matrix")
    if direction == "t2v":
        prior = softmax(tau_dsl * s, axis=0)
    elif direction == "v2t":
        prior = softmax(tau_dsl * s, axis=1)
    else:
        raise DataError(f"dsl_postprocess: unknown direction {direction!r}")
    return s * prior
