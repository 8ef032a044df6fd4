"""Caption-guided feature pipeline.

Text side: node features are gathered from encoder token rows, entity nodes
are enhanced by their adjectives, and each layer gets a residual+norm
projection. Video side: a temporal encoder runs over frame features once per
video; each action node then picks its top frames and each entity node picks
top patches inside those frames. Selection indices are treated as constants
of the forward pass, so gradients flow only through the averaged features.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .blocks import (
    AttendCache,
    MlpCache,
    ResNormCache,
    TransformerCache,
    dot_softmax_attend,
    dot_softmax_attend_backward,
    mlp,
    mlp_backward,
    res_norm,
    res_norm_backward,
    top_k_indices,
    transformer_backward,
    transformer_encode,
)
from .config import RunConfig
from .dataset import FeatureBundle
from .errors import DataError
from .hierarchy import HierarchyIndex
from .params import ModelParams


# ---------------------------------------------------------------------------
# Node feature initialization
# ---------------------------------------------------------------------------


def init_node_features(index: HierarchyIndex, text: np.ndarray):
    """Gather initial node features from the encoder token rows.

    Row 0 of `text` is the caption CLS feature; token positions are 1-based
    row indices. The EXIST action node gets the mean of all token rows.
    """
    n_tokens = text.shape[0] - 1
    for mu in [m for m in index.mu2 if m is not None] + index.mu3 + index.mu4:
        if mu > n_tokens:
            raise DataError(f"token position {mu} out of range (caption has {n_tokens} tokens)")
    f1 = text[0]
    word_mean = text[1:].mean(axis=0)
    f2 = np.stack([word_mean if mu is None else text[mu] for mu in index.mu2])
    f3 = text[list(index.mu3)] if index.mu3 else np.zeros((0, text.shape[1]))
    f4 = text[list(index.mu4)] if index.mu4 else np.zeros((0, text.shape[1]))
    return f1, f2, f3, f4


# ---------------------------------------------------------------------------
# Adjective enhancement of entity nodes
# ---------------------------------------------------------------------------


@dataclass
class EnhanceCache:
    attend: AttendCache
    fusion: MlpCache


def enhance_entities(f3: np.ndarray, f4: np.ndarray, adj_children: list[list[int]],
                     params: ModelParams):
    """Entity features attend over their adjective children and fuse the
    pooled description back in; entities without adjectives keep their
    projected feature unchanged."""
    n3 = f3.shape[0]
    d = params.d
    if n3 == 0:
        empty = np.zeros((0, d))
        return empty, empty, None, []
    e3p, e3p_cache = res_norm(f3, params.mlp4, params.ln_enhance)
    f3p = e3p.copy()
    caches: list[EnhanceCache | None] = []
    for i in range(n3):
        kids = adj_children[i]
        if not kids:
            caches.append(None)
            continue
        adj = f4[kids]
        _, gamma, at_cache = dot_softmax_attend(e3p[i], adj, adj)
        fused, fu_cache = mlp(np.concatenate([e3p[i], gamma]), params.fusion)
        f3p[i] = e3p[i] + fused
        caches.append(EnhanceCache(attend=at_cache, fusion=fu_cache))
    return e3p, f3p, e3p_cache, caches


def enhance_entities_backward(f3p_bar: np.ndarray, e3p: np.ndarray,
                              e3p_cache: ResNormCache,
                              caches: list[EnhanceCache | None],
                              params: ModelParams, grads: ModelParams) -> None:
    n3 = f3p_bar.shape[0]
    if n3 == 0:
        return
    d = params.d
    e3p_bar = f3p_bar.copy()
    for i, cache in enumerate(caches):
        if cache is None:
            continue
        cat_bar = mlp_backward(f3p_bar[i], cache.fusion, params.fusion, grads.fusion)
        e3p_bar[i] += cat_bar[:d]
        gamma_bar = cat_bar[d:]
        qbar, _, _ = dot_softmax_attend_backward(gamma_bar, cache.attend)
        e3p_bar[i] += qbar
    res_norm_backward(e3p_bar, e3p_cache, params.mlp4, params.ln_enhance,
                      grads.mlp4, grads.ln_enhance)


# ---------------------------------------------------------------------------
# Per-caption forward (everything that does not depend on the video)
# ---------------------------------------------------------------------------


@dataclass
class TextCache:
    index: HierarchyIndex
    f3p: np.ndarray
    e3p: np.ndarray
    e3p_cache: ResNormCache | None
    enhance_caches: list
    e1: np.ndarray   # (d,)
    e2: np.ndarray   # (n2, d)
    e3: np.ndarray   # (n3, d)
    m2: np.ndarray   # (n2, d)
    e1_cache: ResNormCache
    e2_cache: ResNormCache
    e3_cache: ResNormCache | None
    m2_cache: ResNormCache


@dataclass
class TextGrad:
    e1: np.ndarray
    e2: np.ndarray
    e3: np.ndarray
    m2: np.ndarray

    @classmethod
    def zeros(cls, tc: TextCache) -> "TextGrad":
        return cls(
            e1=np.zeros_like(tc.e1),
            e2=np.zeros_like(tc.e2),
            e3=np.zeros_like(tc.e3),
            m2=np.zeros_like(tc.m2),
        )


def text_forward(bundle: FeatureBundle, params: ModelParams) -> TextCache:
    if bundle.d != params.d:
        raise DataError(f"{bundle.pair_id}: dimension mismatch (features d={bundle.d}, model d={params.d})")
    idx = bundle.index
    f1, f2, f3, f4 = init_node_features(idx, bundle.text)
    e3p, f3p, e3p_cache, enh_caches = enhance_entities(f3, f4, idx.adj_children, params)
    e1, e1_cache = res_norm(f1, params.mlp1, params.ln_global)
    e2, e2_cache = res_norm(f2, params.mlp2, params.ln_action)
    if idx.n_entities:
        e3, e3_cache = res_norm(f3p, params.mlp3, params.ln_entity)
    else:
        e3, e3_cache = np.zeros((0, params.d)), None
    m2, m2_cache = res_norm(e2, params.mlp5, params.ln_weight)
    return TextCache(
        index=idx, f3p=f3p, e3p=e3p, e3p_cache=e3p_cache, enhance_caches=enh_caches,
        e1=e1, e2=e2, e3=e3, m2=m2,
        e1_cache=e1_cache, e2_cache=e2_cache, e3_cache=e3_cache, m2_cache=m2_cache,
    )


def text_backward(tg: TextGrad, tc: TextCache, params: ModelParams,
                  grads: ModelParams) -> None:
    e2_bar = tg.e2 + res_norm_backward(tg.m2, tc.m2_cache, params.mlp5,
                                       params.ln_weight, grads.mlp5, grads.ln_weight)
    res_norm_backward(e2_bar, tc.e2_cache, params.mlp2, params.ln_action,
                      grads.mlp2, grads.ln_action)
    if tc.index.n_entities:
        f3p_bar = res_norm_backward(tg.e3, tc.e3_cache, params.mlp3,
                                    params.ln_entity, grads.mlp3, grads.ln_entity)
        enhance_entities_backward(f3p_bar, tc.e3p, tc.e3p_cache, tc.enhance_caches,
                                  params, grads)
    res_norm_backward(tg.e1, tc.e1_cache, params.mlp1, params.ln_global,
                      grads.mlp1, grads.ln_global)


# ---------------------------------------------------------------------------
# Per-video forward (temporal encoding, independent of the caption)
# ---------------------------------------------------------------------------


@dataclass
class VideoCache:
    frames: np.ndarray   # raw frame features (N_v, d)
    patches: np.ndarray  # (N_v, N_p, d)
    g: np.ndarray        # temporal-encoded frames (N_v, d)
    tf_cache: TransformerCache


@dataclass
class VideoGrad:
    g: np.ndarray

    @classmethod
    def zeros(cls, vc: VideoCache) -> "VideoGrad":
        return cls(g=np.zeros_like(vc.g))


def video_forward(bundle: FeatureBundle, params: ModelParams) -> VideoCache:
    if bundle.frames.shape[1] != params.d:
        raise DataError(f"{bundle.pair_id}: dimension mismatch (frames d={bundle.frames.shape[1]}, model d={params.d})")
    g, tf_cache = transformer_encode(bundle.frames, params.temporal, params.pos_emb, params.heads)
    return VideoCache(frames=bundle.frames, patches=bundle.patches, g=g, tf_cache=tf_cache)


def video_backward(vg: VideoGrad, vc: VideoCache, params: ModelParams,
                   grads: ModelParams) -> None:
    transformer_backward(vg.g, vc.tf_cache, params.temporal, grads.temporal,
                         grads.pos_emb, params.heads)


# ---------------------------------------------------------------------------
# Caption-guided video hierarchy for one (caption, video) pair
# ---------------------------------------------------------------------------


@dataclass
class PairFeatures:
    alpha_cls: np.ndarray       # (N_v,) global attention weights
    ev1: np.ndarray             # (d,)
    attend_cache: AttendCache
    psi2: list[np.ndarray]      # per action: selected frame indices
    ev2: np.ndarray             # (n2, d)
    psi3: list[list[np.ndarray]]   # per entity: selected patch indices per picked frame
    ev3_frames: list[np.ndarray]   # per entity: (n_sel_frames, d) per-frame patch means
    ev3: np.ndarray             # (n3, d)


def fuse_global(e1: np.ndarray, frames: np.ndarray):
    """Caption-conditioned pooling of raw frame features."""
    return dot_softmax_attend(e1, frames, frames)


def fuse_actions(e2: np.ndarray, g: np.ndarray, lambda_frame: int):
    """Each action node picks its top frames from the temporal encoding and
    averages them."""
    n2 = e2.shape[0]
    scores = e2 @ g.T
    psi2 = [top_k_indices(scores[i], lambda_frame) for i in range(n2)]
    ev2 = np.stack([g[sel].mean(axis=0) for sel in psi2]) if n2 else np.zeros((0, g.shape[1]))
    return psi2, ev2


def fuse_entities(e3: np.ndarray, patches: np.ndarray, parent3: list[int],
                  psi2: list[np.ndarray], lambda_patch: int,
                  literal_patch_norm: bool = False):
    """Each entity node picks top patches inside the frames selected by its
    parent action, averages per frame, then averages across those frames.

    literal_patch_norm replaces the across-frame mean with a fixed
    1/lambda_patch normalizer.
    """
    n3 = e3.shape[0]
    d = patches.shape[2]
    psi3: list[list[np.ndarray]] = []
    ev3_frames: list[np.ndarray] = []
    ev3 = np.zeros((n3, d))
    for i in range(n3):
        sel_frames = psi2[parent3[i]]
        per_frame_sel: list[np.ndarray] = []
        means = np.zeros((len(sel_frames), d))
        for jj, j in enumerate(sel_frames):
            patch_scores = patches[j] @ e3[i]
            sel = top_k_indices(patch_scores, lambda_patch)
            per_frame_sel.append(sel)
            means[jj] = patches[j][sel].mean(axis=0)
        psi3.append(per_frame_sel)
        ev3_frames.append(means)
        if literal_patch_norm:
            ev3[i] = means.sum(axis=0) / lambda_patch
        else:
            ev3[i] = means.mean(axis=0)
    return psi3, ev3_frames, ev3


def pair_forward(tc: TextCache, vc: VideoCache, cfg: RunConfig) -> PairFeatures:
    alpha_cls, ev1, attend_cache = fuse_global(tc.e1, vc.frames)
    psi2, ev2 = fuse_actions(tc.e2, vc.g, cfg.lambda_frame)
    psi3, ev3_frames, ev3 = fuse_entities(
        tc.e3, vc.patches, tc.index.parent3, psi2, cfg.lambda_patch,
        cfg.literal_patch_norm,
    )
    return PairFeatures(
        alpha_cls=alpha_cls, ev1=ev1, attend_cache=attend_cache,
        psi2=psi2, ev2=ev2, psi3=psi3, ev3_frames=ev3_frames, ev3=ev3,
    )


def pair_backward(ev1_bar: np.ndarray, ev2_bar: np.ndarray, pf: PairFeatures,
                  tg: TextGrad, vg: VideoGrad) -> None:
    """Backprop from pooled video features to the caption projections and the
    temporal encoding. Entity-level pooled features are plain averages of
    frozen patch rows, so they carry no parameter gradient."""
    qbar, _, _ = dot_softmax_attend_backward(ev1_bar, pf.attend_cache)
    tg.e1 += qbar
    for i, sel in enumerate(pf.psi2):
        vg.g[sel] += ev2_bar[i] / len(sel)


def build_pair_features(bundle: FeatureBundle, params: ModelParams, cfg: RunConfig):
    """Full pipeline for a record's own caption-video pair."""
    tc = text_forward(bundle, params)
    vc = video_forward(bundle, params)
    pf = pair_forward(tc, vc, cfg)
    return tc, vc, pf
