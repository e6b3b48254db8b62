"""Synthetic data generators.

All randomness comes from numpy's Philox-4x64 counter-based bit generator
keyed by the seed field; matrices are drawn column by column from that one
stream, so a given seed reproduces the same matrix bit-for-bit. Gamma
variates use numpy's Marsaglia-Tsang sampler.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import NamedTuple

import numpy as np

from .core import DataMatrix
from .errors import RejectionOverflow

MAX_REJECTIONS = 1000


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=int(seed)))


@dataclass(frozen=True)
class GammaSpec:
    d: int
    n: int
    shape_alpha: float = 10.0
    scale_theta: float = 1.0
    noise_amplitude: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.d < 1 or self.n < 1:
            raise ValueError("d and n must be positive")
        if not (self.shape_alpha > 0 and self.scale_theta > 0):
            raise ValueError("gamma shape and scale must be positive")
        if self.noise_amplitude < 0:
            raise ValueError("noise amplitude must be nonnegative")

    def to_dict(self):
        return asdict(self)


def gamma_synthetic(spec: GammaSpec) -> DataMatrix:
    """I.i.d. Gamma(shape, scale) entries plus Uniform[0, noise) noise."""
    rng = make_rng(spec.seed)
    # (n, d) then transpose: the stream is consumed one column at a time
    X = rng.gamma(spec.shape_alpha, spec.scale_theta, size=(spec.n, spec.d))
    if spec.noise_amplitude > 0:
        X += rng.uniform(0.0, spec.noise_amplitude, size=(spec.n, spec.d))
    return DataMatrix.from_array(np.ascontiguousarray(X.T))


@dataclass(frozen=True)
class ClusterSpec:
    """Gaussian blobs around nonnegative centres.

    With ``sub_offsets`` every centre is replaced by one sub-centre per
    offset vector (``centre + offset``), giving a two-level hierarchy. The
    ``n`` points are shared as evenly as possible over the leaf clusters.
    """

    d: int
    n: int
    centers: tuple
    spread: float
    sub_offsets: tuple | None = None
    seed: int = 0

    def __post_init__(self):
        centers = np.asarray(self.centers, dtype=np.float64)
        if centers.ndim != 2 or centers.shape[1] != self.d:
            raise ValueError(f"centers must be m x d with d={self.d}")
        if np.any(centers < 0):
            raise ValueError("centers must be nonnegative")
        if self.spread < 0:
            raise ValueError("spread must be nonnegative")
        if self.sub_offsets is not None:
            off = np.asarray(self.sub_offsets, dtype=np.float64)
            if off.ndim != 2 or off.shape[1] != self.d:
                raise ValueError("sub_offsets must be s x d")
            if np.any(centers[:, None, :] + off[None, :, :] < 0):
                raise ValueError("sub-centres must be nonnegative")

    def leaf_centers(self):
        """``(leaf centres, top label, sub label)`` arrays."""
        centers = np.asarray(self.centers, dtype=np.float64)
        if self.sub_offsets is None:
            m = len(centers)
            return centers, np.arange(m), np.zeros(m, dtype=int)
        off = np.asarray(self.sub_offsets, dtype=np.float64)
        leaves = (centers[:, None, :] + off[None, :, :]).reshape(-1, self.d)
        top = np.repeat(np.arange(len(centers)), len(off))
        sub = np.tile(np.arange(len(off)), len(centers))
        return leaves, top, sub

    def to_dict(self):
        out = asdict(self)
        out["centers"] = np.asarray(self.centers).tolist()
        if self.sub_offsets is not None:
            out["sub_offsets"] = np.asarray(self.sub_offsets).tolist()
        return out


class ClusteredData(NamedTuple):
    matrix: DataMatrix
    labels: np.ndarray
    sub_labels: np.ndarray


def clustered_synthetic(spec: ClusterSpec) -> ClusteredData:
    """Sample points around the leaf centres, rejecting any with a negative entry."""
    rng = make_rng(spec.seed)
    leaves, top, sub = spec.leaf_centers()
    m = len(leaves)
    counts = np.full(m, spec.n // m)
    counts[: spec.n % m] += 1
    leaf_of = np.repeat(np.arange(m), counts)
    X = np.empty((spec.d, spec.n))
    for i, leaf in enumerate(leaf_of):
        for _ in range(MAX_REJECTIONS):
            x = leaves[leaf] + spec.spread * rng.standard_normal(spec.d)
            if np.all(x >= 0):
                break
        else:
            raise RejectionOverflow(f"point {i}: no nonnegative draw in {MAX_REJECTIONS} attempts")
        X[:, i] = x
    return ClusteredData(DataMatrix.from_array(X), top[leaf_of], sub[leaf_of])


def hierarchical_spec(n_centers=3, n_sub=3, points_per_leaf=20, spread=0.01,
                      sub_offset=0.15, baseline=0.1, seed=0) -> ClusterSpec:
    """Block-structured nested clusters that stay distinct after column normalization.

    ``n_sub=0`` gives flat clusters. Coordinates ``0..n_centers-1`` carry the top-level centres (unit bumps
    above ``baseline``); coordinates ``n_centers..`` carry the sub-cluster
    offsets, identical for every centre. Separation therefore falls in three
    tiers: about 1 between top clusters, ``sub_offset`` between siblings and
    ``spread`` within a leaf.
    """
    d = n_centers + n_sub
    centers = np.full((n_centers, d), baseline)
    centers[np.arange(n_centers), np.arange(n_centers)] += 1.0
    if n_sub == 0:
        return ClusterSpec(d, n_centers * points_per_leaf, tuple(map(tuple, centers)), spread, None, seed)
    offsets = np.zeros((n_sub, d))
    offsets[np.arange(n_sub), n_centers + np.arange(n_sub)] = sub_offset
    return ClusterSpec(d, n_centers * n_sub * points_per_leaf, tuple(map(tuple, centers)),
                       spread, tuple(map(tuple, offsets)), seed)


def flat_spec(centers, points_per_cluster=30, spread=0.01, seed=0) -> ClusterSpec:
    centers = np.asarray(centers, dtype=np.float64)
    return ClusterSpec(centers.shape[1], len(centers) * points_per_cluster,
                       tuple(map(tuple, centers)), spread, None, seed)
