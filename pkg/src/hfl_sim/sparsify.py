"""Top-fraction gradient sparsification with momentum correction and error
feedback: unselected mass stays in local buffers and is retransmitted once it
grows large enough."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class SparsifierConfig:
    """Per-hop kept fractions are (1 - phi); sigma is the momentum-correction
    factor and beta_m / beta_s discount the server-side residuals."""

    phi_ul_mu: float = 0.0
    phi_dl_sbs: float = 0.0
    phi_ul_sbs: float = 0.0
    phi_dl_mbs: float = 0.0
    sigma: float = 0.9
    beta_m: float = 0.2
    beta_s: float = 0.5

    def validate(self) -> list[str]:
        errs = []
        for name in ("phi_ul_mu", "phi_dl_sbs", "phi_ul_sbs", "phi_dl_mbs"):
            if not 0.0 <= getattr(self, name) < 1.0:
                errs.append(f"sparsifier.{name} must lie in [0, 1)")
        if not 0.0 <= self.sigma < 1.0:
            errs.append("sparsifier.sigma must lie in [0, 1)")
        for name in ("beta_m", "beta_s"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                errs.append(f"sparsifier.{name} must lie in [0, 1]")
        return errs

    def any_sparse(self) -> bool:
        return any(
            p > 0.0
            for p in (self.phi_ul_mu, self.phi_dl_sbs, self.phi_ul_sbs, self.phi_dl_mbs)
        )


def kept_count(dim: int, phi: float) -> int:
    """Number of entries a (1 - phi) top-fraction pass keeps: ceil((1-phi)*dim),
    with float fuzz snapped to the nearest integer so exact fractions stay exact."""
    if dim < 1:
        raise ValueError("dim must be >= 1")
    if not 0.0 <= phi < 1.0:
        raise ValueError("phi must lie in [0, 1)")
    x = (1.0 - phi) * dim
    n = round(x)
    if abs(x - n) > 1e-9:
        n = math.ceil(x)
    return max(1, min(dim, int(n)))


@dataclass
class SparseVector:
    dim: int
    indices: np.ndarray
    values: np.ndarray

    @property
    def nnz(self) -> int:
        return int(self.indices.size)

    def densify(self) -> np.ndarray:
        out = np.zeros(self.dim)
        out[self.indices] = self.values
        return out

    def validate(self) -> None:
        if self.indices.shape != self.values.shape:
            raise ValueError("indices and values must align")
        if self.indices.size:
            if self.indices.min() < 0 or self.indices.max() >= self.dim:
                raise ValueError("index out of range")
            if np.any(np.diff(self.indices) <= 0):
                raise ValueError("indices must be strictly increasing")

    def to_wire(self) -> dict:
        return {
            "dim": self.dim,
            "count": self.nnz,
            "indices": self.indices.tolist(),
            "values": self.values.tolist(),
        }

    @classmethod
    def from_wire(cls, raw: dict) -> "SparseVector":
        sv = cls(
            dim=int(raw["dim"]),
            indices=np.asarray(raw["indices"], dtype=np.int64),
            values=np.asarray(raw["values"], dtype=float),
        )
        sv.validate()
        return sv


def _top_indices(v: np.ndarray, k: int) -> np.ndarray:
    # Stable sort on descending magnitude: magnitude ties keep the lower index.
    return np.argsort(-np.abs(v), kind="stable")[:k]


def top_fraction(v, phi: float) -> SparseVector:
    """Keep the ceil((1-phi)*dim) largest-magnitude entries of v."""
    v = np.asarray(v, dtype=float)
    idx = np.sort(_top_indices(v, kept_count(v.size, phi)))
    return SparseVector(dim=v.size, indices=idx, values=v[idx].copy())


def threshold_mask(v, phi: float) -> np.ndarray:
    """Boolean mask of the entries top_fraction would keep."""
    v = np.asarray(v, dtype=float)
    mask = np.zeros(v.size, dtype=bool)
    mask[_top_indices(v, kept_count(v.size, phi))] = True
    return mask


@dataclass
class ErrorBuffers:
    """Per-sender carry state: u accumulates momentum, v accumulates the
    not-yet-transmitted mass."""

    u: np.ndarray
    v: np.ndarray
    dim: int

    @classmethod
    def zeros(cls, dim: int) -> "ErrorBuffers":
        return cls(u=np.zeros(dim), v=np.zeros(dim), dim=dim)


def mu_sparse_step(
    buffers: ErrorBuffers, grad, sigma: float, phi: float
) -> tuple[SparseVector, ErrorBuffers]:
    """One sender-side compression step.

    u <- sigma*u + g; v <- v + u; transmit the top fraction of v; both buffers
    are cleared on the transmitted coordinates and kept elsewhere.
    """
    g = np.asarray(grad, dtype=float)
    if g.shape != (buffers.dim,):
        raise ValueError(f"gradient shape {g.shape} does not match dim {buffers.dim}")
    u = sigma * buffers.u + g
    v = buffers.v + u
    mask = threshold_mask(v, phi)
    idx = np.flatnonzero(mask)
    payload = SparseVector(dim=buffers.dim, indices=idx, values=v[idx].copy())
    keep = ~mask
    return payload, ErrorBuffers(u=u * keep, v=v * keep, dim=buffers.dim)


def apply_discounted_error(delta: np.ndarray, error: np.ndarray, beta: float) -> np.ndarray:
    """Fold a retained residual back into a new difference: delta + beta*error."""
    return delta + beta * error
