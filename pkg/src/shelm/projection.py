"""Observation-to-language-space projections used by the baseline agents.

FrozenHopfieldProjector: one softmax attention step over a frozen token
embedding matrix through a fixed random projection. Output is a convex
combination of embedding rows; observations producing equal attention
logits collapse to the same mixture, which is the known failure mode of
this mapping.

BatchNormMapper: affine statistic matching. A calibration batch of
observation embeddings is shifted and scaled per dimension so the mapped
batch has the vocabulary embeddings' mean and standard deviation.
Population (ddof=0) statistics are used throughout.
"""

from __future__ import annotations

import hashlib

import numpy as np

from .errors import ArgumentError, CalibrationError
from .seeding import rng_for
from .stores import EmbeddingTable


class FrozenHopfieldProjector:
    """Immutable random projector: obs -> softmax(beta * E P obs) mixture of E rows."""

    def __init__(self, seed: int, obs_dim: int, embeddings: EmbeddingTable, beta: float = 100.0):
        if obs_dim <= 0:
            raise ArgumentError(f"obs_dim must be positive, got {obs_dim}")
        if beta <= 0:
            raise ArgumentError(f"beta must be positive, got {beta}")
        m, n = embeddings.dim, obs_dim
        # entries ~ N(0, n/m) so that |P obs| is on the scale of |obs|
        proj = rng_for("frozen-hopfield", seed).standard_normal((m, n)) * np.sqrt(n / m)
        proj.flags.writeable = False
        self.seed = int(seed)
        self.obs_dim = int(obs_dim)
        self.beta = float(beta)
        self.projection = proj
        self._embed64 = embeddings.matrix.astype(np.float64)
        self.embeddings = embeddings

    def weights(self, obs: np.ndarray) -> np.ndarray:
        """Softmax attention weights over vocabulary rows (sum to 1)."""
        obs = np.asarray(obs, dtype=np.float64).ravel()
        if obs.shape[0] != self.obs_dim:
            raise ArgumentError(f"observation dim {obs.shape[0]} != {self.obs_dim}")
        if not np.isfinite(obs).all():
            raise ArgumentError("observation has non-finite entries")
        logits = self.beta * (self._embed64 @ (self.projection @ obs))
        logits -= logits.max()
        w = np.exp(logits)
        return w / w.sum()

    def project(self, obs: np.ndarray) -> np.ndarray:
        """Mixture embedding E^T softmax(beta E P obs), in the rows' convex hull."""
        return self._embed64.T @ self.weights(obs)

    def state_hash(self) -> str:
        h = hashlib.sha256()
        h.update(self.projection.tobytes())
        h.update(np.float64(self.beta).tobytes())
        h.update(str(self.seed).encode())
        return h.hexdigest()


class BatchNormMapper:
    """Frozen affine map matching observation statistics to vocabulary statistics.

    Construct via calibrate(); all four statistic vectors are fixed from then
    on, so transform() is a pure function.
    """

    def __init__(self, mu_e, sigma_e, calib_mean, calib_std):
        arrays = [np.asarray(a, dtype=np.float64) for a in (mu_e, sigma_e, calib_mean, calib_std)]
        dims = {a.shape for a in arrays}
        if len(dims) != 1:
            raise ArgumentError(f"statistic vectors disagree in shape: {dims}")
        if (arrays[1] <= 0).any() or (arrays[3] <= 0).any():
            raise ArgumentError("standard deviations must be strictly positive")
        self.mu_e, self.sigma_e, self.calib_mean, self.calib_std = arrays
        for a in arrays:
            a.flags.writeable = False

    @classmethod
    def calibrate(cls, obs_embeddings: np.ndarray, embeddings: EmbeddingTable) -> "BatchNormMapper":
        batch = np.asarray(obs_embeddings, dtype=np.float64)
        if batch.ndim != 2 or batch.shape[0] < 2:
            raise ArgumentError(
                f"calibration batch must be 2-D with at least 2 rows, got shape {batch.shape}"
            )
        if batch.shape[1] != embeddings.dim:
            raise ArgumentError(
                f"calibration batch dim {batch.shape[1]} != vocabulary embedding dim "
                f"{embeddings.dim} (this mapper requires equal dimensionalities)"
            )
        if not np.isfinite(batch).all():
            raise ArgumentError("calibration batch has non-finite entries")
        vocab = embeddings.matrix.astype(np.float64)
        mu_e = vocab.mean(axis=0)
        sigma_e = vocab.std(axis=0)
        if (sigma_e == 0).any():
            d = int(np.flatnonzero(sigma_e == 0)[0])
            raise CalibrationError(f"vocabulary embeddings have zero variance in dimension {d}")
        calib_mean = batch.mean(axis=0)
        calib_std = batch.std(axis=0)
        if (calib_std == 0).any():
            d = int(np.flatnonzero(calib_std == 0)[0])
            raise CalibrationError(f"calibration batch has zero variance in dimension {d}")
        return cls(mu_e, sigma_e, calib_mean, calib_std)

    def transform(self, obs_embedding: np.ndarray) -> np.ndarray:
        """mu_E + sigma_E * (x - calib_mean) / calib_std, elementwise."""
        x = np.asarray(obs_embedding, dtype=np.float64)
        if x.shape[-1] != self.mu_e.shape[0]:
            raise ArgumentError(f"input dim {x.shape[-1]} != calibrated dim {self.mu_e.shape[0]}")
        if not np.isfinite(x).all():
            raise ArgumentError("input has non-finite entries")
        return self.mu_e + self.sigma_e * (x - self.calib_mean) / self.calib_std

    def state_hash(self) -> str:
        h = hashlib.sha256()
        for a in (self.mu_e, self.sigma_e, self.calib_mean, self.calib_std):
            h.update(a.tobytes())
        return h.hexdigest()
