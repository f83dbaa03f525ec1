"""Periodized stationary Gaussian fields from white noise.

A field is the circular convolution of torus white noise with the periodized
convolution root, ``V(x) = sum_y root(x - y) W(y) h^d`` with ``W`` i.i.d.
standard normals scaled by ``h^{-d/2}``. Realization ``i`` of an ensemble with
base seed ``s`` draws its noise from ``SeedSequence([s, i])`` so that it does
not depend on how many realizations precede it.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.fft as sfft

from .covariance import CovarianceModel
from .errors import PreconditionError


@dataclass(frozen=True)
class GridSpec:
    """Periodic grid ``[-L/2, L/2)^d`` with ``n`` points per side."""

    d: int
    L: float
    n: int

    @property
    def h(self) -> float:
        return self.L / self.n

    def axis(self) -> np.ndarray:
        return (np.arange(self.n) - self.n // 2) * self.h

    def freqs(self) -> np.ndarray:
        """Dual-lattice wave numbers in FFT order."""
        return 2.0 * np.pi * np.fft.fftfreq(self.n, d=self.h)

    def points(self) -> np.ndarray:
        ax = self.axis()
        if self.d == 1:
            return ax
        X, Y = np.meshgrid(ax, ax, indexing="ij")
        return np.stack([X, Y], axis=-1)

    def shape(self) -> tuple:
        return (self.n,) * self.d

    def validate(self, model: CovarianceModel | None = None) -> None:
        if self.d not in (1, 2):
            raise PreconditionError(f"grid dimension must be 1 or 2, got {self.d}")
        if self.n < 2 or (self.n & (self.n - 1)) != 0:
            raise PreconditionError(f"n must be a power of two, got {self.n}")
        if not (self.L > 0 and math.isfinite(self.L)):
            raise PreconditionError(f"L must be positive, got {self.L}")
        if model is None:
            return
        if model.dim != self.d:
            raise PreconditionError("grid and model dimensions differ")
        if self.h > model.length_scale / 4 * (1 + 1e-12):
            raise PreconditionError(
                f"spacing h={self.h:.4g} exceeds ell/4={model.length_scale / 4:.4g}; kernel unresolved"
            )
        if self.L < 16 * model.correlation_length * (1 - 1e-12):
            raise PreconditionError(
                f"box L={self.L:.4g} shorter than 16 correlation lengths ({16 * model.correlation_length:.4g})"
            )

    def describe(self) -> dict:
        return {"d": self.d, "L": self.L, "n": self.n, "h": self.h}


@dataclass(frozen=True)
class FieldRealization:
    grid: GridSpec
    values: np.ndarray
    seed: int
    index: int
    model_id: str


def realization_rng(seed: int, index: int) -> np.random.Generator:
    """Independent generator for realization ``index`` of base ``seed``."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed) & (2**64 - 1), int(index)])))


def periodized_root(model: CovarianceModel, grid: GridSpec) -> np.ndarray:
    """Root sampled on the grid and wrapped once around each torus direction."""
    ax = grid.axis()
    shifts = (-grid.L, 0.0, grid.L)
    if grid.d == 1:
        return sum(np.asarray(model.kernel_root(ax + s), dtype=float) for s in shifts)
    X, Y = np.meshgrid(ax, ax, indexing="ij")
    out = np.zeros_like(X)
    for sx in shifts:
        for sy in shifts:
            out += model.kernel_root(np.stack([X + sx, Y + sy], axis=-1))
    return out


class FieldSampler:
    """Caches the filter of a (model, grid) pair; samples realizations by index."""

    def __init__(self, model: CovarianceModel, grid: GridSpec, validate: bool = True):
        if validate:
            grid.validate(model)
        self.model = model
        self.grid = grid
        root = periodized_root(model, grid)
        # origin of the root moved to index 0 for circular convolution
        centred = np.fft.ifftshift(root)
        self._filter = sfft.rfftn(centred) * grid.h ** (grid.d / 2)

    def noise(self, seed: int, index: int) -> np.ndarray:
        return realization_rng(seed, index).standard_normal(self.grid.shape())

    def from_noise(self, noise: np.ndarray) -> np.ndarray:
        """Filter a white-noise array (trailing axes = grid axes)."""
        axes = tuple(range(-self.grid.d, 0))
        spec = sfft.rfftn(noise, axes=axes) * self._filter
        return sfft.irfftn(spec, s=self.grid.shape(), axes=axes)

    def values(self, seed: int, indices: Sequence[int]) -> np.ndarray:
        noise = np.stack([self.noise(seed, i) for i in indices])
        return self.from_noise(noise)

    def sample(self, seed: int, index: int = 0) -> FieldRealization:
        vals = self.from_noise(self.noise(seed, index))
        return FieldRealization(self.grid, vals, int(seed), int(index), self.model.model_id)


def sample_field(model: CovarianceModel, grid: GridSpec, seed: int, index: int = 0) -> FieldRealization:
    """One realization of the periodized field; bit-reproducible from (model, grid, seed, index)."""
    return FieldSampler(model, grid).sample(seed, index)


def direct_circular_convolution(root: np.ndarray, noise: np.ndarray, h: float) -> np.ndarray:
    """O(n^2) reference for d=1: ``V_j = sum_m r_{j-m} W_m h^{1/2}`` with ``r`` centred at index n//2."""
    n = root.shape[0]
    r0 = np.fft.ifftshift(root)
    out = np.empty(n)
    for j in range(n):
        idx = (j - np.arange(n)) % n
        out[j] = np.sum(r0[idx] * noise) * math.sqrt(h)
    return out


@dataclass(frozen=True)
class CovarianceEstimate:
    lag: float
    value: float
    stderr: float


def _lag_index(grid: GridSpec, lag: float) -> int:
    m = lag / grid.h
    mi = int(round(m))
    if abs(m - mi) > 1e-9 * max(1.0, abs(m)):
        raise PreconditionError(f"lag {lag} is not a multiple of the grid spacing {grid.h}")
    return mi


def empirical_covariance(fields: Sequence[FieldRealization], lags: Sequence[float]) -> list[CovarianceEstimate]:
    """Ensemble-and-space averaged covariance with a jackknife error over realizations.

    Each realization contributes its spatial mean of ``V(x) V(x + lag e_1)``;
    this is unbiased because the field is centred. The jackknife over
    leave-one-out means reduces to the sample standard error.
    """
    if len(fields) < 2:
        raise PreconditionError("at least two realizations are required")
    grid = fields[0].grid
    if any(f.grid != grid or f.model_id != fields[0].model_id for f in fields):
        raise PreconditionError("fields must share grid and model")
    data = np.stack([f.values for f in fields])
    out = []
    for lag in lags:
        s = _lag_index(grid, lag)
        per = np.mean(data * np.roll(data, -s, axis=1), axis=tuple(range(1, data.ndim)))
        out.append(CovarianceEstimate(float(lag), float(np.mean(per)), _jackknife_stderr(per)))
    return out


def _jackknife_stderr(per: np.ndarray) -> float:
    M = per.shape[0]
    total = np.sum(per)
    loo = (total - per) / (M - 1)
    return float(math.sqrt((M - 1) / M * np.sum((loo - loo.mean()) ** 2)))


def spatial_covariance(field: FieldRealization, lags: Sequence[float], n_blocks: int = 16) -> list[CovarianceEstimate]:
    """Single-realization estimate with a block-jackknife error over ``n_blocks`` contiguous segments."""
    grid = field.grid
    if grid.n % n_blocks:
        raise PreconditionError("n_blocks must divide n")
    out = []
    for lag in lags:
        s = _lag_index(grid, lag)
        prod = field.values * np.roll(field.values, -s, axis=0)
        blocks = prod.reshape((n_blocks, -1) + prod.shape[1:])
        per = blocks.reshape(n_blocks, -1).mean(axis=1)
        out.append(CovarianceEstimate(float(lag), float(per.mean()), _jackknife_stderr(per)))
    return out


def save_field(field: FieldRealization, path: str | Path) -> None:
    """Write little-endian float64 values (row-major) plus a JSON sidecar ``<path>.json``."""
    path = Path(path)
    np.ascontiguousarray(field.values, dtype="<f8").tofile(path)
    meta = {"grid": field.grid.describe(), "seed": field.seed, "index": field.index, "model": field.model_id}
    Path(str(path) + ".json").write_text(json.dumps(meta, indent=2, sort_keys=True))


def load_field(path: str | Path) -> FieldRealization:
    path = Path(path)
    meta = json.loads(Path(str(path) + ".json").read_text())
    g = meta["grid"]
    grid = GridSpec(g["d"], g["L"], g["n"])
    vals = np.fromfile(path, dtype="<f8").reshape(grid.shape())
    return FieldRealization(grid, vals, meta["seed"], meta["index"], meta["model"])
