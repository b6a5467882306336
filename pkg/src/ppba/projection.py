"""Low-frequency DCT sensing operator.

The operator maps an m-dimensional measurement vector to a C x H x W
image-domain perturbation (adjoint) and back (forward). It is built from
the orthonormal 2D DCT, with the m lowest frequencies selected per a
deterministic zig-zag order, so its rows are orthonormal and application
is matrix-free.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, NamedTuple, Tuple

import numpy as np
from scipy import fft as spfft

__all__ = [
    "TensorShape",
    "FrequencyIndex",
    "SensingOperator",
    "dct2_forward",
    "dct2_inverse",
    "zigzag_selection",
]

# Dense materialization is for tests only; keep it bounded.
MATERIALIZE_GUARD = 2 ** 24


@dataclass(frozen=True)
class TensorShape:
    """Shape of the image space: channels x height x width."""

    channels: int
    height: int
    width: int

    def __post_init__(self):
        for name in ("channels", "height", "width"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or v <= 0:
                raise ValueError(f"{name} must be a positive integer, got {v!r}")

    @property
    def d(self) -> int:
        return self.channels * self.height * self.width

    def as_tuple(self) -> Tuple[int, int, int]:
        return (self.channels, self.height, self.width)


class FrequencyIndex(NamedTuple):
    channel: int
    u: int  # vertical frequency
    v: int  # horizontal frequency


def _check_2d_finite(x, name: str) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"{name} must be a 2D array, got ndim={x.ndim}")
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{name} contains non-finite entries")
    return x


def dct2_forward(x) -> np.ndarray:
    """Orthonormal type-II 2D DCT (norm-preserving)."""
    x = _check_2d_finite(x, "input")
    return spfft.dctn(x, type=2, norm="ortho")


def dct2_inverse(X) -> np.ndarray:
    """Inverse of :func:`dct2_forward` (orthonormal type-III 2D DCT)."""
    X = _check_2d_finite(X, "input")
    return spfft.idctn(X, type=2, norm="ortho")


def zigzag_selection(shape: TensorShape, m: int) -> List[FrequencyIndex]:
    """Pick the m lowest frequencies.

    Per channel, frequencies are ordered by ascending u+v with ties broken
    by smaller u; channels are interleaved round-robin so any m spreads
    evenly across channels. Deterministic and duplicate-free.
    """
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")
    if m > shape.d:
        raise ValueError(f"m={m} exceeds d={shape.d}")
    per_channel = m // shape.channels + (1 if m % shape.channels else 0)
    freqs = sorted(
        ((u + v, u, v) for u in range(shape.height) for v in range(shape.width))
    )[:per_channel]
    selection = []
    for (_, u, v) in freqs:
        for c in range(shape.channels):
            selection.append(FrequencyIndex(c, u, v))
            if len(selection) == m:
                return selection
    return selection


@dataclass(frozen=True)
class SensingOperator:
    """The sensing map A: rows are low-frequency inverse-DCT basis images.

    AA^T = I_m exactly (up to floats), so the adjoint preserves norms.
    Immutable after construction and safe to share across attacks.
    """

    shape: TensorShape
    m: int
    selection: Tuple[FrequencyIndex, ...]
    _idx: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not (1 <= self.m <= self.shape.d):
            raise ValueError(f"m={self.m} out of range [1, {self.shape.d}]")
        if len(self.selection) != self.m:
            raise ValueError("selection length must equal m")
        if len(set(self.selection)) != self.m:
            raise ValueError("selection contains duplicates")
        ch = np.array([s.channel for s in self.selection])
        uu = np.array([s.u for s in self.selection])
        vv = np.array([s.v for s in self.selection])
        object.__setattr__(self, "_idx", (ch, uu, vv))

    @classmethod
    def low_frequency(cls, shape: TensorShape, m: int) -> "SensingOperator":
        return cls(shape=shape, m=m, selection=tuple(zigzag_selection(shape, m)))

    @property
    def d(self) -> int:
        return self.shape.d

    def apply_adjoint(self, z) -> np.ndarray:
        """delta = A^T z: scatter z into the selected DCT slots, then IDCT."""
        z = np.asarray(z, dtype=np.float64)
        if z.shape != (self.m,):
            raise ValueError(f"z must have shape ({self.m},), got {z.shape}")
        coeffs = np.zeros(self.shape.as_tuple())
        coeffs[self._idx] = z
        return spfft.idctn(coeffs, type=2, norm="ortho", axes=(1, 2))

    def apply_forward(self, w) -> np.ndarray:
        """z = A w: per-channel DCT, then gather the selected coefficients."""
        w = np.asarray(w, dtype=np.float64)
        if w.shape != self.shape.as_tuple():
            raise ValueError(
                f"tensor shape {w.shape} does not match {self.shape.as_tuple()}"
            )
        coeffs = spfft.dctn(w, type=2, norm="ortho", axes=(1, 2))
        return coeffs[self._idx]

    def materialize(self) -> np.ndarray:
        """Explicit m x d matrix A (tests only; guarded by size)."""
        if self.m * self.d > MATERIALIZE_GUARD:
            raise ValueError(
                f"materialize refused: m*d={self.m * self.d} > {MATERIALIZE_GUARD}"
            )
        A = np.empty((self.m, self.d))
        e = np.zeros(self.m)
        for j in range(self.m):
            e[j] = 1.0
            A[j] = self.apply_adjoint(e).ravel()
            e[j] = 0.0
        return A
