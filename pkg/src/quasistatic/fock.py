"""Truncated fermionic Fock spaces built with Jordan-Wigner strings.

Basis states are occupation tuples (n_1, ..., n_M) ordered lexicographically
with mode 1 the most significant factor; single-mode basis is (|0>, |1>).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import reduce
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import DimensionMismatch

_LOWER = np.array([[0.0, 1.0], [0.0, 0.0]])
_Z = np.diag([1.0, -1.0])

SIGMA1 = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA2 = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA3 = np.diag([1.0, -1.0]).astype(complex)


@dataclass(frozen=True)
class ModeGrid:
    """Energies and quadrature weights of the discretised glued line."""

    energies: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        u = np.asarray(self.energies, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        object.__setattr__(self, "energies", u)
        object.__setattr__(self, "weights", w)
        if u.ndim != 1 or u.shape != w.shape or len(u) == 0:
            raise ValueError("energies and weights must be equal-length 1-d arrays")
        if np.any(np.diff(u) <= 0):
            raise ValueError("energies must be strictly increasing")
        if np.any(w <= 0):
            raise ValueError("weights must be positive")
        if not np.allclose(u, -u[::-1], atol=1e-12, rtol=0):
            raise ValueError("grid must be symmetric about 0")

    @property
    def size(self) -> int:
        return len(self.energies)

    @classmethod
    def symmetric(cls, u_max: float, modes: int) -> "ModeGrid":
        """Uniform grid with spacing 2*u_max/modes and the origin left out.

        Positive nodes are k*Δ for k = 1..modes/2 with Δ = 2*u_max/modes.
        Weights are those of the trapezoid rule on the full uniform grid
        including 0 (Δ inside, Δ/2 at ±u_max); the dropped origin node
        carries no weight because the glued factors vanish there.
        """
        if modes < 2 or modes % 2:
            raise ValueError("modes must be a positive even number")
        half = modes // 2
        delta = u_max / half
        pos = delta * np.arange(1, half + 1)
        wpos = np.full(half, delta)
        wpos[-1] = delta / 2
        return cls(np.concatenate([-pos[::-1], pos]), np.concatenate([wpos[::-1], wpos]))

    def inner(self, f, g) -> complex:
        return complex(np.sum(self.weights * np.conj(f) * g))

    def norm2(self, f) -> float:
        return float(np.sum(self.weights * np.abs(f) ** 2))


def _kron_all(mats: Sequence[np.ndarray]) -> np.ndarray:
    return reduce(np.kron, mats)


class FockSpace:
    """Fock space over a ModeGrid with eager Jordan-Wigner mode operators."""

    def __init__(self, grid: ModeGrid):
        self.grid = grid
        self.modes = grid.size
        self.dim = 2 ** self.modes
        eye2 = np.eye(2)
        self._c: List[np.ndarray] = []
        for j in range(self.modes):
            factors = [_Z] * j + [_LOWER] + [eye2] * (self.modes - j - 1)
            self._c.append(_kron_all(factors))
        occ = (np.arange(self.dim)[:, None] >> np.arange(self.modes - 1, -1, -1)) & 1
        self.occupations = occ

    def mode_ops(self, j: int) -> Tuple[np.ndarray, np.ndarray]:
        """(c_j, c_j^*) for 1-based mode index j."""
        if not 1 <= j <= self.modes:
            raise IndexError(f"mode index {j} outside 1..{self.modes}")
        c = self._c[j - 1]
        return c, c.T.copy()

    def annihilator(self, coeffs) -> np.ndarray:
        """Σ_j sqrt(w_j) coeffs_j c_j (coefficients used as given)."""
        coeffs = np.asarray(coeffs, dtype=complex)
        root = np.sqrt(self.grid.weights)
        out = np.zeros((self.dim, self.dim), dtype=complex)
        for j in range(self.modes):
            out += root[j] * coeffs[j] * self._c[j]
        return out

    def creator(self, coeffs) -> np.ndarray:
        """Σ_j sqrt(w_j) coeffs_j c_j^*."""
        return self.annihilator(np.conj(coeffs)).conj().T

    def smeared_field(self, f) -> Tuple[np.ndarray, np.ndarray]:
        """(a(f), a^*(f)); a is antilinear in f, a^* linear."""
        f = np.asarray(f, dtype=complex)
        if f.shape != (self.modes,):
            raise DimensionMismatch("grid function has wrong length")
        return self.annihilator(np.conj(f)), self.creator(f)

    def dGamma(self, h) -> np.ndarray:
        h = np.broadcast_to(np.asarray(h, dtype=complex), (self.modes,))
        return np.diag(self.occupations @ h)

    def number_operator(self) -> np.ndarray:
        return np.diag(self.occupations.sum(axis=1).astype(complex))

    def parity(self) -> np.ndarray:
        return np.diag((-1.0) ** self.occupations.sum(axis=1)).astype(complex)

    def vacuum(self) -> np.ndarray:
        v = np.zeros(self.dim, dtype=complex)
        v[0] = 1.0
        return v


@dataclass(frozen=True)
class Layout:
    """Ordered tensor slots: small-left, small-right, reservoir 1, ..., n."""

    dims: Tuple[int, ...]

    @property
    def total(self) -> int:
        return int(np.prod(self.dims))

    def assemble(self, factors: Dict[int, np.ndarray] | Sequence[Optional[np.ndarray]]) -> np.ndarray:
        """Kronecker product with identities in unspecified slots.

        ``factors`` is either a full list (``None`` for identity) or a dict
        mapping slot index to operator.  Slots are plainly commuting; no
        Jordan-Wigner string links different reservoirs.
        """
        if isinstance(factors, dict):
            items = [factors.get(k) for k in range(len(self.dims))]
            if any(k not in range(len(self.dims)) for k in factors):
                raise DimensionMismatch("slot index outside layout")
        else:
            items = list(factors)
            if len(items) != len(self.dims):
                raise DimensionMismatch(f"expected {len(self.dims)} factors, got {len(items)}")
        mats = []
        for d, op in zip(self.dims, items):
            if op is None:
                mats.append(np.eye(d))
                continue
            op = np.asarray(op)
            if op.shape != (d, d):
                raise DimensionMismatch(f"factor of shape {op.shape} in slot of dimension {d}")
            mats.append(op)
        # group consecutive identities so kron stays cheap
        out = np.ones((1, 1))
        pending = 1
        for m, op in zip(mats, items):
            if op is None:
                pending *= m.shape[0]
                continue
            if pending > 1:
                out = np.kron(out, np.eye(pending))
                pending = 1
            out = np.kron(out, m)
        if pending > 1:
            out = np.kron(out, np.eye(pending))
        return out.astype(complex)

    def vector(self, parts: Sequence[np.ndarray]) -> np.ndarray:
        if len(parts) != len(self.dims) or any(len(p) != d for p, d in zip(parts, self.dims)):
            raise DimensionMismatch("vector factors do not match layout")
        return _kron_all([np.asarray(p, dtype=complex) for p in parts])
