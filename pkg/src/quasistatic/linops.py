"""Dense complex linear algebra: resolvents, circle quadrature, exponentials.

Every operator in the package is a plain ``numpy.ndarray`` of dtype
complex128.  Helpers here validate shapes, evaluate Cauchy-type contour
integrals with the trapezoid rule and wrap the scipy eigen/exponential
routines with residual checks.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import scipy.linalg as sla
from scipy.linalg.lapack import ztrtri
from scipy.sparse.linalg import expm_multiply

from .errors import DimensionMismatch, NonConvergent, Overflow, SingularShift

# Below this dimension resolvents at all quadrature nodes are formed in one
# batched inverse; above it we go through a Schur form once and only do
# triangular solves per node.
BATCH_DIM = 96


def as_matrix(A, dim: Optional[int] = None) -> np.ndarray:
    """Return ``A`` as a finite, square complex128 array."""
    M = np.asarray(A, dtype=complex)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {M.shape}")
    if dim is not None and M.shape[0] != dim:
        raise DimensionMismatch(f"expected dimension {dim}, got {M.shape[0]}")
    if not np.all(np.isfinite(M)):
        raise ValueError("matrix has non-finite entries")
    return M


def opnorm(A) -> float:
    """Spectral (operator 2-) norm."""
    A = np.asarray(A)
    if A.ndim == 1:
        return float(np.linalg.norm(A))
    return float(np.linalg.norm(A, 2))


def commutator(A, B) -> np.ndarray:
    return A @ B - B @ A


def numerical_abscissa(A) -> float:
    """Largest eigenvalue of the Hermitian part of ``A``."""
    A = np.asarray(A, dtype=complex)
    return float(np.linalg.eigvalsh(0.5 * (A + A.conj().T))[-1])


@dataclass(frozen=True)
class Contour:
    """Positively oriented circle used for trapezoid quadrature."""

    center: complex
    radius: float
    nodes: int = 64

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("contour radius must be positive")
        if self.nodes < 16 or self.nodes % 2:
            raise ValueError("contour needs an even number of nodes >= 16")

    def points(self, nodes: Optional[int] = None) -> np.ndarray:
        n = self.nodes if nodes is None else nodes
        phi = 2.0 * np.pi * np.arange(n) / n
        return self.center + self.radius * np.exp(1j * phi)

    def contains(self, z) -> np.ndarray:
        return np.abs(np.asarray(z) - self.center) < self.radius


def _trapezoid_pair(values, zs, center):
    """Quadrature of (1/2πi)∮ f dz from values on 2n nodes.

    Returns the n-node estimate (even nodes) and the 2n-node estimate.
    """
    w = zs - center
    shape = (-1,) + (1,) * (values.ndim - 1)
    weighted = values * w.reshape(shape)
    fine = weighted.sum(axis=0) / len(zs)
    coarse = weighted[::2].sum(axis=0) / (len(zs) // 2)
    return coarse, fine


def _check_doubling(coarse, fine, tol):
    scale = max(1.0, float(np.max(np.abs(fine))))
    diff = float(np.max(np.abs(coarse - fine)))
    if diff > tol * scale:
        raise NonConvergent(f"node doubling changed the contour integral by {diff:.3e}")
    return diff


def contour_integral(f: Callable[[complex], np.ndarray], contour: Contour,
                     tol: float = 1e-10, check: bool = True) -> np.ndarray:
    """(1/2πi)∮ f(z) dz with the trapezoid rule on ``contour``.

    With ``check`` the integrand is also sampled at the interleaved midpoints
    and the two estimates must agree to ``tol`` (relative to max(1, |I|)).
    """
    n = contour.nodes
    zs = contour.points(2 * n if check else n)
    values = np.stack([np.asarray(f(z), dtype=complex) for z in zs])
    if not check:
        w = (zs - contour.center).reshape((-1,) + (1,) * (values.ndim - 1))
        return (values * w).sum(axis=0) / n
    coarse, fine = _trapezoid_pair(values, zs, contour.center)
    _check_doubling(coarse, fine, tol)
    return coarse


def resolvent(A, z: complex, tol: float = 1e-10) -> np.ndarray:
    """R(z) = (z - A)^{-1} with a multiply-back residual check."""
    A = as_matrix(A)
    M = z * np.eye(A.shape[0]) - A
    try:
        with warnings.catch_warnings(), np.errstate(divide="ignore", invalid="ignore"):
            warnings.simplefilter("ignore", sla.LinAlgWarning)
            R = sla.solve(M, np.eye(A.shape[0], dtype=complex), check_finite=False)
    except (sla.LinAlgError, ValueError) as exc:
        raise SingularShift(f"resolvent solve failed at z={z}") from exc
    if not np.all(np.isfinite(R)):
        raise SingularShift(f"resolvent not finite at z={z}")
    resid = np.linalg.norm(M @ R - np.eye(A.shape[0]), 1)
    cond = np.linalg.norm(M, 1) * np.linalg.norm(R, 1)
    if resid > tol * max(1.0, cond):
        raise SingularShift(f"resolvent residual {resid:.2e} at z={z} (cond {cond:.2e})")
    return R


class NodeResolvents:
    """Resolvents of one fixed matrix evaluated on contour nodes.

    Small matrices use a single batched inverse.  Larger ones are reduced to
    complex Schur form ``A = Z T Z^H`` once; integrals are accumulated in the
    Schur basis and rotated back at the end.
    """

    def __init__(self, A):
        self.A = as_matrix(A)
        self.dim = self.A.shape[0]
        self.schur = self.dim > BATCH_DIM
        if self.schur:
            self.T, self.Z = sla.schur(self.A, output="complex")

    def _to_basis(self, B):
        return B if not self.schur else self.Z.conj().T @ B @ self.Z

    def _from_basis(self, B):
        return B if not self.schur else self.Z @ B @ self.Z.conj().T

    def _schur_node(self, z, eye, sandwich, vector):
        M = z * eye - self.T
        if vector is not None and sandwich is None:
            return sla.solve_triangular(M, vector, check_finite=False)
        Rt, info = ztrtri(M)
        if info != 0:
            raise SingularShift(f"triangular inverse failed at z={z}")
        if sandwich is not None:
            out = Rt @ sandwich @ Rt
            return out if vector is None else out @ vector
        return Rt

    def integrate(self, contour: Contour, sandwich=None, vector=None, power: int = 0,
                  tol: float = 1e-10, check: bool = True) -> np.ndarray:
        """(1/2πi)∮ (z-c)^power R B R dz, or R v, or plain R."""
        zs = contour.points(2 * contour.nodes if check else contour.nodes)
        B = None if sandwich is None else self._to_basis(as_matrix(sandwich, self.dim))
        v = None
        if vector is not None:
            v = np.asarray(vector, dtype=complex)
            if self.schur:
                v = self.Z.conj().T @ v
        w = (zs - contour.center) ** (power + 1)
        if not self.schur:
            Rs = np.linalg.inv(zs[:, None, None] * np.eye(self.dim) - self.A)
            vals = Rs @ B @ Rs if B is not None else Rs
            if v is not None:
                vals = vals @ v
            weighted = vals * w.reshape((-1,) + (1,) * (vals.ndim - 1))
            fine = weighted.sum(axis=0) / len(zs)
            coarse = weighted[::2].sum(axis=0) / (len(zs) // 2) if check else fine
        else:
            eye = np.eye(self.dim)
            fine = coarse = 0.0
            for k, z in enumerate(zs):
                val = w[k] * self._schur_node(z, eye, B, v)
                fine = fine + val
                if check and k % 2 == 0:
                    coarse = coarse + val
            fine = fine / len(zs)
            coarse = coarse / (len(zs) // 2) if check else fine
        if check:
            _check_doubling(coarse, fine, tol)
        if v is not None:
            return coarse if not self.schur else self.Z @ coarse
        return self._from_basis(coarse)


def riesz_projector(A, contour: Contour, tol: float = 1e-10, check: bool = True) -> np.ndarray:
    """Spectral projection (1/2πi)∮ (z - A)^{-1} dz."""
    return NodeResolvents(A).integrate(contour, tol=tol, check=check)


def sandwich_integral(A, B, contour: Contour, tol: float = 1e-10,
                      check: bool = True) -> np.ndarray:
    """(1/2πi)∮ R(z) B R(z) dz."""
    return NodeResolvents(A).integrate(contour, sandwich=B, tol=tol, check=check)


@dataclass(frozen=True)
class EigenDecomposition:
    eigenvalues: np.ndarray
    vectors: np.ndarray
    condition: Optional[np.ndarray]
    residual: float


def eig_decompose(A, left: bool = True, tol: float = 1e-10) -> EigenDecomposition:
    """Dense eigendecomposition validated by ‖AV - VΛ‖ ≤ tol·‖A‖ (1-norms)."""
    A = as_matrix(A)
    if left:
        w, vl, vr = sla.eig(A, left=True, right=True, check_finite=False)
    else:
        w, vr = sla.eig(A, check_finite=False)
    vr = vr / np.linalg.norm(vr, axis=0)
    resid = float(np.linalg.norm(A @ vr - vr * w, 1))
    scale = max(float(np.linalg.norm(A, 1)), 1e-300)
    if resid > tol * scale:
        raise NonConvergent(f"eigendecomposition residual {resid:.2e}")
    cond = None
    if left:
        vl = vl / np.linalg.norm(vl, axis=0)
        overlap = np.abs(np.sum(vl.conj() * vr, axis=0))
        with np.errstate(divide="ignore"):
            cond = 1.0 / overlap
    return EigenDecomposition(w, vr, cond, resid / scale if scale else 0.0)


def expm_action(A, t: float, v, cap: float = 1e4) -> np.ndarray:
    """e^{tA} v.  Refuses when ‖tA‖₁ exceeds ``cap``; callers chain steps."""
    A = as_matrix(A)
    if not np.isfinite(t):
        raise ValueError("t must be finite")
    size = abs(t) * float(np.linalg.norm(A, 1))
    if size > cap:
        raise Overflow(f"‖tA‖ = {size:.3e} exceeds cap {cap:.1e}")
    v = np.asarray(v, dtype=complex)
    if t == 0 or size == 0:
        return v.copy()
    return expm_multiply(t * A, v)


class StepExponential:
    """Dense exp(dt A) for repeated stepping on a uniform time grid.

    The same ‖dt A‖ cap as ``expm_action`` applies; longer steps are split
    into equal substeps whose exponentials are multiplied together.
    """

    def __init__(self, A, dt: float, cap: float = 1e4):
        A = as_matrix(A)
        size = abs(dt) * float(np.linalg.norm(A, 1))
        pieces = max(1, int(np.ceil(size / cap)))
        E = sla.expm((dt / pieces) * A)
        out = E
        for _ in range(pieces - 1):
            out = E @ out
        self.dt = dt
        self.matrix = out

    def orbit(self, v, steps: int) -> np.ndarray:
        """[v, E v, E^2 v, ...] with ``steps + 1`` entries."""
        out = np.empty((steps + 1, len(v)), dtype=complex)
        out[0] = v
        for k in range(steps):
            out[k + 1] = self.matrix @ out[k]
        return out
