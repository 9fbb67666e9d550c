"""Dense complex linear algebra shared by every other module.

Everything here works on plain ``numpy`` arrays. Matrices are square
``complex128`` arrays; states are 1-D ``complex128`` arrays.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ALGEBRA_TOL = 1e-10
SPECTRAL_TOL = 1e-8


class DimensionError(ValueError):
    """Operands have incompatible shapes."""


class HermiticityError(ValueError):
    """A matrix expected to be hermitian is not (within tolerance)."""


def _square(A: np.ndarray, name: str = "matrix") -> np.ndarray:
    A = np.asarray(A)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {A.shape}")
    return A


def dagger(A: np.ndarray) -> np.ndarray:
    return A.conj().T


def hermitian_residual(A: np.ndarray) -> float:
    A = _square(A)
    return float(np.abs(A - dagger(A)).max()) if A.size else 0.0


def unitarity_residual(U: np.ndarray) -> float:
    U = _square(U)
    return float(np.abs(dagger(U) @ U - np.eye(U.shape[0])).max())


def is_hermitian(A: np.ndarray, tol: float = ALGEBRA_TOL) -> bool:
    return hermitian_residual(A) < tol


def is_unitary(U: np.ndarray, tol: float = ALGEBRA_TOL) -> bool:
    return unitarity_residual(U) < tol


@dataclass(frozen=True)
class SpectralDecomp:
    """Eigendecomposition ``A = V diag(eigenvalues) V^dagger``.

    ``eigenvalues`` are real and ascending; ``eigenvectors`` is unitary
    (real orthogonal when the input was real symmetric).
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @property
    def dim(self) -> int:
        return self.eigenvalues.shape[0]

    def reconstruct(self) -> np.ndarray:
        V = self.eigenvectors
        return (V * self.eigenvalues) @ dagger(V)

    def apply_function(self, fn) -> np.ndarray:
        """Return ``V diag(fn(eigenvalues)) V^dagger``."""
        V = self.eigenvectors
        return (V * fn(self.eigenvalues)) @ dagger(V)


def eig_hermitian(A: np.ndarray, tol: float = ALGEBRA_TOL) -> SpectralDecomp:
    """Hermitian eigendecomposition with eigenvalues in ascending order.

    Raises
    ------
    HermiticityError
        If ``max|A - A^dagger|`` (scaled by ``max(1, max|A|)``) exceeds ``tol``.
    """
    A = _square(A)
    scale = max(1.0, float(np.abs(A).max()) if A.size else 1.0)
    res = hermitian_residual(A)
    if res > tol * scale:
        raise HermiticityError(f"matrix is not hermitian: max|A - A^dagger| = {res:.3e}")
    if np.isrealobj(A) or not np.any(A.imag):
        w, V = np.linalg.eigh(np.real(A))
    else:
        w, V = np.linalg.eigh(A)
    return SpectralDecomp(eigenvalues=w, eigenvectors=V)


def propagator_from_hamiltonian(H: np.ndarray, dt: float, hbar: float = 1.0,
                                decomp: SpectralDecomp | None = None) -> np.ndarray:
    """Exact propagator ``exp(-i H dt / hbar)`` through eigendecomposition."""
    if dt <= 0 or hbar <= 0:
        raise ValueError("dt and hbar must be positive")
    if decomp is None:
        decomp = eig_hermitian(H)
    elif decomp.dim != _square(H).shape[0]:
        raise DimensionError("decomposition does not match H")
    return decomp.apply_function(lambda w: np.exp(-1j * w * dt / hbar))


def commutator(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    A, B = _square(A, "A"), _square(B, "B")
    if A.shape != B.shape:
        raise DimensionError(f"shape mismatch {A.shape} vs {B.shape}")
    return A @ B - B @ A


def commutator_sq_diagonal(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Diagonal of ``-[A, B]^2`` in the computational frame.

    For hermitian ``A, B`` this is ``diag(K^dagger K)`` with ``K = i[A, B]``,
    i.e. the squared column norms of the commutator, hence non-negative.
    """
    K = commutator(A, B)
    return np.real(np.einsum("ij,ij->j", K.conj(), K))


def heisenberg_conjugate(U: np.ndarray, A: np.ndarray) -> np.ndarray:
    """``U^dagger A U``."""
    return dagger(U) @ A @ U


def mixed_matmul(R: np.ndarray, C: np.ndarray) -> np.ndarray:
    """Product of a real matrix with a complex one as two real GEMMs."""
    if np.iscomplexobj(R):
        return R @ C
    C = np.asarray(C, dtype=complex)
    out = np.empty(R.shape[:1] + C.shape[1:], dtype=complex)
    # .real/.imag are strided views; BLAS needs contiguous operands
    out.real = R @ np.ascontiguousarray(C.real)
    out.imag = R @ np.ascontiguousarray(C.imag)
    return out


def mixed_matmul_right(C: np.ndarray, R: np.ndarray) -> np.ndarray:
    """``C @ R`` for complex ``C`` and real ``R``."""
    if np.iscomplexobj(R):
        return C @ R
    C = np.asarray(C, dtype=complex)
    out = np.empty((C.shape[0], R.shape[1]), dtype=complex)
    out.real = np.ascontiguousarray(C.real) @ R
    out.imag = np.ascontiguousarray(C.imag) @ R
    return out


class SpectralPropagator:
    """Time evolution ``U(t) = exp(-i H t / hbar)`` for arbitrary ``t``.

    Keeps the eigendecomposition of ``H`` so Heisenberg operators and
    evolved states are evaluated at any time without integrator error.
    """

    def __init__(self, H: np.ndarray, hbar: float = 1.0, decomp: SpectralDecomp | None = None):
        if hbar <= 0:
            raise ValueError("hbar must be positive")
        self.H = _square(H)
        self.hbar = float(hbar)
        self.decomp = decomp if decomp is not None else eig_hermitian(self.H)
        self._V = self.decomp.eigenvectors
        self._Vh = dagger(self._V)

    @property
    def dim(self) -> int:
        return self.decomp.dim

    def _phases(self, t: float) -> np.ndarray:
        return np.exp(-1j * self.decomp.eigenvalues * (t / self.hbar))

    def unitary(self, t: float) -> np.ndarray:
        return mixed_matmul_right(self._V * self._phases(t), self._Vh)

    def evolve(self, state: np.ndarray, t: float) -> np.ndarray:
        c = self._Vh @ state
        return self._V @ (self._phases(t) * c)

    def to_eigenframe(self, A: np.ndarray) -> np.ndarray:
        return mixed_matmul_right(mixed_matmul(self._Vh, A), self._V)

    def heisenberg_from_eigenframe(self, A_eig: np.ndarray, t: float) -> np.ndarray:
        """``U(t)^dagger A U(t)`` given ``A`` already in the eigenframe."""
        ph = self._phases(t)
        inner = (ph.conj()[:, None] * A_eig) * ph[None, :]
        return mixed_matmul_right(mixed_matmul(self._V, inner), self._Vh)

    def heisenberg(self, A: np.ndarray, t: float) -> np.ndarray:
        return self.heisenberg_from_eigenframe(self.to_eigenframe(A), t)


def expectation(A: np.ndarray, state: np.ndarray) -> complex:
    # einsum keeps the reduction order independent of the BLAS thread count
    return complex(np.einsum("i,i->", np.conj(state), A @ state))


def normalized(state: np.ndarray) -> np.ndarray:
    state = np.asarray(state, dtype=complex)
    return state / np.linalg.norm(state)
