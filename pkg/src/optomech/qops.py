"""Dense operator algebra on truncated Fock spaces.

The joint Hilbert space is always ordered cavity (x) atom (x) motion.  The atom
is a two-level system with index 0 = ground and 1 = excited.  Positions are
measured in units of the zero-point motion, so that the dimensionless position
operator is ``b + b^dagger``.
"""

from __future__ import annotations

import functools
import warnings
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .errors import ContractViolationError, InvalidDimensionError, TruncationWarning

CAVITY, ATOM, MOTION = 0, 1, 2

HERMITIAN_RTOL = 1e-12
NORM_TOL = 1e-10
TRUNCATION_TOL = 1e-6


@dataclass(frozen=True)
class Dims:
    n_cavity: int
    n_phonon: int
    n_atom: int = 2

    def __post_init__(self):
        if self.n_atom != 2:
            raise InvalidDimensionError("the atom is a two-level system (n_atom=2)")
        if self.n_cavity < 1 or self.n_phonon < 1:
            raise InvalidDimensionError(f"all factor dimensions must be >= 1, got {self}")

    @property
    def factors(self) -> tuple[int, int, int]:
        return (self.n_cavity, self.n_atom, self.n_phonon)

    @property
    def total(self) -> int:
        return self.n_cavity * self.n_atom * self.n_phonon


@dataclass(frozen=True, eq=False)
class MotionalState:
    """Pure (vector) or mixed (matrix) state on the truncated phonon space."""

    data: np.ndarray
    normalized: bool = True

    def __post_init__(self):
        data = np.asarray(self.data, dtype=complex)
        if data.ndim == 2 and data.shape[0] != data.shape[1]:
            raise InvalidDimensionError("density matrix must be square")
        if data.ndim not in (1, 2) or data.shape[0] < 1:
            raise InvalidDimensionError("state must be a vector or a square matrix")
        data = data.copy()
        data.setflags(write=False)
        object.__setattr__(self, "data", data)
        if not self.normalized:
            return
        if data.ndim == 1:
            norm = np.linalg.norm(data)
            if abs(norm - 1) > NORM_TOL:
                raise ContractViolationError(f"pure state norm is {norm!r}, expected 1")
        else:
            if not np.allclose(data, data.conj().T, rtol=0, atol=NORM_TOL):
                raise ContractViolationError("density matrix is not Hermitian")
            tr = np.trace(data).real
            if abs(tr - 1) > NORM_TOL:
                raise ContractViolationError(f"density matrix trace is {tr!r}, expected 1")
            if np.linalg.eigvalsh(data).min() < -NORM_TOL:
                raise ContractViolationError("density matrix is not positive semidefinite")

    @classmethod
    def fock(cls, n: int, n_phonon: int) -> "MotionalState":
        if not 0 <= n < n_phonon:
            raise InvalidDimensionError(f"Fock level {n} outside truncation {n_phonon}")
        vec = np.zeros(n_phonon, complex)
        vec[n] = 1
        return cls(vec)

    @classmethod
    def ground(cls, n_phonon: int) -> "MotionalState":
        return cls.fock(0, n_phonon)

    @property
    def kind(self) -> str:
        return "pure" if self.data.ndim == 1 else "mixed"

    @property
    def is_pure(self) -> bool:
        return self.data.ndim == 1

    @property
    def n_phonon(self) -> int:
        return self.data.shape[0]

    def density(self) -> np.ndarray:
        if self.is_pure:
            return np.outer(self.data, self.data.conj())
        return np.array(self.data)

    def populations(self) -> np.ndarray:
        if self.is_pure:
            return np.abs(self.data) ** 2
        return np.real(np.diag(self.data)).copy()

    def top_population(self, levels: int = 2) -> float:
        """Population in the highest ``levels`` Fock states (relative to the trace)."""
        pops = self.populations()
        total = pops.sum()
        return float(pops[-levels:].sum() / total) if total > 0 else 0.0


def check_truncation(state: MotionalState, tol: float = TRUNCATION_TOL, what: str = "state") -> float:
    top = state.top_population()
    if top > tol:
        warnings.warn(
            f"{what}: population {top:.3g} in the top two phonon levels exceeds {tol:g}; "
            f"increase n_phonon (currently {state.n_phonon})",
            TruncationWarning,
            stacklevel=3,
        )
    return top


def ladder_lowering(n_levels: int) -> np.ndarray:
    """Lowering operator with <n-1|L|n> = sqrt(n)."""
    if n_levels < 1:
        raise InvalidDimensionError(f"n_levels must be >= 1, got {n_levels}")
    return np.diag(np.sqrt(np.arange(1, n_levels, dtype=float)), 1).astype(complex)


def number_operator(n_levels: int) -> np.ndarray:
    if n_levels < 1:
        raise InvalidDimensionError(f"n_levels must be >= 1, got {n_levels}")
    return np.diag(np.arange(n_levels, dtype=float)).astype(complex)


def atom_lowering() -> np.ndarray:
    """sigma = |g><e| with ground = 0, excited = 1."""
    return np.array([[0, 1], [0, 0]], dtype=complex)


def tensor(ops: Sequence[np.ndarray], placement: Sequence[int], dims: Dims) -> np.ndarray:
    """Embed single-factor operators into cavity (x) atom (x) motion.

    ``placement[k]`` is the factor index (CAVITY, ATOM or MOTION) of ``ops[k]``;
    unlisted factors receive the identity.
    """
    if len(ops) != len(placement):
        raise InvalidDimensionError("ops and placement must have the same length")
    if len(set(placement)) != len(placement):
        raise InvalidDimensionError("each factor may appear at most once in placement")
    factors = [np.eye(d, dtype=complex) for d in dims.factors]
    for op, where in zip(ops, placement):
        op = np.asarray(op)
        if where not in (CAVITY, ATOM, MOTION):
            raise InvalidDimensionError(f"unknown factor index {where}")
        d = dims.factors[where]
        if op.shape != (d, d):
            raise InvalidDimensionError(f"operator of shape {op.shape} placed on factor {where} of dimension {d}")
        factors[where] = op
    return np.kron(np.kron(factors[0], factors[1]), factors[2])


def is_hermitian(op: np.ndarray, rtol: float = HERMITIAN_RTOL) -> bool:
    op = np.asarray(op)
    if op.ndim != 2 or op.shape[0] != op.shape[1]:
        return False
    scale = np.abs(op).max()
    return bool(np.abs(op - op.conj().T).max() <= rtol * max(scale, 1.0))


def hermitian_function(op: np.ndarray, f: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    """Return f(op) = U diag(f(lambda)) U^dagger for Hermitian ``op``."""
    op = np.asarray(op)
    if not is_hermitian(op):
        raise ContractViolationError("hermitian_function requires a Hermitian operator")
    vals, vecs = np.linalg.eigh(op)
    fv = np.asarray(f(vals), dtype=complex)
    return (vecs * fv) @ vecs.conj().T


@functools.lru_cache(maxsize=16)
def _position_grid_cached(n_phonon: int) -> tuple[np.ndarray, np.ndarray]:
    if n_phonon == 1:
        return np.zeros(1), np.ones((1, 1))
    vals, vecs = eigh_tridiagonal(np.zeros(n_phonon), np.sqrt(np.arange(1, n_phonon, dtype=float)))
    # <0|x_i> is proportional to a Gaussian and never vanishes: fix signs by it
    vecs = vecs * np.sign(vecs[0])
    vals.setflags(write=False)
    vecs.setflags(write=False)
    return vals, vecs


def position_grid(n_phonon: int) -> tuple[np.ndarray, np.ndarray]:
    """Eigen-decomposition of x/x_zp = b + b^dagger in the truncated Fock basis.

    Returns ascending eigenvalues and the real orthogonal matrix whose columns
    are the corresponding eigenvectors.  The arrays are cached and read-only.
    """
    if n_phonon < 1:
        raise InvalidDimensionError(f"n_phonon must be >= 1, got {n_phonon}")
    return _position_grid_cached(int(n_phonon))


def expectation(op: np.ndarray, state) -> complex:
    """<psi|A|psi> for a pure state, tr(A rho) for a mixed one.

    ``state`` may be a MotionalState or a bare vector / density matrix on any space.
    """
    data = state.data if isinstance(state, MotionalState) else np.asarray(state)
    op = np.asarray(op)
    if op.shape[0] != data.shape[0] or op.shape[0] != op.shape[1]:
        raise InvalidDimensionError(f"operator {op.shape} does not act on state of size {data.shape[0]}")
    if data.ndim == 1:
        return complex(np.vdot(data, op @ data))
    return complex(np.einsum("ij,ji->", op, data))


def thermal_populations(n_phonon: int, kT_over_wm: float) -> np.ndarray:
    if n_phonon < 1:
        raise InvalidDimensionError(f"n_phonon must be >= 1, got {n_phonon}")
    if kT_over_wm < 0:
        raise ContractViolationError("temperature must be non-negative")
    pops = np.zeros(n_phonon)
    if kT_over_wm == 0:
        pops[0] = 1.0
        return pops
    pops = np.exp(-np.arange(n_phonon) / kT_over_wm)
    return pops / pops.sum()


def thermal_density(n_phonon: int, kT_over_wm: float) -> MotionalState:
    """Thermal state of the trap truncated to ``n_phonon`` levels.

    Zero temperature returns the pure ground state.
    """
    if kT_over_wm == 0:
        return MotionalState.ground(n_phonon)
    pops = thermal_populations(n_phonon, kT_over_wm)
    state = MotionalState(np.diag(pops).astype(complex))
    if pops[-1] > TRUNCATION_TOL:
        warnings.warn(
            f"thermal state at kT/w_m={kT_over_wm:g} has top-level population {pops[-1]:.3g}; "
            f"increase n_phonon (currently {n_phonon})",
            TruncationWarning,
            stacklevel=2,
        )
    return state


def thermal_occupation(kT_over_wm: float) -> float:
    """Untruncated mean phonon number 1/(exp(w_m/kT) - 1)."""
    if kT_over_wm < 0:
        raise ContractViolationError("temperature must be non-negative")
    if kT_over_wm == 0:
        return 0.0
    return float(1.0 / np.expm1(1.0 / kT_over_wm))
