"""Dense operator constructors for the qutrit ⊗ magnon (⊗ cavity) space.

Matrices are plain complex128 ndarrays. Dimensions stay small (a few tens),
so everything is dense; no sparse representations are exposed.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import InvalidDimensionError, InvalidSelectorError, TruncationWarning

__all__ = [
    "HilbertLayout",
    "QutritOps",
    "fock_annihilation",
    "number_operator",
    "qutrit_operators",
    "tensor",
    "matrix_exp",
    "displacement",
    "parity",
    "fock_state",
    "coherent_state",
    "embed",
    "is_hermitian",
    "is_unitary",
]

#: Tolerance used by matrix_exp (relative, verified in tests against
#: exp(diag) and exp(A)exp(-A) oracles for inputs with norm <= 10).
EXPM_RTOL = 1e-10


@dataclass(frozen=True)
class HilbertLayout:
    """Tensor-factor layout, order: qutrit ⊗ magnon ⊗ cavity.

    A dimension of 0 means the factor is absent (eliminated). The qutrit
    factor is 3-level whenever present; magnon and cavity dims of 1 are
    rejected because a 1-dim factor carries no state.
    """

    qutrit_dim: int = 3
    magnon_dim: int = 6
    cavity_dim: int = 0

    def __post_init__(self):
        if self.qutrit_dim not in (0, 3):
            raise InvalidDimensionError(
                f"qutrit_dim must be 0 (absent) or 3, got {self.qutrit_dim}"
            )
        if self.magnon_dim == 1 or self.magnon_dim < 0:
            raise InvalidDimensionError(
                f"magnon_dim must be 0 (absent) or >= 2, got {self.magnon_dim}"
            )
        if self.cavity_dim == 1 or self.cavity_dim < 0:
            raise InvalidDimensionError(
                f"cavity_dim must be 0 (absent) or >= 2, got {self.cavity_dim}"
            )
        if self.dim == 0:
            raise InvalidDimensionError("layout must contain at least one factor")

    @property
    def factors(self) -> tuple[tuple[str, int], ...]:
        """(name, dim) pairs for the present factors, in tensor order."""
        out = []
        for name, d in (
            ("qutrit", self.qutrit_dim),
            ("magnon", self.magnon_dim),
            ("cavity", self.cavity_dim),
        ):
            if d:
                out.append((name, d))
        return tuple(out)

    @property
    def dim(self) -> int:
        return int(np.prod([d for _, d in self.factors])) if self.factors else 0

    def factor_dim(self, name: str) -> int:
        for fname, d in self.factors:
            if fname == name:
                return d
        raise InvalidSelectorError(f"factor {name!r} not present in layout {self}")

    def index(self, qutrit: int = 0, magnon: int = 0, cavity: int = 0) -> int:
        """Flat basis index of |qutrit, magnon, cavity> in this layout."""
        levels = {"qutrit": qutrit, "magnon": magnon, "cavity": cavity}
        idx = 0
        for name, d in self.factors:
            n = levels[name]
            if not 0 <= n < d:
                raise InvalidDimensionError(f"{name} level {n} outside 0..{d - 1}")
            idx = idx * d + n
        return idx


@dataclass(frozen=True)
class QutritOps:
    """The five elementary 3x3 operators on the g/e/f qutrit."""

    proj_g: np.ndarray
    proj_e: np.ndarray
    proj_f: np.ndarray
    lower_ge: np.ndarray  # |g><e|
    lower_ef: np.ndarray  # |e><f|


def fock_annihilation(dim: int) -> np.ndarray:
    """Truncated bosonic annihilation operator.

    Args:
        dim: truncation dimension, >= 2.

    Returns:
        (dim, dim) complex matrix with entries a[n-1, n] = sqrt(n).
    """
    if dim < 2:
        raise InvalidDimensionError(f"annihilation needs dim >= 2, got {dim}")
    a = np.zeros((dim, dim), dtype=complex)
    ns = np.arange(1, dim)
    a[ns - 1, ns] = np.sqrt(ns)
    return a


def number_operator(dim: int) -> np.ndarray:
    """diag(0, 1, ..., dim-1)."""
    if dim < 2:
        raise InvalidDimensionError(f"number operator needs dim >= 2, got {dim}")
    return np.diag(np.arange(dim, dtype=float)).astype(complex)


def qutrit_operators() -> QutritOps:
    """Projectors and lowering operators for the three-level transmon."""
    basis = np.eye(3, dtype=complex)
    g, e, f = basis
    return QutritOps(
        proj_g=np.outer(g, g),
        proj_e=np.outer(e, e),
        proj_f=np.outer(f, f),
        lower_ge=np.outer(g, e),
        lower_ef=np.outer(e, f),
    )


def tensor(*ops: np.ndarray) -> np.ndarray:
    """Kronecker product of the given operators, left to right."""
    if not ops:
        raise InvalidDimensionError("tensor needs at least one operator")
    out = np.asarray(ops[0], dtype=complex)
    for op in ops[1:]:
        out = np.kron(out, np.asarray(op, dtype=complex))
    return out


def matrix_exp(m: np.ndarray) -> np.ndarray:
    """Matrix exponential (dense, scaling-and-squaring backend)."""
    m = np.asarray(m, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise InvalidDimensionError(f"matrix_exp needs a square matrix, got {m.shape}")
    return scipy.linalg.expm(m)


def displacement(alpha: complex, dim: int) -> np.ndarray:
    """Displacement operator D(alpha) = exp(alpha b† − alpha* b), truncated.

    Warns when the truncation is marginal: a displaced vacuum has mean
    occupation |alpha|^2 and tail weight reaching roughly |alpha|^2 + 4|alpha|,
    so dim should comfortably exceed that.
    """
    alpha = complex(alpha)
    load = abs(alpha) ** 2 + 4.0 * abs(alpha)
    if load > dim:
        warnings.warn(
            f"displacement(|alpha|={abs(alpha):.3f}) marginal at dim={dim}: "
            f"|alpha|^2 + 4|alpha| = {load:.1f}",
            TruncationWarning,
            stacklevel=2,
        )
    b = fock_annihilation(dim)
    return matrix_exp(alpha * b.conj().T - np.conj(alpha) * b)


def parity(dim: int) -> np.ndarray:
    """Photon-number parity operator diag((-1)^n)."""
    if dim < 2:
        raise InvalidDimensionError(f"parity needs dim >= 2, got {dim}")
    return np.diag((-1.0) ** np.arange(dim)).astype(complex)


def fock_state(dim: int, n: int) -> np.ndarray:
    """Number state |n> as a length-dim vector."""
    if not 0 <= n < dim:
        raise InvalidDimensionError(f"Fock level {n} outside truncation dim {dim}")
    v = np.zeros(dim, dtype=complex)
    v[n] = 1.0
    return v


def coherent_state(dim: int, alpha: complex) -> np.ndarray:
    """Truncated coherent state, normalized within the truncation."""
    n = np.arange(dim)
    log_fact = np.cumsum(np.concatenate(([0.0], np.log(np.arange(1, dim)))))
    amps = np.exp(-0.5 * abs(alpha) ** 2) * np.power(complex(alpha), n) / np.exp(
        0.5 * log_fact
    )
    amps /= math.sqrt(float(np.vdot(amps, amps).real))
    return amps.astype(complex)


def embed(op: np.ndarray, layout: HilbertLayout, factor: str) -> np.ndarray:
    """Lift a single-factor operator to the full layout (identity elsewhere)."""
    op = np.asarray(op, dtype=complex)
    d = layout.factor_dim(factor)
    if op.shape != (d, d):
        raise InvalidDimensionError(
            f"operator shape {op.shape} does not match {factor} dim {d}"
        )
    parts = [op if name == factor else np.eye(dim, dtype=complex)
             for name, dim in layout.factors]
    return tensor(*parts)


def is_hermitian(m: np.ndarray, tol: float = 1e-12) -> bool:
    m = np.asarray(m)
    return bool(np.max(np.abs(m - m.conj().T)) <= tol)


def is_unitary(m: np.ndarray, tol: float = 1e-8) -> bool:
    m = np.asarray(m)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        return False
    return bool(np.max(np.abs(m.conj().T @ m - np.eye(m.shape[0]))) <= tol)
