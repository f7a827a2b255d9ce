"""Thermal photon loss/gain for the cavity mode.

The finite-temperature damping generator

    L[rho] = kappa (1+n_t) (a rho a' - {a'a, rho}/2)
           + kappa n_t     (a' rho a - {a a', rho}/2)

couples density-matrix entries only along fixed diagonals m - n = const.
Each diagonal therefore evolves under a small real tridiagonal rate matrix,
and exp(L t) is assembled exactly from per-diagonal expm calls: relaxation
carries no time-step error here.  All operator products are taken on the
truncated space (a'|n_max> = 0), which keeps the generator trace-preserving
and completely positive on the retained levels.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

__all__ = ["CavityParams", "ThermalPropagator", "relax_density", "dissipator_rhs"]


@dataclass(frozen=True)
class CavityParams:
    """Cavity damping: field decay time t_c (s) and thermal occupation n_t.

    t_c is the 1/e time of the field amplitude, so the jump rate entering
    the dissipator is kappa = 2/t_c and the photon number relaxes as
    exp(-2 t/t_c) toward n_t.
    """

    t_c: float = 0.13
    n_t: float = 0.05

    def __post_init__(self) -> None:
        if not (self.t_c > 0 and np.isfinite(self.t_c)):
            raise ValueError(f"t_c must be positive and finite, got {self.t_c}")
        if not (self.n_t >= 0 and np.isfinite(self.n_t)):
            raise ValueError(f"n_t must be >= 0, got {self.n_t}")

    @property
    def kappa(self) -> float:
        return 2.0 / self.t_c


def _aadag_diag(dim: int) -> np.ndarray:
    """Diagonal of the truncated product a a' (last slot is 0)."""
    d = np.arange(1, dim + 1, dtype=float)
    d[-1] = 0.0
    return d


def rate_block(d: int, dim: int, cavity: CavityParams) -> np.ndarray:
    """Real rate matrix for the diagonal of offset d >= 0.

    Row m is the equation for rho[m, m+d]; the block is (dim-d) square.
    """
    if d < 0 or d >= dim:
        raise ValueError("offset out of range")
    kappa = cavity.kappa
    n_t = cavity.n_t
    length = dim - d
    m = np.arange(length, dtype=float)
    aad = _aadag_diag(dim)
    block = np.zeros((length, length))
    # decay into (m, m+d) from (m+1, m+d+1)
    up = kappa * (1 + n_t) * np.sqrt((m[:-1] + 1) * (m[:-1] + d + 1))
    block[np.arange(length - 1), np.arange(1, length)] = up
    # thermal gain into (m, m+d) from (m-1, m+d-1)
    if length > 1:
        down = kappa * n_t * np.sqrt(m[1:] * (m[1:] + d))
        block[np.arange(1, length), np.arange(length - 1)] = down
    diag = -kappa * (1 + n_t) * (m + (m + d)) / 2.0
    diag -= kappa * n_t * (aad[: length] + aad[d:]) / 2.0
    block[np.arange(length), np.arange(length)] += diag
    return block


class ThermalPropagator:
    """exp(L t) for one fixed duration, applied diagonal by diagonal."""

    def __init__(self, duration: float, cavity: CavityParams, dim: int):
        if duration < 0:
            raise ValueError("duration must be >= 0")
        self.duration = duration
        self.cavity = cavity
        self.dim = dim
        self.blocks = [expm(rate_block(d, dim, cavity) * duration) for d in range(dim)]
        # index arrays for reading/writing each diagonal
        self._rows = [np.arange(dim - d) for d in range(dim)]
        self._cols = [np.arange(d, dim) for d in range(dim)]

    def apply(self, rho: np.ndarray) -> np.ndarray:
        """exp(L t) rho for a single field density matrix."""
        return self.apply_batched(rho[None, :, :])[0]

    def apply_batched(self, mats: np.ndarray) -> np.ndarray:
        """exp(L t) applied to a stack of field matrices, shape (M, dim, dim)."""
        out = np.empty_like(mats)
        for d in range(self.dim):
            r, c = self._rows[d], self._cols[d]
            bt = self.blocks[d].T
            out[:, r, c] = mats[:, r, c] @ bt
            if d > 0:
                # lower diagonal obeys the same real rate block
                out[:, c, r] = mats[:, c, r] @ bt
        return out

    def apply_joint(self, rho_joint: np.ndarray) -> np.ndarray:
        """Blockwise application to an (atom x field) density matrix.

        The jump operators act on the field factor only, so each of the four
        atom blocks relaxes independently.
        """
        dim = self.dim
        blocks = rho_joint.reshape(2, dim, 2, dim).transpose(0, 2, 1, 3).reshape(4, dim, dim)
        relaxed = self.apply_batched(np.ascontiguousarray(blocks))
        return (
            relaxed.reshape(2, 2, dim, dim).transpose(0, 2, 1, 3).reshape(2 * dim, 2 * dim)
        )

    def superop_matrix(self) -> np.ndarray:
        """Dense (dim^2, dim^2) matrix of exp(L t) in row-major vec ordering."""
        dim = self.dim
        mat = np.zeros((dim * dim, dim * dim), dtype=complex)
        for d in range(dim):
            r, c = self._rows[d], self._cols[d]
            idx_u = r * dim + c
            mat[np.ix_(idx_u, idx_u)] = self.blocks[d]
            if d > 0:
                idx_l = c * dim + r
                mat[np.ix_(idx_l, idx_l)] = self.blocks[d]
        return mat


def relax_density(rho: np.ndarray, duration: float, cavity: CavityParams) -> np.ndarray:
    """Convenience wrapper: exp(L duration) rho without explicit caching."""
    return ThermalPropagator(duration, cavity, rho.shape[0]).apply(rho)


def dissipator_rhs(rho: np.ndarray, cavity: CavityParams, joint: bool = False) -> np.ndarray:
    """L[rho] in matrix form, for cross-checks and RK4 reference integration.

    With joint=True the matrix is an (atom x field) state and the jumps act
    on the rightmost (field) index pair.
    """
    if joint:
        size = rho.shape[0]
        dim = size // 2
        blocks = rho.reshape(2, dim, 2, dim)
        out = np.empty_like(blocks)
        for i in range(2):
            for j in range(2):
                out[i, :, j, :] = _field_rhs(blocks[i, :, j, :], cavity)
        return out.reshape(size, size)
    return _field_rhs(rho, cavity)


def _field_rhs(rho: np.ndarray, cavity: CavityParams) -> np.ndarray:
    dim = rho.shape[0]
    kappa, n_t = cavity.kappa, cavity.n_t
    n = np.arange(dim, dtype=float)
    aad = _aadag_diag(dim)
    sq = np.sqrt(n[1:])

    out = np.zeros_like(rho)
    # a rho a': shift both indices up by one, weight sqrt((m+1)(n+1))
    out[:-1, :-1] += kappa * (1 + n_t) * sq[:, None] * sq[None, :] * rho[1:, 1:]
    # a' rho a: shift both indices down, weight sqrt(m n)
    out[1:, 1:] += kappa * n_t * sq[:, None] * sq[None, :] * rho[:-1, :-1]
    # anticommutator parts are diagonal scalings
    scale = -0.5 * kappa * (1 + n_t) * (n[:, None] + n[None, :])
    scale -= 0.5 * kappa * n_t * (aad[:, None] + aad[None, :])
    out += scale * rho
    return out
