"""Past/future block-Hankel matrices and their LQ factorization."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import kernels
from .lti import DataSet

RANK_RTOL = 1e-10


def hankel(w_seq, t0: int, t1: int, N: int) -> np.ndarray:
    """Block Hankel matrix W_[t0,t1],N scaled by 1/sqrt(N).

    Block (i, j) (0-based) is ``w(t0 + i + j) / sqrt(N)``; the result has
    ``s * (t1 - t0 + 1)`` rows and ``N`` columns.
    """
    w = np.asarray(w_seq, dtype=float)
    if w.ndim == 1:
        w = w[:, None]
    if t0 < 0 or t1 < t0 or N < 1:
        raise ValueError(f"invalid window t0={t0}, t1={t1}, N={N}")
    need = t1 + N
    if need > w.shape[0]:
        raise ValueError(f"sequence has {w.shape[0]} samples, Hankel needs at least {need}")
    return kernels.hankel(w, t0, t1, N)


@dataclass(frozen=True)
class HankelBundle:
    Zp: np.ndarray
    Uf: np.ndarray
    Yf: np.ndarray
    rho: int
    T: int
    N: int
    m: int
    p: int

    @property
    def stacked(self) -> np.ndarray:
        return np.vstack([self.Zp, self.Uf, self.Yf])

    @property
    def row_blocks(self) -> tuple[int, int, int]:
        return (self.m + self.p) * self.rho, self.m * self.T, self.p * self.T


def build_bundle(data: DataSet, rho: int, T: int) -> HankelBundle:
    """Z_P = Z_[0,rho-1],N, U_F = U_[rho,rho+T-1],N, Y_F = Y_[rho,rho+T-1],N."""
    if rho < 1 or T < 1:
        raise ValueError("rho and T must be >= 1")
    N = len(data) - T - rho + 1
    if N <= 0:
        raise ValueError(f"N_data={len(data)} too short for rho={rho}, T={T} (N={N})")
    rows = (data.m + data.p) * rho + (data.m + data.p) * T
    if N < rows:
        warnings.warn(f"N={N} < {rows} stacked rows: Hankel cannot have full row rank", stacklevel=2)
    elif N < 5 * rows:
        warnings.warn(f"N={N} is below 5x the {rows} stacked rows; factors will be noisy", stacklevel=2)
    return HankelBundle(
        Zp=hankel(data.z, 0, rho - 1, N),
        Uf=hankel(data.u, rho, rho + T - 1, N),
        Yf=hankel(data.y, rho, rho + T - 1, N),
        rho=rho, T=T, N=N, m=data.m, p=data.p,
    )


@dataclass(frozen=True)
class LqFactors:
    """[Zp; Uf; Yf] = L Q with L block lower-triangular and Q orthonormal rows."""

    L: np.ndarray
    Q: np.ndarray
    sizes: tuple[int, int, int]
    N: int
    T: int
    rho: int
    m: int
    p: int
    cond: tuple[float, float, float]
    rank_deficient: bool

    def _sl(self, i):
        a, b, _ = self.sizes
        return [slice(0, a), slice(a, a + b), slice(a + b, None)][i]

    def block(self, i: int, j: int) -> np.ndarray:
        """L_ij with 1-based block indices."""
        return self.L[self._sl(i - 1), self._sl(j - 1)]

    L11 = property(lambda s: s.block(1, 1))
    L21 = property(lambda s: s.block(2, 1))
    L22 = property(lambda s: s.block(2, 2))
    L31 = property(lambda s: s.block(3, 1))
    L32 = property(lambda s: s.block(3, 2))
    L33 = property(lambda s: s.block(3, 3))
    Q1 = property(lambda s: s.Q[s._sl(0)])
    Q2 = property(lambda s: s.Q[s._sl(1)])
    Q3 = property(lambda s: s.Q[s._sl(2)])


def _tri_cond(Lii: np.ndarray) -> float:
    if Lii.size == 0:
        return 1.0
    s = np.linalg.svd(Lii, compute_uv=False)
    return float(s[0] / s[-1]) if s[-1] > 0 else float("inf")


def lq_factor(M: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """LQ of a wide matrix via QR of its transpose; diag(L) >= 0."""
    Qt, R = np.linalg.qr(M.T, mode="reduced")
    sgn = np.where(np.diag(R) < 0, -1.0, 1.0)
    return (R * sgn[:, None]).T, (Qt * sgn).T


def lq_decompose(bundle: HankelBundle, rtol: float = RANK_RTOL) -> LqFactors:
    """Factor the stacked Hankel matrix; rank deficiency is flagged, not raised."""
    M = bundle.stacked
    rows = M.shape[0]
    if bundle.N < rows:
        raise ValueError(f"N={bundle.N} columns cannot support {rows} stacked rows")
    L, Q = lq_factor(M)
    sizes = bundle.row_blocks
    d = np.abs(np.diag(L))
    s_max = np.linalg.norm(M, 2)
    deficient = bool(np.any(d <= rtol * s_max))
    f = LqFactors(L, Q, sizes, bundle.N, bundle.T, bundle.rho, bundle.m, bundle.p, (0, 0, 0), deficient)
    cond = tuple(_tri_cond(f.block(i, i)) for i in (1, 2, 3))
    return LqFactors(L, Q, sizes, bundle.N, bundle.T, bundle.rho, bundle.m, bundle.p, cond, deficient)


def factors_from_data(data: DataSet, rho: int, T: int) -> LqFactors:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return lq_decompose(build_bundle(data, rho, T))


def dump_lq_csv(f: LqFactors, directory) -> list:
    """Write each L block to ``L<ij>.csv`` under ``directory``; returns the paths."""
    from pathlib import Path

    out = []
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    for i, j in [(1, 1), (2, 1), (2, 2), (3, 1), (3, 2), (3, 3)]:
        path = d / f"L{i}{j}.csv"
        np.savetxt(path, f.block(i, j), delimiter=",", fmt="%.17g")
        out.append(path)
    return out
