"""Structured linear algebra for the merit design matrix.

``U`` has one row per observed pair ``(i, j)``, ``i < j``, equal to
``e_i - e_j`` with the reference column (item 0) dropped.  For the complete
design, ``V = U'U = (n+1) I - 11'`` has an explicit inverse and the projector
``D = I - U V^{-1} U'`` is applied in ``O(N)`` without ever being formed.
Incomplete designs go through the reduced graph Laplacian instead.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from numpy.typing import NDArray
from scipy.sparse.csgraph import connected_components

from .core import Dataset, IdentifiabilityError

CG_RTOL = 1e-13


class UnsupportedModeError(RuntimeError):
    """Raised when a closed-form operator is requested on an incomplete design."""


def _scatter(idx: NDArray[np.intp], values: NDArray[np.float64], size: int) -> NDArray[np.float64]:
    if values.ndim == 1:
        return np.bincount(idx, values, size)
    return np.column_stack([np.bincount(idx, values[:, k], size) for k in range(values.shape[1])]).reshape(
        size, values.shape[1]
    )


@dataclass(frozen=True, eq=False)
class DesignOperator:
    n: int
    pairs: NDArray[np.intp]
    mode: Literal["closed_form", "general"]

    @classmethod
    def complete(cls, n: int) -> "DesignOperator":
        i, j = np.triu_indices(n + 1, k=1)
        return cls(n, np.column_stack([i, j]).astype(np.intp), "closed_form")

    @classmethod
    def from_pairs(cls, n: int, pairs: NDArray) -> "DesignOperator":
        pairs = np.asarray(pairs, dtype=np.intp).reshape(-1, 2)
        full = (n + 1) * n // 2
        mode = "closed_form" if pairs.shape[0] == full else "general"
        if mode == "closed_form":
            ref = cls.complete(n).pairs
            if not np.array_equal(ref, pairs):
                raise ValueError("complete design pairs are not in canonical order")
        return cls(n, pairs, mode)

    @classmethod
    def from_dataset(cls, dataset: Dataset) -> "DesignOperator":
        return cls.from_pairs(dataset.n, dataset.pairs)

    @property
    def n_pairs(self) -> int:
        return int(self.pairs.shape[0])

    def _need_closed(self, what: str) -> None:
        if self.mode != "closed_form":
            raise UnsupportedModeError(f"{what} needs a complete design; use solve_normal_equations")

    # -- U, U' -------------------------------------------------------------

    def u_apply(self, theta: NDArray[np.float64]) -> NDArray[np.float64]:
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape[0] != self.n:
            raise ValueError(f"theta has length {theta.shape[0]}, expected {self.n}")
        full = np.concatenate([np.zeros((1,) + theta.shape[1:]), theta])
        return full[self.pairs[:, 0]] - full[self.pairs[:, 1]]

    def incidence_sums(self, y: NDArray[np.float64]) -> NDArray[np.float64]:
        """Signed sums ``S_i`` over all items ``0..n`` (pair rows enter + at head, - at tail)."""
        y = np.asarray(y, dtype=np.float64)
        if y.shape[0] != self.n_pairs:
            raise ValueError(f"y has length {y.shape[0]}, expected {self.n_pairs}")
        m = self.n + 1
        return _scatter(self.pairs[:, 0], y, m) - _scatter(self.pairs[:, 1], y, m)

    def u_transpose_apply(self, y: NDArray[np.float64]) -> NDArray[np.float64]:
        return self.incidence_sums(y)[1:]

    # -- closed form ---------------------------------------------------------

    def v_inverse_apply(self, x: NDArray[np.float64]) -> NDArray[np.float64]:
        self._need_closed("v_inverse_apply")
        x = np.asarray(x, dtype=np.float64)
        if x.shape[0] != self.n:
            raise ValueError(f"x has length {x.shape[0]}, expected {self.n}")
        return (x + x.sum(axis=0)) / (self.n + 1)

    def d_apply(self, y: NDArray[np.float64]) -> NDArray[np.float64]:
        self._need_closed("d_apply")
        y = np.asarray(y, dtype=np.float64)
        return y - self.u_apply(self.v_inverse_apply(self.u_transpose_apply(y)))

    def projected_gram(self, zbar: NDArray[np.float64]) -> NDArray[np.float64]:
        """``Zbar' D Zbar`` via pair outer products minus item-sum outer products."""
        zbar = np.asarray(zbar, dtype=np.float64)
        if zbar.ndim == 1:
            zbar = zbar[:, None]
        if not np.isfinite(zbar).all():
            raise ValueError("Zbar contains non-finite entries")
        if self.mode == "general":
            resid = self.project_out(zbar)
            g = zbar.T @ resid
            return (g + g.T) / 2
        s = self.incidence_sums(zbar)
        g = zbar.T @ zbar - (s.T @ s) / (self.n + 1)
        return (g + g.T) / 2

    def theta_sandwich_diag(
        self, sigma2: NDArray[np.float64], weights: NDArray[np.float64] | None = None
    ) -> NDArray[np.float64]:
        """Diagonal of ``V^-1 U' diag(sigma2) U V^-1``; general mode uses the Laplacian."""
        sigma2 = np.asarray(sigma2, dtype=np.float64)
        if self.mode == "general" or weights is not None:
            w = np.ones(self.n_pairs) if weights is None else np.asarray(weights, dtype=np.float64)
            linv = np.linalg.inv(self.laplacian(w).toarray())
            mid = self.laplacian(w * w * sigma2).toarray()
            return np.einsum("ij,jk,ki->i", linv, mid, linv)
        m = self.n + 1
        deg = np.bincount(self.pairs[:, 0], sigma2, m) + np.bincount(self.pairs[:, 1], sigma2, m)
        to_ref = np.zeros(m)
        rows = self.pairs[:, 0] == 0
        to_ref[self.pairs[rows, 1]] = sigma2[rows]
        return (deg[1:] + 2.0 * to_ref[1:] + to_ref.sum()) / m**2

    # -- general path -----------------------------------------------------------

    def laplacian(self, weights: NDArray[np.float64] | None = None) -> sp.csr_matrix:
        """Reduced (reference row/column removed) weighted graph Laplacian ``U' W U``."""
        w = np.ones(self.n_pairs) if weights is None else np.asarray(weights, dtype=np.float64)
        m = self.n + 1
        i, j = self.pairs[:, 0], self.pairs[:, 1]
        rows = np.concatenate([i, j, i, j])
        cols = np.concatenate([i, j, j, i])
        vals = np.concatenate([w, w, -w, -w])
        lap = sp.coo_matrix((vals, (rows, cols)), shape=(m, m)).tocsr()
        return lap[1:, 1:].tocsr()

    def components(self) -> list[list[int]]:
        m = self.n + 1
        adj = sp.coo_matrix(
            (np.ones(self.n_pairs), (self.pairs[:, 0], self.pairs[:, 1])), shape=(m, m)
        )
        k, lab = connected_components(adj, directed=False)
        return [np.flatnonzero(lab == c).tolist() for c in range(k)]

    def is_connected(self) -> bool:
        return len(self.components()) == 1

    def check_connected(self) -> None:
        comps = self.components()
        if len(comps) > 1:
            shown = "; ".join("{" + ", ".join(map(str, c[:8])) + (", ..." if len(c) > 8 else "") + "}" for c in comps)
            raise IdentifiabilityError(
                f"comparison graph is disconnected into {len(comps)} components: {shown}"
            )

    def laplacian_solve(
        self, rhs: NDArray[np.float64], weights: NDArray[np.float64] | None = None
    ) -> NDArray[np.float64]:
        """Solve ``L x = rhs`` by Jacobi-preconditioned CG, falling back to a sparse LU."""
        lap = self.laplacian(weights)
        rhs = np.asarray(rhs, dtype=np.float64)
        cols = rhs[:, None] if rhs.ndim == 1 else rhs
        diag = lap.diagonal()
        precond = spla.LinearOperator(lap.shape, matvec=lambda v: v / diag)
        out = np.empty_like(cols)
        lu = None
        for k in range(cols.shape[1]):
            b = cols[:, k]
            x, info = spla.cg(lap, b, rtol=CG_RTOL, atol=0.0, M=precond, maxiter=10 * self.n + 100)
            if info != 0 or np.linalg.norm(lap @ x - b) > 1e-10 * max(np.linalg.norm(b), 1.0):
                if lu is None:
                    lu = spla.splu(lap.tocsc())
                x = lu.solve(b)
            out[:, k] = x
        return out[:, 0] if rhs.ndim == 1 else out

    def project_out(
        self, y: NDArray[np.float64], weights: NDArray[np.float64] | None = None
    ) -> NDArray[np.float64]:
        """Residual of ``y`` after (weighted) least-squares regression on ``U``."""
        y = np.asarray(y, dtype=np.float64)
        if self.mode == "closed_form" and weights is None:
            return self.d_apply(y)
        self.check_connected()
        w = np.ones(self.n_pairs) if weights is None else weights
        wy = y * (w if y.ndim == 1 else w[:, None])
        coef = self.laplacian_solve(self.u_transpose_apply(wy), weights)
        return y - self.u_apply(coef)

    def solve_normal_equations(
        self,
        zbar: NDArray[np.float64],
        y: NDArray[np.float64],
        weights: NDArray[np.float64] | None = None,
    ) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
        """Minimize ``sum w (y - U theta - Zbar eta)^2`` by eliminating the merit block."""
        self.check_connected()
        zbar = np.asarray(zbar, dtype=np.float64).reshape(self.n_pairs, -1)
        y = np.asarray(y, dtype=np.float64)
        w = np.ones(self.n_pairs) if weights is None else np.asarray(weights, dtype=np.float64)
        p = zbar.shape[1]
        if p:
            ztil = self.project_out(zbar, w)
            a = zbar.T @ (w[:, None] * ztil)
            a = (a + a.T) / 2
            eig = np.linalg.eigvalsh(a)
            if eig[0] <= 1e-10 * max(eig.sum(), float(np.sum(w[:, None] * zbar * zbar)), 1e-300):
                raise IdentifiabilityError(
                    "covariates are collinear with the merit design after projection"
                )
            eta = np.linalg.solve(a, ztil.T @ (w * y))
        else:
            eta = np.zeros(0)
        resid = y - zbar @ eta
        theta = self.laplacian_solve(self.u_transpose_apply(w * resid), w)
        return theta, eta

