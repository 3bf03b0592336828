"""Geographic hierarchy and forecast reconciliation.

A two-level tree (total, regions, destinations) is encoded by a 0/1 summing
matrix S of shape (n, m) whose bottom block is the identity. Reconciliation
maps possibly incoherent base forecasts y_hat (n series) to coherent ones
via S @ G @ y_hat. Top-down G carries a proportion vector in its first
column; WLS and minimum-trace G solve a generalized least squares projection
G = (S' W^-1 S)^-1 S' W^-1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .errors import BadProportions, MalformedTree, ShapeMismatch, SingularW


@dataclass(frozen=True)
class Hierarchy:
    """Node ordering is total, regions (declaration order), then leaves."""

    nodes: tuple
    bottom: tuple
    S: np.ndarray

    @property
    def n(self) -> int:
        return self.S.shape[0]

    @property
    def m(self) -> int:
        return self.S.shape[1]

    def row_of(self, node: str) -> int:
        return self.nodes.index(node)

    def aggregate(self, bottom_rows: np.ndarray) -> np.ndarray:
        """S @ bottom_rows; bottom_rows has shape (m, h)."""
        return self.S @ bottom_rows


def build_summing_matrix(tree: dict[str, list[str]], total_name: str = "total") -> Hierarchy:
    """Build the hierarchy from a region -> destination-list declaration.

    Every destination must belong to exactly one region; regions must be
    non-empty. Node order is total, regions, then destinations (bottom). A
    region covering every leaf would duplicate the root row and is dropped.
    """
    if not tree:
        raise MalformedTree("empty hierarchy declaration")
    bottom: list[str] = []
    for region, leaves in tree.items():
        if region == total_name:
            raise MalformedTree(f"region name collides with total node {total_name!r}")
        if not leaves:
            raise MalformedTree(f"region {region!r} has no destinations")
        for leaf in leaves:
            if leaf in bottom:
                raise MalformedTree(f"destination {leaf!r} assigned to two regions")
            bottom.append(leaf)
    m = len(bottom)
    regions = [r for r in tree if len(tree[r]) < m]
    nodes = [total_name, *regions, *bottom]
    S = np.zeros((1 + len(regions) + m, m))
    S[0, :] = 1.0
    for r, region in enumerate(regions):
        for leaf in tree[region]:
            S[1 + r, bottom.index(leaf)] = 1.0
    S[1 + len(regions) :, :] = np.eye(m)
    return Hierarchy(nodes=tuple(nodes), bottom=tuple(bottom), S=S)


@dataclass(frozen=True)
class GMatrix:
    G: np.ndarray
    method: str = ""


def top_down_G(proportions: np.ndarray, n: int) -> GMatrix:
    """G whose first column distributes the total by ``proportions``."""
    p = np.asarray(proportions, dtype=float)
    if np.any(p < 0):
        raise BadProportions("proportions must be >= 0")
    if abs(p.sum() - 1.0) > 1e-12:
        raise BadProportions(f"proportions must sum to 1, got {p.sum()!r}")
    if n < len(p):
        raise ShapeMismatch("n must be at least the number of bottom series")
    G = np.zeros((len(p), n))
    G[:, 0] = p
    return GMatrix(G, method="top_down")


def mint_G(hierarchy: Hierarchy, W: np.ndarray) -> GMatrix:
    """Trace-minimizing reconciliation map for error covariance W.

    Solves (S' W^-1 S) G = S' W^-1 by pivoted QR and refuses near-singular
    systems instead of regularizing. The result satisfies G @ S = I (the
    reconciliation leaves coherent forecasts untouched).
    """
    S = hierarchy.S
    n = hierarchy.n
    W = np.asarray(W, dtype=float)
    if W.shape != (n, n):
        raise ShapeMismatch(f"W must be {n}x{n}")
    if np.max(np.abs(W - W.T)) > 1e-8 * max(1.0, np.max(np.abs(W))):
        raise SingularW("W must be symmetric")
    try:
        c = linalg.cho_factor(W)
    except linalg.LinAlgError:
        raise SingularW("W is not positive definite") from None
    Winv_S = linalg.cho_solve(c, S)  # W^-1 S
    A = S.T @ Winv_S
    B = Winv_S.T  # S' W^-1

    Q, R, piv = linalg.qr(A, pivoting=True)
    diag = np.abs(np.diag(R))
    if diag.min() < 1e-12 * max(diag.max(), 1.0):
        raise SingularW("S' W^-1 S is numerically singular")
    G = np.empty_like(B)
    rhs = Q.T @ B
    G_piv = linalg.solve_triangular(R, rhs)
    G[piv, :] = G_piv
    return GMatrix(G, method="mint")


def wls_G(hierarchy: Hierarchy, W: np.ndarray) -> GMatrix:
    """MinT with the off-diagonal of W zeroed (weighted least squares)."""
    g = mint_G(hierarchy, np.diag(np.diag(np.asarray(W, dtype=float))))
    return GMatrix(g.G, method="wls")


def reconcile(hierarchy: Hierarchy, G: GMatrix, base: np.ndarray) -> np.ndarray:
    """Coherent forecasts S @ G @ base for an (n, h) base-forecast matrix."""
    base = np.asarray(base, dtype=float)
    if base.ndim == 1:
        base = base[:, None]
    if base.shape[0] != hierarchy.n or G.G.shape != (hierarchy.m, hierarchy.n):
        raise ShapeMismatch(
            f"expected base ({hierarchy.n}, h) and G ({hierarchy.m}, {hierarchy.n})"
        )
    return hierarchy.S @ (G.G @ base)


def coherence_residual(hierarchy: Hierarchy, forecasts: np.ndarray) -> float:
    """Largest relative mismatch between aggregate rows and their leaf sums."""
    bottom = forecasts[hierarchy.n - hierarchy.m :, :]
    implied = hierarchy.S @ bottom
    scale = np.maximum(np.abs(implied), 1.0)
    return float(np.max(np.abs(forecasts - implied) / scale))


# ---------------------------------------------------------------------------
# Covariance estimation for MinT / WLS
# ---------------------------------------------------------------------------


def shrink_covariance(residuals: np.ndarray) -> np.ndarray:
    """Sample covariance shrunk toward its diagonal.

    ``residuals`` has shape (T, n) of in-sample one-step base-forecast
    errors. The shrinkage intensity follows the Schafer-Strimmer estimate on
    the correlation scale: lambda* = sum Var(r_ij) / sum r_ij^2 over i != j,
    clipped to [0, 1]. The diagonal is preserved exactly.
    """
    R = np.asarray(residuals, dtype=float)
    T, n = R.shape
    if T < 3:
        raise SingularW(f"need >= 3 residual rows, got {T}")
    Rc = R - R.mean(axis=0)
    cov = Rc.T @ Rc / (T - 1)
    sd = np.sqrt(np.maximum(np.diag(cov), 1e-30))
    X = Rc / sd
    corr = X.T @ X / (T - 1)

    # variance of each correlation entry, standard w_ij machinery
    W_all = np.einsum("ti,tj->tij", X, X)
    w_bar = W_all.mean(axis=0)
    var_w = ((W_all - w_bar) ** 2).sum(axis=0) * T / ((T - 1) ** 3)
    off = ~np.eye(n, dtype=bool)
    denom = float((corr[off] ** 2).sum())
    lam = 1.0 if denom <= 0 else float(np.clip(var_w[off].sum() / denom, 0.0, 1.0))

    corr_shrunk = (1.0 - lam) * corr
    np.fill_diagonal(corr_shrunk, 1.0)
    out = corr_shrunk * np.outer(sd, sd)
    # keep strictly positive diagonal so Cholesky stays feasible
    np.fill_diagonal(out, np.maximum(np.diag(out), 1e-12))
    return out
