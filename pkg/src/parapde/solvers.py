"""Group-sparse regression on a :class:`~parapde.features.BlockSystem`.

The block-diagonal problem decouples: every block is an independent
``d``-dimensional regression, and only the sparsity pattern ties blocks
together. Solvers work on the normalized system and report coefficients
both normalized and in physical units.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from numba import njit

from .features import BlockSystem, denormalize

__all__ = [
    "SgtrParams",
    "GlassoParams",
    "ParametricModel",
    "ridge_blockwise",
    "least_squares_refit",
    "sgtr",
    "glasso",
    "group_lasso_bcd",
    "group_norms",
    "group_correlations",
]


def group_norms(coeffs):
    """2-norm of each row of a ``(d, B)`` coefficient matrix."""
    return np.linalg.norm(coeffs, axis=1)


@dataclass(frozen=True)
class SgtrParams:
    threshold: float
    ridge: float = 1e-5
    maxit: int = 25
    relevance: Callable[[np.ndarray], np.ndarray] = group_norms

    def __post_init__(self):
        if self.ridge < 0 or self.threshold < 0:
            raise ValueError("ridge and threshold must be nonnegative")
        if self.maxit < 1:
            raise ValueError("maxit must be at least 1")


@dataclass(frozen=True)
class GlassoParams:
    lam: float
    tol: float = 1e-8
    maxit: int = 1000

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lambda must be nonnegative")
        if self.maxit < 1:
            raise ValueError("maxit must be at least 1")


@dataclass(frozen=True, eq=False)
class ParametricModel:
    """A discovered PDE: active terms and one coefficient per slice.

    ``coeffs`` is in physical units, ``coeffs_normalized`` in units of
    the normalized system it was fitted on; rows outside ``active`` are
    zero in both. ``mse`` is the mean squared residual on that normalized
    system.
    """

    active: tuple
    coeffs: np.ndarray
    coeffs_normalized: np.ndarray
    terms: list
    axis: str
    coords: np.ndarray
    mse: float
    method: str
    hyperparameter: float
    seed: Optional[int] = None
    info: dict = field(default_factory=dict)

    @property
    def k(self):
        return len(self.active)

    @property
    def active_names(self):
        return [self.terms[g].name for g in self.active]

    def series(self, name):
        """Coefficient of term ``name`` across slices (zeros if inactive)."""
        names = [t.name for t in self.terms]
        return self.coeffs[names.index(name)]

    def __repr__(self):
        return (f"ParametricModel(method={self.method!r}, k={self.k}, "
                f"terms={self.active_names}, hyperparameter={self.hyperparameter:.4g})")


def group_correlations(system: BlockSystem):
    """``|A_g' b|`` for every group of the normalized system."""
    return np.linalg.norm(np.einsum("jri,jr->ij", system.theta, system.b), axis=1)


def _gram(system):
    th = system.theta
    G = np.einsum("jri,jrk->jik", th, th)
    c = np.einsum("jri,jr->ji", th, system.b)
    return G, c


def _residual_sq(system, coeffs):
    pred = np.einsum("jri,ij->jr", system.theta, coeffs)
    return float(np.sum((system.b - pred) ** 2))


def _min_norm_lstsq(theta, b, n_live):
    """Batched minimum-norm least squares; warns on rank deficiency among
    the ``n_live`` unflagged columns of each block."""
    u, s, vt = np.linalg.svd(theta, full_matrices=False)
    cutoff = s[:, :1] * max(theta.shape[1:]) * np.finfo(float).eps
    keep = s > cutoff
    rank = keep.sum(axis=1)
    if np.any(rank < n_live):
        bad = np.flatnonzero(rank < n_live)
        warnings.warn(f"rank-deficient least squares in block(s) {bad[:5].tolist()}; "
                      "using the minimum-norm solution", RuntimeWarning, stacklevel=3)
    s_inv = np.where(keep, 1.0 / np.where(keep, s, 1.0), 0.0)
    ub = np.einsum("jrk,jr->jk", u, b)
    return np.einsum("jki,jk->ji", vt, s_inv * ub)


def _solve_active(system, active, lam):
    B, _, d = system.shape
    out = np.zeros((d, B))
    active = np.asarray(sorted(active), dtype=int)
    if active.size == 0:
        return out
    th = system.theta[:, :, active]
    if lam > 0:
        G = np.einsum("jri,jrk->jik", th, th) + lam * np.eye(active.size)
        c = np.einsum("jri,jr->ji", th, system.b)
        try:
            w = np.linalg.solve(G, c[:, :, None])[:, :, 0]
        except np.linalg.LinAlgError as err:
            raise np.linalg.LinAlgError(f"ridge normal equations are singular: {err}") from err
    else:
        n_live = (~system.flagged[active]).sum(axis=0)
        w = _min_norm_lstsq(th, system.b, n_live)
    out[active] = w.T
    return out


def ridge_blockwise(system: BlockSystem, lam: float, active=None):
    """Ridge coefficients ``(d, B)`` of each block of the normalized system.

    Minimizes ``|b_j - theta_j w|^2 + lam |w|^2`` per block, over the
    columns in ``active`` (all when ``None``). ``lam = 0`` gives the
    minimum-norm least-squares solution.
    """
    if lam < 0:
        raise ValueError("ridge parameter must be nonnegative")
    if active is None:
        active = range(system.shape[2])
    return _solve_active(system, active, lam)


def least_squares_refit(system: BlockSystem, active):
    """Unregularized per-block least squares restricted to ``active``;
    normalized ``(d, B)`` coefficients, zero outside ``active``."""
    return _solve_active(system, active, 0.0)


def _model(system, active, coeffs_n, method, hyper, info):
    active = tuple(int(g) for g in sorted(active))
    return ParametricModel(
        active=active,
        coeffs=denormalize(coeffs_n, system),
        coeffs_normalized=coeffs_n,
        terms=system.terms,
        axis=system.axis,
        coords=system.coords,
        mse=_residual_sq(system, coeffs_n) / system.n_rows,
        method=method,
        hyperparameter=float(hyper),
        info=info,
    )


def sgtr(system: BlockSystem, params: SgtrParams) -> ParametricModel:
    """Sequential grouped threshold ridge regression.

    Starting from the ridge solution, repeatedly drop groups whose
    relevance is not above ``params.threshold`` and refit the survivors
    with ridge, until the surviving set stops changing. The survivors are
    then refitted by plain least squares.
    """
    d = system.shape[2]
    active = [g for g in range(d) if not system.group_flagged()[g]]
    x = ridge_blockwise(system, params.ridge, active)
    history = [tuple(active)]
    for _ in range(params.maxit):
        relevance = params.relevance(x)
        survivors = [g for g in active if relevance[g] > params.threshold]
        if survivors == active:
            break
        active = survivors
        history.append(tuple(active))
        if not active:
            break
        x = ridge_blockwise(system, params.ridge, active)
    coeffs = least_squares_refit(system, active)
    return _model(system, active, coeffs, "sgtr", params.threshold,
                  {"history": history, "iterations": len(history) - 1})


@njit(cache=True)
def _bcd(c, Gg, diag, bb, lam, N, tol, maxit):
    """Group soft-threshold sweeps. ``c`` is ``(B, d)``, ``Gg[g]`` the
    ``(B, d)`` slice of the block Gram matrices for group ``g``."""
    B, d = c.shape
    W = np.zeros((d, B))
    GW = np.zeros((B, d))
    thresh = lam * N
    objectives = np.empty(maxit + 1)
    objectives[0] = np.sum(bb) / (2 * N)
    obj = objectives[0]
    cg = np.empty(B)
    converged = False
    sweeps = 0
    for it in range(1, maxit + 1):
        sweeps = it
        for g in range(d):
            norm = 0.0
            for j in range(B):
                cg[j] = (c[j, g] - GW[j, g] + diag[g, j] * W[g, j]) if diag[g, j] > 0 else 0.0
                norm += cg[j] * cg[j]
            norm = np.sqrt(norm)
            scale = 1.0 - thresh / norm if norm > 0 else 0.0
            if scale < 0:
                scale = 0.0
            for j in range(B):
                delta = scale * cg[j] - W[g, j]
                if delta != 0.0:
                    W[g, j] += delta
                    for h in range(d):
                        GW[j, h] += Gg[g, j, h] * delta
        fit = 0.0
        for j in range(B):
            fit += bb[j]
            for h in range(d):
                fit += W[h, j] * (GW[j, h] - 2 * c[j, h])
        penalty = 0.0
        for h in range(d):
            penalty += np.sqrt(np.sum(W[h] ** 2))
        new_obj = fit / (2 * N) + lam * penalty
        objectives[it] = new_obj
        change = abs(obj - new_obj)
        obj = new_obj
        if change <= tol * max(abs(obj), 1e-300):
            converged = True
            break
    return W, sweeps, converged, objectives[:sweeps + 1]


def group_lasso_bcd(system: BlockSystem, params: GlassoParams):
    """Block coordinate descent for the group lasso on a normalized system.

    Returns ``(W, sweeps, converged, objectives)`` with ``W`` the
    penalized ``(d, B)`` solution. Each group column has unit norm in each
    block and the blocks are disjoint, so every group update is an exact
    group soft-threshold. Groups are visited in ascending order.
    """
    G, c = _gram(system)
    bb = np.sum(system.b ** 2, axis=1)
    d = G.shape[1]
    if params.lam >= np.max(group_correlations(system)) / system.n_rows:
        # at or above lambda_max the minimizer is exactly zero
        return np.zeros((d, G.shape[0])), 0, True, np.array([np.sum(bb) / (2 * system.n_rows)])
    diag = np.ascontiguousarray(np.einsum("jii->ij", G))  # 1, or 0 where flagged
    Gg = np.ascontiguousarray(G.transpose(2, 0, 1))
    W, sweeps, converged, objectives = _bcd(
        np.ascontiguousarray(c), Gg, diag, bb, float(params.lam), float(system.n_rows),
        float(params.tol), int(params.maxit))
    return W, int(sweeps), bool(converged), objectives


def glasso(system: BlockSystem, params: GlassoParams, warn: bool = True) -> ParametricModel:
    """Group lasso with ``(1/2N)|b - A w|^2 + lam sum_g |w_g|`` followed
    by a least-squares refit on the groups it leaves nonzero.

    Hitting ``maxit`` keeps the last iterate; ``info["converged"]`` records
    it and, with ``warn``, a RuntimeWarning is issued.
    """
    W, sweeps, converged, objectives = group_lasso_bcd(system, params)
    if warn and not converged:
        warnings.warn(f"group lasso did not converge in {params.maxit} sweeps "
                      f"(lambda={params.lam:.3g})", RuntimeWarning, stacklevel=2)
    active = [g for g in range(W.shape[0]) if np.any(W[g] != 0)]
    coeffs = least_squares_refit(system, active)
    return _model(system, active, coeffs, "glasso", params.lam,
                  {"penalized": W, "sweeps": sweeps, "converged": converged,
                   "objectives": objectives})
