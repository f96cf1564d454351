"""Hyperparameter sweeps and AIC-style model selection."""
from __future__ import annotations

import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .features import BlockSystem, split_validation
from .solvers import (GlassoParams, ParametricModel, SgtrParams, _model, glasso,
                      group_correlations, least_squares_refit, ridge_blockwise, sgtr)

__all__ = [
    "SweepEntry",
    "SweepResult",
    "lambda_max",
    "epsilon_range",
    "aic_loss",
    "sweep",
    "select_index",
    "hyperparameter_grid",
    "LOSS_FLOOR",
]

LOSS_FLOOR = 1e-5
METHODS = ("sgtr", "glasso")


@dataclass(frozen=True)
class SweepEntry:
    hyperparameter: float
    model: ParametricModel
    loss: float
    k: int


@dataclass(frozen=True)
class SweepResult:
    """All models of one sweep.

    ``model`` is the selected support refitted on the full system.
    """

    method: str
    entries: list
    selected: int
    model: ParametricModel
    seed: int

    @property
    def best(self):
        return self.entries[self.selected]

    def trace(self):
        """``(hyperparameter, loss, k)`` rows in grid order."""
        return [(e.hyperparameter, e.loss, e.k) for e in self.entries]


def _check_nonempty(system):
    B, r, d = system.shape
    if B == 0 or r == 0 or d == 0:
        raise ValueError("empty system")


def lambda_max(system: BlockSystem) -> float:
    """Smallest group-lasso penalty whose solution is identically zero:
    ``max_g |A_g' b| / N`` with ``N`` the number of rows."""
    _check_nonempty(system)
    return float(np.max(group_correlations(system)) / system.n_rows)


def epsilon_range(system: BlockSystem, ridge: float = 1e-5):
    """``(min, max)`` group norm of the blockwise ridge solution.

    Groups flagged in every block have norm zero and are skipped, so the
    lower end stays usable on a log scale.
    """
    _check_nonempty(system)
    live = ~system.group_flagged()
    if not np.any(live):
        raise ValueError("every group is flagged")
    norms = np.linalg.norm(ridge_blockwise(system, ridge), axis=1)[live]
    return float(np.min(norms)), float(np.max(norms))


def aic_loss(model, system: BlockSystem, N: Optional[int] = None, floor: float = LOSS_FLOOR):
    """``N ln(|theta xi - b|^2 / N + floor) + 2k`` on a normalized system.

    ``model`` is a :class:`ParametricModel` (its normalized coefficients
    are used) or a ``(coeffs, k)`` pair. ``N`` defaults to the size of
    the dataset the system came from.
    """
    if isinstance(model, ParametricModel):
        coeffs, k = model.coeffs_normalized, model.k
    else:
        coeffs, k = model
    coeffs = np.asarray(coeffs, dtype=float)
    B, _, d = system.shape
    if coeffs.shape != (d, B):
        raise ValueError(f"coefficients have shape {coeffs.shape}, system needs {(d, B)}")
    if N is None:
        N = system.n_data
    pred = np.einsum("jri,ij->jr", system.theta, coeffs)
    rss = float(np.sum((system.b - pred) ** 2))
    return N * np.log(rss / N + floor) + 2 * k


def select_index(losses, ks, hypers):
    """Argmin of the loss; ties go to fewer terms, then the larger
    (sparser) hyperparameter."""
    losses = np.asarray(losses, dtype=float)
    finite = np.isfinite(losses)
    if not np.any(finite):
        raise ValueError("no model attains a finite loss")
    order = sorted(np.flatnonzero(finite), key=lambda i: (losses[i], ks[i], -hypers[i]))
    return int(order[0])


def hyperparameter_grid(system: BlockSystem, method: str, count: int = 50, ridge: float = 1e-5):
    """Log-spaced grid: ``[1e-5, 1] * lambda_max`` for glasso,
    ``[eps_min, eps_max]`` for sgtr."""
    if method == "glasso":
        hi = lambda_max(system)
        return np.logspace(np.log10(1e-5 * hi), np.log10(hi), count)
    if method == "sgtr":
        lo, hi = epsilon_range(system, ridge)
        return np.logspace(np.log10(lo), np.log10(hi), count)
    raise ValueError(f"unknown method {method!r}; choose from {METHODS}")


def _threads():
    try:
        n = int(os.environ.get("PARAPDE_THREADS", "1"))
    except ValueError:
        n = 1
    return max(1, n)


def sweep(system: BlockSystem, method: str = "sgtr", count: int = 50, seed: int = 0,
          fraction: float = 0.2, ridge: float = 1e-5, floor: float = LOSS_FLOOR,
          glasso_tol: float = 1e-8, glasso_maxit: int = 1000) -> SweepResult:
    """Fit ``count`` models on a training split and pick the one with the
    lowest validation loss.

    The grid is computed on the training split. The chosen support is
    refitted by least squares on the whole system, so the returned
    coefficients use every row.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; choose from {METHODS}")
    if system.shape[2] < 2:
        raise ValueError("a sweep needs at least two groups")
    if count < 1:
        raise ValueError("count must be positive")
    train, valid = split_validation(system, fraction, seed)
    grid = hyperparameter_grid(train, method, count, ridge)

    def fit(h):
        if method == "sgtr":
            model = sgtr(train, SgtrParams(threshold=h, ridge=ridge))
        else:
            model = glasso(train, GlassoParams(lam=h, tol=glasso_tol, maxit=glasso_maxit),
                           warn=False)
        return model

    workers = min(_threads(), len(grid))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            models = list(pool.map(fit, grid))
    else:
        models = [fit(h) for h in grid]

    stalled = sum(1 for m in models if m.info.get("converged") is False)
    if stalled:
        warnings.warn(f"{stalled} of {len(models)} group lasso fits stopped at maxit="
                      f"{glasso_maxit} before converging", RuntimeWarning, stacklevel=2)

    entries = []
    for h, model in zip(grid, models):
        loss = aic_loss(model, valid, system.n_data, floor)
        entries.append(SweepEntry(float(h), replace(model, seed=seed), float(loss), model.k))
    sel = select_index([e.loss for e in entries], [e.k for e in entries],
                       [e.hyperparameter for e in entries])
    best = entries[sel]
    coeffs = least_squares_refit(system, best.model.active)
    final = _model(system, best.model.active, coeffs, method, best.hyperparameter,
                   {"loss": best.loss})
    final = replace(final, seed=seed)
    return SweepResult(method, entries, sel, final, seed)
