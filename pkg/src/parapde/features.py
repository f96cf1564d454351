"""Candidate libraries and the grouped block-diagonal regression problem.

Each slice of the data (one timestep, or one spatial location) becomes a
block ``theta[j] @ xi[:, j] ~ b[j]``. Column ``g`` of every block holds
the same candidate term, so the coefficients ``xi[g, :]`` form one group:
a term is either active in all slices or in none.
"""
from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .differentiate import CENTRAL_FD, SPECTRAL, DiffMethod, derivative
from .fields import Field1D, Field2D, SampledSet

__all__ = [
    "TermDescriptor",
    "LibrarySpec",
    "BlockSystem",
    "build_blocks",
    "build_blocks_2d",
    "default_terms_1d",
    "default_terms_2d",
    "denormalize",
    "split_validation",
]

DERIV_TAGS_1D = ("", "x", "xx", "xxx", "xxxx")


@dataclass(frozen=True)
class TermDescriptor:
    """One candidate function: a monomial in the data times (optionally)
    a derivative of ``of``.

    ``monomial`` is a tuple of ``(field, power)`` pairs, ``derivative`` a
    tag like ``"xx"`` or ``"xy"`` (empty for none).
    """

    monomial: tuple = ()
    derivative: str = ""
    of: str = "u"

    @property
    def power(self):
        return sum(p for _, p in self.monomial)

    @property
    def name(self):
        parts = [f if p == 1 else f"{f}^{p}" for f, p in self.monomial if p > 0]
        if self.derivative:
            parts.append(f"{self.of}_{self.derivative}")
        return "*".join(parts) if parts else "1"

    def __str__(self):
        return self.name


def default_terms_1d(max_power=3, max_derivative=4, include_constant=True, base="u"):
    """``u^p * d^k u / dx^k`` for ``k <= max_derivative``, ``p <= max_power``,
    derivative-major."""
    terms = []
    for k in range(max_derivative + 1):
        for p in range(max_power + 1):
            if k == 0 and p == 0 and not include_constant:
                continue
            mono = ((base, p),) if p else ()
            terms.append(TermDescriptor(mono, "x" * k, base))
    return terms


def _monomials(names, max_degree):
    out = [()]
    for deg in range(1, max_degree + 1):
        for combo in itertools.combinations_with_replacement(names, deg):
            out.append(tuple((f, combo.count(f)) for f in names if f in combo))
    return out


def default_terms_2d(max_power=2, max_derivative=2, include_constant=True):
    """Derivatives of the vorticity ``w`` up to ``max_derivative`` times
    monomials in ``(u, v, w)`` up to ``max_power``, plus a constant."""
    derivs = [
        "x" * i + "y" * (order - i)
        for order in range(1, max_derivative + 1)
        for i in range(order, -1, -1)
    ]
    terms = [TermDescriptor((), "", "w")] if include_constant else []
    for d in derivs:
        for mono in _monomials(("u", "v", "w"), max_power):
            terms.append(TermDescriptor(mono, d, "w"))
    return terms


@dataclass(frozen=True)
class LibrarySpec:
    """Which candidate terms to build and how to differentiate.

    ``axis`` picks the grouping: ``"time"`` makes one block per timestep
    (time-varying coefficients), ``"space"`` one block per grid point.
    """

    max_power: int = 3
    max_derivative: int = 4
    include_constant: bool = True
    space_method: DiffMethod = SPECTRAL
    time_method: DiffMethod = CENTRAL_FD
    axis: str = "time"
    terms: Optional[Sequence[TermDescriptor]] = None

    def __post_init__(self):
        if self.max_power < 1 or self.max_derivative < 1:
            raise ValueError("max_power and max_derivative must be at least 1")
        if self.max_derivative > 4:
            raise ValueError("derivatives above 4th order are not supported")
        if self.axis not in ("time", "space"):
            raise ValueError(f"axis must be 'time' or 'space', got {self.axis!r}")


def _flag_threshold(rows):
    return 1e-12 * np.sqrt(rows)


@dataclass(frozen=True, eq=False)
class BlockSystem:
    """Grouped block-diagonal regression problem.

    Attributes
    ----------
    theta_raw : (B, r, d) array
        Library blocks before normalization.
    b_raw : (B, r) array
        Time-derivative targets before normalization.
    terms : list of TermDescriptor
        Column names, shared by every block.
    axis : {"time", "space"}
    coords : (B,) array
        Time or space coordinate of each block.
    col_norms : (d, B) array
        Normalization factor of column ``g`` in block ``j``.
    b_norms : (B,) array
    flagged : (d, B) bool array
        Columns too small to normalize; their normalized values and
        coefficients are zero.
    n_data : int
        Size of the dataset the system was built from.

    ``theta`` and ``b`` hold the normalized blocks.
    """

    theta_raw: np.ndarray
    b_raw: np.ndarray
    terms: list
    axis: str
    coords: np.ndarray
    col_norms: np.ndarray
    b_norms: np.ndarray
    flagged: np.ndarray
    n_data: int
    theta: np.ndarray = field(init=False, repr=False)
    b: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        B, r, d = self.theta_raw.shape
        if self.b_raw.shape != (B, r):
            raise ValueError("targets do not match library blocks")
        if len(self.terms) != d or self.col_norms.shape != (d, B) or self.flagged.shape != (d, B):
            raise ValueError("term metadata does not match library width")
        scale = np.where(self.flagged, 0.0, 1.0 / np.where(self.flagged, 1.0, self.col_norms))
        theta = self.theta_raw * scale.T[:, None, :]
        b = self.b_raw / self.b_norms[:, None]
        theta.flags.writeable = False
        b.flags.writeable = False
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "b", b)

    @classmethod
    def from_raw(cls, theta_raw, b_raw, terms, axis, coords, n_data=None):
        """Normalize every column and target of each block to unit length."""
        theta_raw = np.asarray(theta_raw, dtype=float)
        b_raw = np.asarray(b_raw, dtype=float)
        if not (np.all(np.isfinite(theta_raw)) and np.all(np.isfinite(b_raw))):
            raise ValueError("library or targets contain non-finite values")
        B, r, d = theta_raw.shape
        col_norms = np.linalg.norm(theta_raw, axis=1).T
        flagged = col_norms < _flag_threshold(r)
        b_norms = np.linalg.norm(b_raw, axis=1)
        zero = b_norms < _flag_threshold(r)
        if np.all(zero):
            raise ValueError("all time-derivative targets are zero")
        b_norms = np.where(zero, 1.0, b_norms)
        if n_data is None:
            n_data = B * r
        return cls(theta_raw, b_raw, list(terms), axis, np.asarray(coords, dtype=float),
                   col_norms, b_norms, flagged, int(n_data))

    @property
    def shape(self):
        """``(B, r, d)``: blocks, rows per block, terms."""
        return self.theta_raw.shape

    @property
    def n_rows(self):
        return self.theta_raw.shape[0] * self.theta_raw.shape[1]

    @property
    def term_names(self):
        return [t.name for t in self.terms]

    def group_flagged(self):
        """Groups whose column is flagged in every block."""
        return np.all(self.flagged, axis=1)

    def take_rows(self, rows, renormalize):
        """Sub-system keeping ``rows[j]`` of block ``j``.

        With ``renormalize`` the norms are recomputed on the kept rows;
        otherwise this system's normalization is reused.
        """
        idx = np.asarray(rows)
        theta = np.take_along_axis(self.theta_raw, idx[:, :, None], axis=1)
        b = np.take_along_axis(self.b_raw, idx, axis=1)
        if renormalize:
            return BlockSystem.from_raw(theta, b, self.terms, self.axis, self.coords, self.n_data)
        return BlockSystem(theta, b, self.terms, self.axis, self.coords, self.col_norms,
                           self.b_norms, self.flagged, self.n_data)


def _trim(method: DiffMethod, is_row_axis: bool, max_order: int = 1):
    # one-sided stencils are dropped from rows; only shrunken polynomial
    # windows are dropped from the block axis too. Composed central
    # stencils for orders 3 and 4 reach one-sided values two samples in.
    if method.kind == "poly_smooth":
        return method.half_width
    if method.kind == "central_fd" and is_row_axis:
        return (max_order + 1) // 2
    return 0


def _term_values(term, factors, derivs):
    col = derivs[term.derivative] if term.derivative else None
    for name, p in term.monomial:
        f = factors[name] ** p
        col = f if col is None else col * f
    return col


def build_blocks(field: Field1D, spec: LibrarySpec = LibrarySpec()) -> BlockSystem:
    """Candidate library and targets for a 1D field, one block per slice."""
    if not isinstance(field, Field1D):
        raise TypeError("build_blocks needs a Field1D; use build_blocks_2d for 2D data")
    g = field.grid
    u = field.u
    terms = list(spec.terms) if spec.terms is not None else default_terms_1d(
        spec.max_power, spec.max_derivative, spec.include_constant)
    needed = {t.derivative for t in terms if t.derivative}
    derivs = {
        tag: derivative(u, g.dx, len(tag), spec.space_method, axis=0, periodic=g.periodic)
        for tag in needed
    }
    u_t = derivative(u, g.dt, 1, spec.time_method, axis=1, periodic=False)

    time_rows = spec.axis == "space"
    ex = _trim(spec.space_method, not time_rows, max((len(tag) for tag in needed), default=1))
    et = _trim(spec.time_method, time_rows)
    n, m = u.shape
    xs = slice(ex, n - ex)
    ts = slice(et, m - et)
    if n - 2 * ex < 1 or m - 2 * et < 1:
        raise ValueError("nothing left after trimming boundary samples")

    factors = {"u": u}
    cols = []
    for term in terms:
        col = _term_values(term, factors, derivs)
        if col is None:
            col = np.ones_like(u)
        cols.append(col[xs, ts])
    lib = np.stack(cols, axis=-1)  # (n', m', d)
    target = u_t[xs, ts]
    if spec.axis == "time":
        theta, b, coords = lib.transpose(1, 0, 2), target.T, g.t[ts]
    else:
        theta, b, coords = lib, target, g.x[xs]
    B, r, d = theta.shape
    if r < 2 * d:
        warnings.warn(f"only {r} rows per block for {d} terms", stacklevel=2)
    return BlockSystem.from_raw(np.ascontiguousarray(theta), np.ascontiguousarray(b),
                                terms, spec.axis, coords, n_data=u.size)


def build_blocks_2d(field: Field2D, sample: SampledSet,
                    spec: LibrarySpec = LibrarySpec(max_power=2, max_derivative=2)) -> BlockSystem:
    """Library for 2D vorticity data on sampled points, one block per
    retained timestep.

    Targets are ``w_t``; the default library is :func:`default_terms_2d`.
    Only the time axis may be used for grouping.
    """
    if spec.axis != "time":
        raise ValueError("2D systems are grouped by time")
    g = field.grid
    nx, ny, m = g.shape
    if np.any(sample.ix >= nx) or np.any(sample.iy >= ny) or np.any(sample.it >= m) \
            or np.any(sample.ix < 0) or np.any(sample.iy < 0) or np.any(sample.it < 0):
        raise ValueError("sample indices fall outside the grid")
    terms = list(spec.terms) if spec.terms is not None else default_terms_2d(
        min(spec.max_power, 2), min(spec.max_derivative, 2), spec.include_constant)

    et = _trim(spec.time_method, False)
    it = sample.it[(sample.it >= et) & (sample.it < m - et)]
    orders = [max(t.derivative.count("x"), t.derivative.count("y")) for t in terms]
    ex = _trim(spec.space_method, True, max(orders, default=1))
    keep = ((sample.ix >= ex) & (sample.ix < nx - ex) & (sample.iy >= ex) & (sample.iy < ny - ex))
    ix, iy = sample.ix[keep], sample.iy[keep]
    if it.size == 0 or ix.size == 0:
        raise ValueError("nothing left after trimming boundary samples")

    w = field.omega[:, :, it]
    derivs = {}
    for tag in {t.derivative for t in terms if t.derivative}:
        d = w
        nxo, nyo = tag.count("x"), tag.count("y")
        if nxo:
            d = derivative(d, g.dx, nxo, spec.space_method, axis=0, periodic=g.periodic)
        if nyo:
            d = derivative(d, g.dy, nyo, spec.space_method, axis=1, periodic=g.periodic)
        derivs[tag] = d[ix, iy, :]
    factors = {"u": field.u[ix, iy][:, it],
               "v": field.v[ix, iy][:, it],
               "w": field.omega[ix, iy][:, it]}
    series = field.omega[ix, iy, :]
    w_t = derivative(series, g.dt, 1, spec.time_method, axis=1, periodic=False)[:, it]

    cols = []
    for term in terms:
        col = _term_values(term, factors, derivs)
        cols.append(np.ones_like(w_t) if col is None else col)
    lib = np.stack(cols, axis=-1)  # (points, times, d)
    theta = np.ascontiguousarray(lib.transpose(1, 0, 2))
    b = np.ascontiguousarray(w_t.T)
    return BlockSystem.from_raw(theta, b, terms, "time", g.t[it], n_data=field.omega.size)


def denormalize(coeffs, system: BlockSystem):
    """Map ``(d, B)`` coefficients of the normalized system back to the
    units of the raw library; flagged columns map to zero."""
    coeffs = np.asarray(coeffs, dtype=float)
    B, _, d = system.shape
    if coeffs.shape != (d, B):
        raise ValueError(f"coefficients have shape {coeffs.shape}, expected {(d, B)}")
    safe = np.where(system.flagged, 1.0, system.col_norms)
    out = coeffs * system.b_norms[None, :] / safe
    return np.where(system.flagged, 0.0, out)


def split_validation(system: BlockSystem, fraction=0.2, seed=0):
    """Hold out ``round(fraction * r)`` random rows of every block.

    The training part is renormalized on its own rows; the validation part
    reuses the training normalization. Returns ``(train, valid)``.
    """
    if not 0 < fraction < 1:
        raise ValueError(f"validation fraction must lie in (0, 1), got {fraction}")
    B, r, _ = system.shape
    if r < 5:
        raise ValueError("blocks need at least 5 rows to split")
    n_valid = int(np.floor(fraction * r + 0.5))
    n_valid = min(max(n_valid, 1), r - 1)
    rng = np.random.Generator(np.random.PCG64(seed))
    perm = np.argsort(rng.random((B, r)), axis=1, kind="stable")
    valid_rows = np.sort(perm[:, :n_valid], axis=1)
    train_rows = np.sort(perm[:, n_valid:], axis=1)
    train = system.take_rows(train_rows, renormalize=True)
    valid = BlockSystem(
        np.take_along_axis(system.theta_raw, valid_rows[:, :, None], axis=1),
        np.take_along_axis(system.b_raw, valid_rows, axis=1),
        system.terms, system.axis, system.coords,
        train.col_norms, train.b_norms, train.flagged, system.n_data,
    )
    return train, valid
