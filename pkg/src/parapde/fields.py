"""Gridded spatio-temporal data, noise injection and dataset files.

A dataset on disk is a pair of files sharing a stem:

``<stem>.meta``
    UTF-8 text, one ``key=value`` per line.
``<stem>.f64``
    little-endian float64 payload, row-major, fields concatenated in the
    order given by the ``fields`` key.
"""
from __future__ import annotations

import os
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "Grid1D",
    "Grid2D",
    "Field1D",
    "Field2D",
    "NoiseSpec",
    "SampledSet",
    "DatasetError",
    "add_noise",
    "save_dataset",
    "load_dataset",
    "subsample_points",
    "uniform_axis",
]


class DatasetError(ValueError):
    """Malformed or inconsistent dataset file."""


def _check_uniform(name, coords, step):
    coords = np.asarray(coords, dtype=float)
    if coords.ndim != 1 or coords.size < 8:
        raise ValueError(f"{name} needs at least 8 samples, got {coords.size}")
    if not step > 0:
        raise ValueError(f"d{name} must be positive")
    # float64 roundoff of start + i*step grows with |coords|
    tol = 1e-12 * step + 8 * np.finfo(float).eps * np.max(np.abs(coords))
    if np.max(np.abs(np.diff(coords) - step)) >= tol:
        raise ValueError(f"{name} is not uniformly spaced with step {step}")
    return coords


def uniform_axis(start, step, count):
    """Coordinates ``start + step * arange(count)``."""
    return start + step * np.arange(count, dtype=float)


@dataclass(frozen=True)
class Grid1D:
    x: np.ndarray
    t: np.ndarray
    dx: float
    dt: float
    periodic: bool = True

    def __post_init__(self):
        object.__setattr__(self, "x", _check_uniform("x", self.x, self.dx))
        object.__setattr__(self, "t", _check_uniform("t", self.t, self.dt))

    @property
    def shape(self):
        return (self.x.size, self.t.size)


@dataclass(frozen=True)
class Grid2D:
    x: np.ndarray
    y: np.ndarray
    t: np.ndarray
    dx: float
    dy: float
    dt: float
    periodic: bool = True

    def __post_init__(self):
        object.__setattr__(self, "x", _check_uniform("x", self.x, self.dx))
        object.__setattr__(self, "y", _check_uniform("y", self.y, self.dy))
        object.__setattr__(self, "t", _check_uniform("t", self.t, self.dt))

    @property
    def shape(self):
        return (self.x.size, self.y.size, self.t.size)


@dataclass(frozen=True)
class Field1D:
    """Scalar field ``u[i, j] = u(x[i], t[j])``."""

    grid: Grid1D
    u: np.ndarray

    def __post_init__(self):
        u = np.asarray(self.u, dtype=float)
        if u.shape != self.grid.shape:
            raise ValueError(f"u has shape {u.shape}, grid is {self.grid.shape}")
        if not np.all(np.isfinite(u)):
            raise ValueError("field contains non-finite values")
        u.flags.writeable = False
        object.__setattr__(self, "u", u)

    @property
    def arrays(self):
        return {"u": self.u}


@dataclass(frozen=True)
class Field2D:
    """Vorticity and velocity on an ``(n_x, n_y, m)`` grid."""

    grid: Grid2D
    omega: np.ndarray
    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        for name in ("omega", "u", "v"):
            a = np.asarray(getattr(self, name), dtype=float)
            if a.shape != self.grid.shape:
                raise ValueError(f"{name} has shape {a.shape}, grid is {self.grid.shape}")
            if not np.all(np.isfinite(a)):
                raise ValueError(f"{name} contains non-finite values")
            a.flags.writeable = False
            object.__setattr__(self, name, a)

    @property
    def arrays(self):
        return {"omega": self.omega, "u": self.u, "v": self.v}


@dataclass(frozen=True)
class NoiseSpec:
    """Relative noise level and PRNG seed.

    ``level`` is a fraction: 0.01 means a standard deviation of 1% of the
    root-mean-square value of each noised array.
    """

    level: float
    seed: int = 0

    def __post_init__(self):
        if not self.level >= 0:
            raise ValueError(f"noise level must be nonnegative, got {self.level}")


def _rms(a):
    return float(np.linalg.norm(a) / np.sqrt(a.size))


def add_noise(field, spec: NoiseSpec):
    """Return a copy of ``field`` with i.i.d. Gaussian noise added.

    Each array ``A`` of the field gets noise with standard deviation
    ``spec.level * rms(A)``. Samples come from numpy's PCG64 generator
    seeded with ``spec.seed`` and are drawn in row-major order, arrays in
    the field's declared order (``u`` for 1D; ``omega, u, v`` for 2D).
    """
    if spec.level < 0:
        raise ValueError("noise level must be nonnegative")
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    noised = {}
    for name, a in field.arrays.items():
        if spec.level == 0:
            noised[name] = a.copy()
            continue
        eta = rng.standard_normal(a.shape)
        noised[name] = a + spec.level * _rms(a) * eta
    if isinstance(field, Field1D):
        return Field1D(field.grid, noised["u"])
    return Field2D(field.grid, noised["omega"], noised["u"], noised["v"])


# -- dataset files -----------------------------------------------------------


def _stem(path):
    p = Path(path)
    if p.suffix in (".meta", ".f64"):
        p = p.with_suffix("")
    return p


def _atomic_write(path: Path, data: bytes):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fmt(v: float) -> str:
    return repr(float(v))


def save_dataset(field, path):
    """Write ``field`` to ``<path>.meta`` and ``<path>.f64``."""
    stem = _stem(path)
    g = field.grid
    if isinstance(field, Field1D):
        meta = {
            "kind": "field1d",
            "dims": f"{g.x.size},{g.t.size}",
            "dx": _fmt(g.dx),
            "dt": _fmt(g.dt),
            "x0": _fmt(g.x[0]),
            "t0": _fmt(g.t[0]),
            "periodic": str(bool(g.periodic)).lower(),
            "fields": "u",
        }
    elif isinstance(field, Field2D):
        meta = {
            "kind": "field2d",
            "dims": f"{g.x.size},{g.y.size},{g.t.size}",
            "dx": _fmt(g.dx),
            "dy": _fmt(g.dy),
            "dt": _fmt(g.dt),
            "x0": _fmt(g.x[0]),
            "y0": _fmt(g.y[0]),
            "t0": _fmt(g.t[0]),
            "periodic": str(bool(g.periodic)).lower(),
            "fields": "omega,u,v",
        }
    else:
        raise TypeError(f"cannot save {type(field).__name__}")
    payload = b"".join(
        np.ascontiguousarray(a, dtype="<f8").tobytes() for a in field.arrays.values()
    )
    _atomic_write(stem.with_suffix(".f64"), payload)
    text = "".join(f"{k}={v}\n" for k, v in meta.items())
    _atomic_write(stem.with_suffix(".meta"), text.encode("utf-8"))
    return stem


def read_meta(path) -> dict:
    """Parse a ``key=value`` file; blank lines and ``#`` comments are skipped."""
    meta = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise DatasetError(f"{path}:{lineno}: expected key=value")
            key, value = line.split("=", 1)
            meta[key.strip()] = value.strip()
    return meta


def _axis(meta, start_key, step_key, count):
    try:
        start = float(meta.get(start_key, "0"))
        step = float(meta[step_key])
    except KeyError:
        raise DatasetError(f"missing key {step_key!r}") from None
    except ValueError as err:
        raise DatasetError(str(err)) from None
    return uniform_axis(start, step, count), step


def load_dataset(path):
    """Read a dataset written by :func:`save_dataset` (or by another tool
    following the same layout)."""
    stem = _stem(path)
    meta = read_meta(stem.with_suffix(".meta"))
    for key in ("kind", "dims", "dx", "dt"):
        if key not in meta:
            raise DatasetError(f"header is missing required key {key!r}")
    kind = meta["kind"]
    try:
        dims = tuple(int(s) for s in meta["dims"].split(","))
    except ValueError:
        raise DatasetError(f"bad dims {meta['dims']!r}") from None
    periodic = meta.get("periodic", "true").lower() in ("1", "true", "yes")
    if kind == "field1d":
        names, ndim = ["u"], 2
    elif kind == "field2d":
        names, ndim = ["omega", "u", "v"], 3
    else:
        raise DatasetError(f"unknown kind {kind!r}")
    if len(dims) != ndim or min(dims) <= 0:
        raise DatasetError(f"dims {dims} invalid for {kind}")
    declared = [s.strip() for s in meta.get("fields", ",".join(names)).split(",")]
    if sorted(declared) != sorted(names):
        raise DatasetError(f"fields {declared} invalid for {kind}")

    raw = np.fromfile(stem.with_suffix(".f64"), dtype="<f8")
    size = int(np.prod(dims))
    if raw.size != size * len(declared):
        raise DatasetError(
            f"payload holds {raw.size} values, header declares {size * len(declared)}"
        )
    if not np.all(np.isfinite(raw)):
        raise DatasetError("payload contains non-finite values")
    arrays = {
        name: raw[i * size:(i + 1) * size].reshape(dims).astype(float)
        for i, name in enumerate(declared)
    }
    try:
        if kind == "field1d":
            x, dx = _axis(meta, "x0", "dx", dims[0])
            t, dt = _axis(meta, "t0", "dt", dims[1])
            return Field1D(Grid1D(x, t, dx, dt, periodic), arrays["u"])
        x, dx = _axis(meta, "x0", "dx", dims[0])
        y, dy = _axis(meta, "y0", "dy", dims[1])
        t, dt = _axis(meta, "t0", "dt", dims[2])
        grid = Grid2D(x, y, t, dx, dy, dt, periodic)
        return Field2D(grid, arrays["omega"], arrays["u"], arrays["v"])
    except ValueError as err:
        if isinstance(err, DatasetError):
            raise
        raise DatasetError(str(err)) from None


# -- spatial subsampling -----------------------------------------------------


@dataclass(frozen=True)
class SampledSet:
    """Spatial sample locations shared by every retained timestep."""

    ix: np.ndarray
    iy: np.ndarray
    it: np.ndarray

    @property
    def count(self):
        return self.ix.size


def subsample_points(field: Field2D, count: int, every_kth_time: int,
                     region=None, seed: int = 0) -> SampledSet:
    """Draw ``count`` distinct grid points from ``region`` and keep every
    ``every_kth_time``-th snapshot.

    ``region`` is ``(x_min, x_max, y_min, y_max)`` in coordinate units,
    inclusive; ``None`` means the whole grid.
    """
    g = field.grid
    nx, ny, m = g.shape
    if count < 1:
        raise ValueError("count must be positive")
    if not 1 <= every_kth_time <= m:
        raise ValueError(f"every_kth_time must lie in [1, {m}]")
    if region is None:
        xs, ys = np.arange(nx), np.arange(ny)
    else:
        x_min, x_max, y_min, y_max = region
        xs = np.flatnonzero((g.x >= x_min) & (g.x <= x_max))
        ys = np.flatnonzero((g.y >= y_min) & (g.y <= y_max))
        if xs.size == 0 or ys.size == 0:
            raise ValueError(f"region {region} contains no grid points")
    size = xs.size * ys.size
    if count > size:
        raise ValueError(f"count {count} exceeds region size {size}")
    rng = np.random.Generator(np.random.PCG64(seed))
    flat = np.sort(rng.choice(size, size=count, replace=False))
    ix = xs[flat // ys.size]
    iy = ys[flat % ys.size]
    it = np.arange(0, m, every_kth_time)
    return SampledSet(ix, iy, it)
