"""Pseudo-spectral generators for the benchmark datasets.

All four models live on periodic domains. Linear diffusion (or the stiff
constant-coefficient part of the Kuramoto-Sivashinsky operator) is
integrated exactly in Fourier space; everything else is stepped
explicitly. Snapshots land exactly on the requested output times; the
number of internal substeps per output interval is fixed for a run.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Union

import numpy as np

from .fields import Field1D, Field2D, Grid1D, Grid2D

__all__ = [
    "CoefficientProfile",
    "SimConfig",
    "SimulationError",
    "default_config",
    "solve",
    "solve_burgers",
    "solve_advection_diffusion",
    "solve_ks",
    "solve_ns2d",
    "enstrophy",
    "MODELS",
]

MODELS = ("burgers", "advection_diffusion", "ks", "ns2d")

# |z| reach of classical RK4 along the imaginary axis
_RK4_IMAG_BOUND = 2 * math.sqrt(2)


class SimulationError(RuntimeError):
    """The integration became unstable."""


@dataclass(frozen=True)
class CoefficientProfile:
    """A scalar coefficient of one variable (``x`` or ``t``).

    kinds
        ``constant``            ``offset``
        ``sinusoidal``          ``offset + amplitude * sin(frequency * s + phase)``
        ``gaussian_bump``       ``offset + amplitude * exp(-(s - center)**2 / width)``
        ``piecewise_constant``  ``offset`` for ``s < switch``, ``after`` from ``switch`` on
    """

    kind: str = "constant"
    offset: float = 0.0
    amplitude: float = 0.0
    frequency: float = 1.0
    phase: float = 0.0
    center: float = 0.0
    width: float = 1.0
    switch: float = 0.0
    after: float = 0.0

    def __post_init__(self):
        if self.kind not in ("constant", "sinusoidal", "gaussian_bump", "piecewise_constant"):
            raise ValueError(f"unknown profile kind {self.kind!r}")
        if self.kind == "gaussian_bump" and not self.width > 0:
            raise ValueError("gaussian_bump width must be positive")

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        if self.kind == "constant":
            out = np.full_like(s, self.offset)
        elif self.kind == "sinusoidal":
            out = self.offset + self.amplitude * np.sin(self.frequency * s + self.phase)
        elif self.kind == "gaussian_bump":
            out = self.offset + self.amplitude * np.exp(-(s - self.center) ** 2 / self.width)
        else:
            out = np.where(s < self.switch, self.offset, self.after)
        return out if out.ndim else float(out)

    def derivative(self, s):
        s = np.asarray(s, dtype=float)
        if self.kind == "sinusoidal":
            out = self.amplitude * self.frequency * np.cos(self.frequency * s + self.phase)
        elif self.kind == "gaussian_bump":
            out = (self.amplitude * np.exp(-(s - self.center) ** 2 / self.width)
                   * (-2 * (s - self.center) / self.width))
        else:
            out = np.zeros_like(s)
        return out if out.ndim else float(out)

    @classmethod
    def constant(cls, value):
        return cls("constant", offset=value)


def burgers_advection_profile():
    """a(t) = -(1 + sin(t)/4)."""
    return CoefficientProfile("sinusoidal", offset=-1.0, amplitude=-0.25, frequency=1.0)


def advection_velocity_profile(L=5.0):
    """c(x) = -1.5 + cos(2 pi x / L)."""
    return CoefficientProfile("sinusoidal", offset=-1.5, amplitude=1.0,
                              frequency=2 * np.pi / L, phase=np.pi / 2)


def ks_profiles(L=20.0):
    return {
        "a": CoefficientProfile("sinusoidal", offset=1.0, amplitude=0.25,
                                frequency=2 * np.pi / L),
        "b": CoefficientProfile("gaussian_bump", offset=-1.0, amplitude=0.25,
                                center=2.0, width=5.0),
        "c": CoefficientProfile("gaussian_bump", offset=-1.0, amplitude=-0.25,
                                center=-2.0, width=5.0),
    }


def reynolds_profile():
    """nu(t) = 100 before t = 10, 75 afterwards."""
    return CoefficientProfile("piecewise_constant", offset=100.0, switch=10.0, after=75.0)


InitialCondition = Union[None, np.ndarray, Callable[..., np.ndarray]]


@dataclass(frozen=True)
class SimConfig:
    """Everything needed to reproduce one simulation.

    ``t_end`` is the last output time; ``m`` output snapshots are spaced
    uniformly on ``[0, t_end]`` and the trailing ``keep_last`` of them are
    returned (all when ``None``). ``diffusion`` is the constant diffusion
    coefficient of the Burgers and advection-diffusion models.
    ``substeps=None`` derives the per-interval substep count from
    ``stability``.
    """

    model: str
    x_min: float
    x_max: float
    n: int
    m: int
    t_end: float
    profiles: dict = field(default_factory=dict)
    diffusion: float = 0.1
    initial: InitialCondition = None
    keep_last: Optional[int] = None
    y_min: float = 0.0
    y_max: float = 2 * np.pi
    n_y: int = 0
    n_vortices: int = 8
    vortex_radius: float = 0.4
    vortex_strength: float = 4.0
    seed: int = 0
    stability: float = 0.5
    substeps: Optional[int] = None

    def __post_init__(self):
        if self.model not in MODELS:
            raise ValueError(f"unknown model {self.model!r}; choose from {MODELS}")
        if not self.x_max > self.x_min:
            raise ValueError("x_max must exceed x_min")
        if self.m < 8:
            raise ValueError("need at least 8 output snapshots")
        if not self.t_end > 0:
            raise ValueError("t_end must be positive")
        if self.keep_last is not None and not 1 <= self.keep_last <= self.m:
            raise ValueError("keep_last must lie in [1, m]")
        if not 0 < self.stability <= 1:
            raise ValueError("stability factor must lie in (0, 1]")
        if self.substeps is not None and self.substeps < 1:
            raise ValueError("substeps must be positive")
        minimum = {"burgers": 64, "advection_diffusion": 64, "ks": 256, "ns2d": 32}[self.model]
        if self.n < minimum:
            raise ValueError(f"{self.model} needs n >= {minimum} for spectral accuracy")
        if self.n % 2:
            raise ValueError("grid size must be even")
        if self.model == "ns2d" and (self.n_y < minimum or self.n_y % 2):
            raise ValueError(f"ns2d needs an even n_y >= {minimum}")

    def with_overrides(self, **kw):
        return replace(self, **kw)

    @property
    def length(self):
        return self.x_max - self.x_min

    def x(self):
        return self.x_min + self.length / self.n * np.arange(self.n)

    def t(self):
        return np.linspace(0.0, self.t_end, self.m)


def default_config(model: str) -> SimConfig:
    """Benchmark defaults for ``model``."""
    if model == "burgers":
        return SimConfig("burgers", -8.0, 8.0, 256, 256, 10.0,
                         profiles={"a": burgers_advection_profile()}, diffusion=0.1)
    if model == "advection_diffusion":
        return SimConfig("advection_diffusion", -5.0, 5.0, 256, 256, 5.0,
                         profiles={"c": advection_velocity_profile(5.0)}, diffusion=0.1)
    if model == "ks":
        return SimConfig("ks", -20.0, 20.0, 512, 1024, 200.0,
                         profiles=ks_profiles(20.0), keep_last=512)
    if model == "ns2d":
        return SimConfig("ns2d", 0.0, 2 * np.pi, 64, 1000, 19.98,
                         profiles={"nu": reynolds_profile()},
                         y_min=0.0, y_max=2 * np.pi, n_y=64)
    raise ValueError(f"unknown model {model!r}; choose from {MODELS}")


def _initial_1d(config, x, default):
    ic = config.initial
    if ic is None:
        return default(x)
    if callable(ic):
        return np.asarray(ic(x), dtype=float)
    ic = np.asarray(ic, dtype=float)
    if ic.shape != x.shape:
        raise ValueError(f"initial condition has shape {ic.shape}, grid has {x.shape}")
    return ic.copy()


def _substeps(config, dt_out, rate):
    """Substeps per output interval so that ``h * rate`` stays within the
    stability factor times the RK4 imaginary-axis bound."""
    if config.substeps is not None:
        return config.substeps
    if rate <= 0:
        return 1
    return max(1, math.ceil(dt_out * rate / (config.stability * _RK4_IMAG_BOUND)))


def _check_blowup(u, scale, t):
    peak = np.max(np.abs(u))
    if not np.isfinite(peak) or peak > 1e3 * scale:
        raise SimulationError(f"solution blew up near t={t:.4g} (max |u| = {peak:.3g})")


def _finish_1d(config, x, t, snaps):
    u = np.stack(snaps, axis=1)
    if config.keep_last is not None:
        u, t = u[:, -config.keep_last:], t[-config.keep_last:]
    dx = config.length / config.n
    dt = config.t_end / (config.m - 1)
    return Field1D(Grid1D(x, t, dx, dt, periodic=True), u)


def _ifrk4_1d(config, u0, linear, explicit, rate):
    """Integrating-factor RK4 for ``u_hat' = linear * u_hat + explicit(u_hat, t)``."""
    x, t = config.x(), config.t()
    dt_out = t[1] - t[0]
    nsub = _substeps(config, dt_out, rate)
    h = dt_out / nsub
    e_half = np.exp(linear * h / 2)
    e_full = e_half ** 2
    v = np.fft.rfft(u0)
    scale = max(np.max(np.abs(u0)), 1e-300)
    snaps = [u0.copy()]
    for j in range(1, t.size):
        t0 = t[j - 1]
        for s in range(nsub):
            ts = t0 + s * h
            k1 = explicit(v, ts)
            k2 = explicit(e_half * (v + h / 2 * k1), ts + h / 2)
            k3 = explicit(e_half * v + h / 2 * k2, ts + h / 2)
            k4 = explicit(e_full * v + h * e_half * k3, ts + h)
            v = e_full * v + h / 6 * (e_full * k1 + 2 * e_half * (k2 + k3) + k4)
        u = np.fft.irfft(v, n=config.n)
        _check_blowup(u, scale, t[j])
        snaps.append(u)
    return _finish_1d(config, x, t, snaps)


def _wavenumbers(n, length):
    return 2 * np.pi * np.fft.rfftfreq(n, d=length / n)


def _odd_multiplier(k, n):
    ik = 1j * k
    ik[-1] = 0.0 if n % 2 == 0 else ik[-1]
    return ik


def solve_burgers(config: Optional[SimConfig] = None) -> Field1D:
    """Burgers' equation ``u_t = a(t) u u_x + nu u_xx`` on a periodic domain.

    The default initial condition is ``0.5 * exp(-(x + 2)**2 / 4)``, a
    pulse wide enough that its shock-like front stays resolvable by
    polynomial smoothing of noisy samples.
    """
    config = config or default_config("burgers")
    if config.model != "burgers":
        raise ValueError("config is not a burgers config")
    a = config.profiles.get("a", burgers_advection_profile())
    nu = config.diffusion
    x = config.x()
    u0 = _initial_1d(config, x, lambda x: 0.5 * np.exp(-(x + 2) ** 2 / 4))
    k = _wavenumbers(config.n, config.length)
    ik = _odd_multiplier(k, config.n)

    def explicit(v, t):
        u = np.fft.irfft(v, n=config.n)
        # a(t) u u_x in flux form keeps the mean exactly
        return a(t) * ik * np.fft.rfft(0.5 * u * u)

    amax = float(np.max(np.abs(a(np.linspace(0, config.t_end, 4 * config.m)))))
    rate = np.max(np.abs(k)) * amax * np.max(np.abs(u0))
    return _ifrk4_1d(config, u0, -nu * k**2, explicit, rate)


def solve_advection_diffusion(config: Optional[SimConfig] = None) -> Field1D:
    """``u_t = (c(x) u)_x + eps u_xx`` on a periodic domain.

    The default initial condition is ``exp(-x**2 / 2)``.
    """
    config = config or default_config("advection_diffusion")
    if config.model != "advection_diffusion":
        raise ValueError("config is not an advection_diffusion config")
    c = config.profiles.get("c", advection_velocity_profile(config.x_max))
    eps = config.diffusion
    x = config.x()
    u0 = _initial_1d(config, x, lambda x: np.exp(-x**2 / 2))
    k = _wavenumbers(config.n, config.length)
    ik = _odd_multiplier(k, config.n)
    cx = c(x)

    def explicit(v, t):
        u = np.fft.irfft(v, n=config.n)
        return ik * np.fft.rfft(cx * u)

    rate = np.max(np.abs(k)) * np.max(np.abs(cx))
    return _ifrk4_1d(config, u0, -eps * k**2, explicit, rate)


def _etdrk4_coefficients(L, h, contour_points=32):
    # contour-integral evaluation of the phi functions avoids cancellation near 0
    r = np.exp(1j * np.pi * (np.arange(1, contour_points + 1) - 0.5) / contour_points)
    LR = h * L[:, None] + r[None, :]
    Q = h * np.real(np.mean((np.exp(LR / 2) - 1) / LR, axis=1))
    f1 = h * np.real(np.mean((-4 - LR + np.exp(LR) * (4 - 3 * LR + LR**2)) / LR**3, axis=1))
    f2 = h * np.real(np.mean((2 + LR + np.exp(LR) * (-2 + LR)) / LR**3, axis=1))
    f3 = h * np.real(np.mean((-4 - 3 * LR - LR**2 + np.exp(LR) * (4 - LR)) / LR**3, axis=1))
    return np.exp(h * L / 2), np.exp(h * L), Q, f1, f2, f3


def solve_ks(config: Optional[SimConfig] = None) -> Field1D:
    """Kuramoto-Sivashinsky with variable coefficients,
    ``u_t = a(x) u u_x + b(x) u_xx + c(x) u_xxxx``.

    ETDRK4 with the spatial means of ``b`` and ``c`` as the exponential
    part; the variable-coefficient remainder and the nonlinearity are
    explicit. The default initial condition is
    ``cos(pi x / 20) * (1 + sin(pi x / 20))``.
    """
    config = config or default_config("ks")
    if config.model != "ks":
        raise ValueError("config is not a ks config")
    prof = ks_profiles(config.x_max)
    prof.update(config.profiles)
    x = config.x()
    ax, bx, cx = prof["a"](x), prof["b"](x), prof["c"](x)
    b_bar, c_bar = float(np.mean(bx)), float(np.mean(cx))
    u0 = _initial_1d(config, x, lambda x: np.cos(np.pi * x / 20) * (1 + np.sin(np.pi * x / 20)))
    n = config.n
    k = _wavenumbers(n, config.length)
    ik = _odd_multiplier(k, n)
    L = -b_bar * k**2 + c_bar * k**4
    db, dc = bx - b_bar, cx - c_bar

    def explicit(v):
        u = np.fft.irfft(v, n=n)
        ux = np.fft.irfft(ik * v, n=n)
        uxx = np.fft.irfft(-(k**2) * v, n=n)
        uxxxx = np.fft.irfft(k**4 * v, n=n)
        return np.fft.rfft(ax * u * ux + db * uxx + dc * uxxxx)

    t = config.t()
    dt_out = t[1] - t[0]
    # the exponential handles the stiff part; h is set by accuracy of the
    # nonlinear term, about 0.05 time units
    nsub = config.substeps or max(1, math.ceil(dt_out / (0.1 * config.stability)))
    h = dt_out / nsub
    E2, E, Q, f1, f2, f3 = _etdrk4_coefficients(L, h)
    v = np.fft.rfft(u0)
    scale = max(np.max(np.abs(u0)), 1.0)
    snaps = [u0.copy()]
    for j in range(1, t.size):
        for _ in range(nsub):
            Nv = explicit(v)
            a_ = E2 * v + Q * Nv
            Na = explicit(a_)
            b_ = E2 * v + Q * Na
            Nb = explicit(b_)
            c_ = E2 * a_ + Q * (2 * Nb - Nv)
            Nc = explicit(c_)
            v = E * v + Nv * f1 + 2 * (Na + Nb) * f2 + Nc * f3
        u = np.fft.irfft(v, n=n)
        _check_blowup(u, scale, t[j])
        snaps.append(u)
    return _finish_1d(config, x, t, snaps)


# -- 2D vorticity ------------------------------------------------------------


def _gaussian_vortices(config, X, Y):
    rng = np.random.Generator(np.random.PCG64(config.seed))
    Lx, Ly = config.x_max - config.x_min, config.y_max - config.y_min
    omega = np.zeros_like(X)
    signs = np.where(np.arange(config.n_vortices) % 2 == 0, 1.0, -1.0)
    for s in signs:
        cx = config.x_min + Lx * rng.random()
        cy = config.y_min + Ly * rng.random()
        strength = s * config.vortex_strength * (0.75 + 0.5 * rng.random())
        # periodic images so the initial field is smooth across the boundary
        for px in (-Lx, 0.0, Lx):
            for py in (-Ly, 0.0, Ly):
                r2 = (X - cx - px) ** 2 + (Y - cy - py) ** 2
                omega += strength * np.exp(-r2 / config.vortex_radius**2)
    return omega - omega.mean()


class _Spectral2D:
    def __init__(self, nx, ny, Lx, Ly):
        self.nx, self.ny = nx, ny
        kx = 2 * np.pi * np.fft.fftfreq(nx, d=Lx / nx)
        ky = 2 * np.pi * np.fft.rfftfreq(ny, d=Ly / ny)
        self.kx, self.ky = np.meshgrid(kx, ky, indexing="ij")
        self.k2 = self.kx**2 + self.ky**2
        self.inv_k2 = np.zeros_like(self.k2)
        self.inv_k2[self.k2 > 0] = 1.0 / self.k2[self.k2 > 0]
        # 2/3-rule dealiasing
        self.dealias = (np.abs(self.kx) < (2 / 3) * np.max(np.abs(kx))) & \
                       (np.abs(self.ky) < (2 / 3) * np.max(np.abs(ky)))

    def fft(self, a):
        return np.fft.rfft2(a)

    def ifft(self, a):
        return np.fft.irfft2(a, s=(self.nx, self.ny))

    def velocity(self, w_hat):
        psi_hat = w_hat * self.inv_k2  # -lap psi = omega
        u = self.ifft(1j * self.ky * psi_hat)
        v = self.ifft(-1j * self.kx * psi_hat)
        return u, v

    def advection(self, w_hat):
        w_hat = w_hat * self.dealias
        u, v = self.velocity(w_hat)
        wx = self.ifft(1j * self.kx * w_hat)
        wy = self.ifft(1j * self.ky * w_hat)
        return -self.fft(u * wx + v * wy) * self.dealias


def enstrophy(omega, dx, dy):
    """Integral of omega**2 over the domain, per snapshot along the last axis."""
    return np.sum(omega**2, axis=(0, 1)) * dx * dy


def solve_ns2d(config: Optional[SimConfig] = None) -> Field2D:
    """Vorticity form of 2D incompressible Navier-Stokes on a doubly
    periodic box, ``omega_t + u . grad(omega) = lap(omega) / nu(t)``.

    The profile ``nu`` may be ``inf`` for inviscid runs. The default
    initial condition superposes ``n_vortices`` Gaussian vortices of
    alternating sign at seeded random positions.
    """
    config = config or default_config("ns2d")
    if config.model != "ns2d":
        raise ValueError("config is not an ns2d config")
    nu = config.profiles.get("nu", reynolds_profile())
    nx, ny = config.n, config.n_y
    Lx, Ly = config.x_max - config.x_min, config.y_max - config.y_min
    x = config.x_min + Lx / nx * np.arange(nx)
    y = config.y_min + Ly / ny * np.arange(ny)
    X, Y = np.meshgrid(x, y, indexing="ij")
    ic = config.initial
    if ic is None:
        w0 = _gaussian_vortices(config, X, Y)
    elif callable(ic):
        w0 = np.asarray(ic(X, Y), dtype=float)
    else:
        w0 = np.asarray(ic, dtype=float)
    if w0.shape != (nx, ny):
        raise ValueError(f"initial vorticity has shape {w0.shape}, grid is {(nx, ny)}")

    sp = _Spectral2D(nx, ny, Lx, Ly)
    t = config.t()
    dt_out = t[1] - t[0]
    w_hat = sp.fft(w0) * sp.dealias
    u0, v0 = sp.velocity(w_hat)
    kmax = max(np.max(np.abs(sp.kx)), np.max(np.abs(sp.ky)))
    nsub = _substeps(config, dt_out, kmax * (np.max(np.abs(u0)) + np.max(np.abs(v0))))
    h = dt_out / nsub
    scale = max(np.max(np.abs(w0)), 1e-300)

    m = t.size
    omega = np.empty((nx, ny, m))
    uu = np.empty((nx, ny, m))
    vv = np.empty((nx, ny, m))
    omega[..., 0] = sp.ifft(w_hat)
    uu[..., 0], vv[..., 0] = u0, v0
    for j in range(1, m):
        t_mid = 0.5 * (t[j - 1] + t[j])
        inv_nu = 1.0 / float(nu(t_mid))
        lin = -inv_nu * sp.k2
        e_half = np.exp(lin * h / 2)
        e_full = e_half**2
        for _ in range(nsub):
            k1 = sp.advection(w_hat)
            k2 = sp.advection(e_half * (w_hat + h / 2 * k1))
            k3 = sp.advection(e_half * w_hat + h / 2 * k2)
            k4 = sp.advection(e_full * w_hat + h * e_half * k3)
            w_hat = e_full * w_hat + h / 6 * (e_full * k1 + 2 * e_half * (k2 + k3) + k4)
        w = sp.ifft(w_hat)
        _check_blowup(w, scale, t[j])
        omega[..., j] = w
        uu[..., j], vv[..., j] = sp.velocity(w_hat)
    grid = Grid2D(x, y, t, Lx / nx, Ly / ny, config.t_end / (m - 1), periodic=True)
    return Field2D(grid, omega, uu, vv)


_SOLVERS = {
    "burgers": solve_burgers,
    "advection_diffusion": solve_advection_diffusion,
    "ks": solve_ks,
    "ns2d": solve_ns2d,
}


def solve(config: SimConfig):
    """Dispatch on ``config.model``."""
    return _SOLVERS[config.model](config)
