"""Numerical derivatives of uniformly sampled data."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import savgol_filter

from .fields import Field1D, Field2D

__all__ = ["DiffMethod", "derivative", "differentiate_field", "SPECTRAL", "CENTRAL_FD",
           "poly_smooth"]

KINDS = ("spectral", "central_fd", "poly_smooth")


@dataclass(frozen=True)
class DiffMethod:
    """How to differentiate along one axis.

    ``degree`` and ``half_width`` only matter for ``poly_smooth``: a
    least-squares polynomial of ``degree`` is fitted on each window of
    ``2 * half_width + 1`` samples and differentiated at its center.
    """

    kind: str = "spectral"
    degree: int = 4
    half_width: int = 5

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown differentiation method {self.kind!r}")
        if self.kind == "poly_smooth":
            if self.half_width < 1:
                raise ValueError("half_width must be at least 1")
            if not 0 <= self.degree < self.window:
                raise ValueError("degree must be smaller than the window size")

    @property
    def window(self):
        return 2 * self.half_width + 1

    def edge_samples(self):
        """Samples per edge whose estimate is not a centered-window one."""
        return {"spectral": 0, "central_fd": 1, "poly_smooth": self.half_width}[self.kind]


SPECTRAL = DiffMethod("spectral")
CENTRAL_FD = DiffMethod("central_fd")


def poly_smooth(degree=4, half_width=5):
    return DiffMethod("poly_smooth", degree, half_width)


def _spectral(values, h, order, axis):
    n = values.shape[axis]
    k = 2 * np.pi * np.fft.rfftfreq(n, d=h)
    mult = (1j * k) ** order
    if order % 2 == 1 and n % 2 == 0:
        # the Nyquist mode has no real-valued odd derivative
        mult[-1] = 0.0
    shape = [1] * values.ndim
    shape[axis] = mult.size
    return np.fft.irfft(np.fft.rfft(values, axis=axis) * mult.reshape(shape), n=n, axis=axis)


def _first_difference(values, h, axis):
    # 2nd-order central interior, 2nd-order one-sided at both ends
    return np.gradient(values, h, axis=axis, edge_order=2)


def _central_fd(values, h, order, axis):
    out = values
    for _ in range(order // 2):
        out = _second_difference(out, h, axis)
    if order % 2:
        out = _first_difference(out, h, axis)
    return out


def _second_difference(values, h, axis):
    a = np.moveaxis(values, axis, 0)
    out = np.empty_like(a, dtype=float)
    out[1:-1] = (a[2:] - 2 * a[1:-1] + a[:-2]) / h**2
    # one-sided second-order stencil (2, -5, 4, -1)
    out[0] = (2 * a[0] - 5 * a[1] + 4 * a[2] - a[3]) / h**2
    out[-1] = (2 * a[-1] - 5 * a[-2] + 4 * a[-3] - a[-4]) / h**2
    return np.moveaxis(out, 0, axis)


def derivative(values, h, order, method=SPECTRAL, axis=-1, periodic=True):
    """Estimate the ``order``-th derivative of samples spaced by ``h``.

    Works along ``axis`` of an array of any rank. ``spectral`` treats the
    samples as exactly one period and requires ``periodic``. Estimates are
    returned at every sample; dropping boundary samples is up to the
    caller (see :meth:`DiffMethod.edge_samples`).
    """
    values = np.asarray(values, dtype=float)
    if not 0 <= order <= 4:
        raise ValueError(f"derivative order must be in 0..4, got {order}")
    if order == 0:
        return values.copy()
    n = values.shape[axis]
    if method.kind == "spectral":
        if not periodic:
            raise ValueError("spectral differentiation needs a periodic axis")
        return _spectral(values, h, order, axis)
    if method.kind == "central_fd":
        if n < 4:
            raise ValueError("central differences need at least 4 samples")
        return _central_fd(values, h, order, axis)
    if method.window > n:
        raise ValueError(f"window of {method.window} samples exceeds series length {n}")
    if order > method.degree:
        return np.zeros_like(values)
    return savgol_filter(values, method.window, method.degree, deriv=order,
                         delta=h, axis=axis, mode="interp")


def differentiate_field(field, axis, order, method=SPECTRAL):
    """Differentiate a field along ``"x"``, ``"y"``, ``"xy"`` or ``"t"``.

    For a :class:`Field2D` the vorticity is differentiated; use
    :func:`derivative` directly for the velocity components. The mixed
    ``"xy"`` derivative applies ``order`` x-derivatives followed by
    ``order`` y-derivatives.
    """
    g = field.grid
    if isinstance(field, Field1D):
        data = field.u
        spec = {"x": (0, g.dx, g.periodic), "t": (1, g.dt, False)}
    elif isinstance(field, Field2D):
        data = field.omega
        spec = {"x": (0, g.dx, g.periodic), "y": (1, g.dy, g.periodic), "t": (2, g.dt, False)}
    else:
        raise TypeError(f"cannot differentiate {type(field).__name__}")
    if axis == "xy":
        if not isinstance(field, Field2D):
            raise ValueError("mixed xy derivative needs a 2D field")
        ax, h, per = spec["x"]
        once = derivative(data, h, order, method, axis=ax, periodic=per)
        ax, h, per = spec["y"]
        return derivative(once, h, order, method, axis=ax, periodic=per)
    if axis not in spec:
        raise ValueError(f"unknown axis {axis!r}")
    ax, h, per = spec[axis]
    return derivative(data, h, order, method, axis=ax, periodic=per)
