"""Lattice field containers and the stencil machinery shared by all solvers.

Two storage schemes cover everything the solvers need:

* ``TorusField`` - a function on Z^n that is p-periodic, stored on the
  fundamental cell ``{0..p_1-1} x ... x {0..p_n-1}``.  All site reads resolve
  modulo the periods, so shifts are ``np.roll``.
* ``StripField`` - a function on Z x (Z^{n-1}/qZ^{n-1}) stored on the layers
  ``i_1 in [-W, W]`` with constant tails pinned on both ends.  Reads outside
  the window resolve to the tail constants.

Values arrays are treated as immutable; every constructor copies and freezes
its input so fields can be shared freely across threads.

The low-level helpers at the bottom gather stencil configurations, scatter
per-site gradients into equilibrium residuals, and apply Hessians, all
vectorized over arbitrary leading batch axes (the lattice axes are always the
trailing ones).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class FkSaddleError(Exception):
    """Base class for all library errors."""


class PeriodError(FkSaddleError):
    pass


class WindowError(FkSaddleError):
    pass


def validate_periods(p, max_cells: int = 65536) -> tuple:
    p = tuple(int(x) for x in p)
    if len(p) == 0:
        raise PeriodError("periods must have at least one component")
    if any(x < 1 for x in p):
        raise PeriodError("periods must be >= 1, got %r" % (p,))
    if math.prod(p) > max_cells:
        raise PeriodError("torus cell count %d exceeds the configured maximum %d"
                          % (math.prod(p), max_cells))
    return p


def _frozen(values) -> np.ndarray:
    out = np.array(values, dtype=float, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class TorusField:
    """A p-periodic real lattice function, stored on the fundamental torus."""

    periods: tuple
    values: np.ndarray

    def __post_init__(self):
        p = validate_periods(self.periods)
        object.__setattr__(self, "periods", p)
        v = _frozen(np.broadcast_to(np.asarray(self.values, dtype=float), p))
        object.__setattr__(self, "values", v)

    @staticmethod
    def constant(periods, c: float) -> "TorusField":
        periods = validate_periods(periods)
        return TorusField(periods, np.full(periods, float(c)))

    @property
    def n(self) -> int:
        return len(self.periods)

    def site(self, i) -> float:
        idx = tuple(int(i[k]) % self.periods[k] for k in range(self.n))
        return float(self.values[idx])

    def with_values(self, values) -> "TorusField":
        return TorusField(self.periods, values)

    def extend(self, periods) -> "TorusField":
        """Re-store on a larger torus whose periods are multiples of ours."""
        periods = validate_periods(periods)
        if len(periods) != self.n:
            raise PeriodError("dimension mismatch: %r vs %r" % (periods, self.periods))
        reps = []
        for big, small in zip(periods, self.periods):
            if big % small != 0:
                raise PeriodError("periods %r do not extend %r" % (periods, self.periods))
            reps.append(big // small)
        return TorusField(periods, np.tile(self.values, reps))

    def shift(self, axis: int, offset: int) -> "TorusField":
        """The translate tau^axis_{-offset}: (result)(i) = self(i + offset e_axis)."""
        if not 1 <= axis <= self.n:
            raise PeriodError("axis %d out of range 1..%d" % (axis, self.n))
        return TorusField(self.periods, np.roll(self.values, -offset, axis=axis - 1))

    def normalize_lift(self) -> tuple:
        """Subtract the integer that puts the value at site 0 into [0, 1)."""
        k = math.floor(self.values.flat[0])
        return self - k, k

    # fields behave as immutable values; arithmetic returns new fields
    def _coerce(self, other) -> np.ndarray:
        if isinstance(other, TorusField):
            if other.periods != self.periods:
                raise PeriodError("period mismatch: %r vs %r" % (self.periods, other.periods))
            return other.values
        return np.asarray(other, dtype=float)

    def __add__(self, other):
        return TorusField(self.periods, self.values + self._coerce(other))

    __radd__ = __add__

    def __sub__(self, other):
        return TorusField(self.periods, self.values - self._coerce(other))

    def __rsub__(self, other):
        return TorusField(self.periods, self._coerce(other) - self.values)

    def __mul__(self, c):
        return TorusField(self.periods, self.values * float(c))

    __rmul__ = __mul__

    def __neg__(self):
        return TorusField(self.periods, -self.values)


@dataclass(frozen=True, eq=False)
class StripField:
    """A function on Z x (Z^{n-1}/qZ^{n-1}) with constant tails.

    ``values`` has shape ``(2 W + 1, *q)``; layer index 0 corresponds to
    lattice coordinate ``i_1 = -W``.  Reads left of the window give ``left``,
    reads right of it give ``right``.
    """

    half_width: int
    q: tuple
    values: np.ndarray
    left: float
    right: float

    def __post_init__(self):
        q = validate_periods(self.q) if len(self.q) else ()
        object.__setattr__(self, "q", q)
        W = int(self.half_width)
        if W < 1:
            raise WindowError("window half-width must be >= 1")
        object.__setattr__(self, "half_width", W)
        shape = (2 * W + 1,) + q
        v = np.asarray(self.values, dtype=float)
        if v.shape != shape:
            raise WindowError("values shape %r does not match window %r" % (v.shape, shape))
        object.__setattr__(self, "values", _frozen(v))
        object.__setattr__(self, "left", float(self.left))
        object.__setattr__(self, "right", float(self.right))

    @property
    def n(self) -> int:
        return 1 + len(self.q)

    def layer_coords(self) -> np.ndarray:
        W = self.half_width
        return np.arange(-W, W + 1)

    def site(self, i) -> float:
        i1 = int(i[0])
        W = self.half_width
        if i1 < -W:
            return self.left
        if i1 > W:
            return self.right
        idx = (i1 + W,) + tuple(int(i[1 + k]) % self.q[k] for k in range(len(self.q)))
        return float(self.values[idx])

    def with_values(self, values) -> "StripField":
        return StripField(self.half_width, self.q, values, self.left, self.right)

    def padded(self, margin: int) -> np.ndarray:
        return pad_layers(self.values, margin, self.left, self.right, self.n)

    def embed(self, half_width: int) -> "StripField":
        """Re-store on a wider window, filling the new layers with the tails."""
        if half_width < self.half_width:
            raise WindowError("cannot shrink a strip window")
        extra = half_width - self.half_width
        return StripField(half_width, self.q, self.padded(extra), self.left, self.right)

    def shift1(self, offset: int) -> "StripField":
        """Axis-1 translate: (result)(i) = self(i + offset e_1), same window."""
        W = self.half_width
        ext = self.padded(abs(offset))
        lo = abs(offset) + offset
        return StripField(W, self.q, ext[lo:lo + 2 * W + 1], self.left, self.right)

    def _coerce(self, other):
        if isinstance(other, StripField):
            if other.q != self.q or other.half_width != self.half_width:
                raise WindowError("strip geometry mismatch")
            return other.values, other.left, other.right
        c = float(other)
        return c, c, c

    def __sub__(self, other):
        ov, ol, orr = self._coerce(other)
        return StripField(self.half_width, self.q, self.values - ov,
                          self.left - ol, self.right - orr)

    def __add__(self, other):
        ov, ol, orr = self._coerce(other)
        return StripField(self.half_width, self.q, self.values + ov,
                          self.left + ol, self.right + orr)

    def __mul__(self, c):
        c = float(c)
        return StripField(self.half_width, self.q, self.values * c,
                          self.left * c, self.right * c)

    __rmul__ = __mul__


# ---------------------------------------------------------------------------
# stencil machinery (operates on raw arrays, lattice axes trailing)
# ---------------------------------------------------------------------------

def torus_configs(values: np.ndarray, ball, n: int) -> np.ndarray:
    """Stack the stencil neighborhoods of every torus site.

    ``values`` has shape ``(..., *p)``; the result has shape
    ``(..., *p, nball)`` with ``out[..., j, b] = values[(j + ball[b]) mod p]``.
    """
    axes = tuple(range(values.ndim - n, values.ndim))
    cols = [np.roll(values, tuple(-o for o in b), axis=axes) for b in ball]
    return np.stack(cols, axis=-1)


def torus_scatter(contrib: np.ndarray, ball, n: int) -> np.ndarray:
    """Scatter per-(site, ball-offset) contributions into a per-site field.

    ``contrib`` has shape ``(..., *p, nball)``; returns
    ``out[i] = sum_b contrib[i - ball[b], b]`` which is exactly the
    equilibrium residual when ``contrib`` holds the local-energy gradients.
    """
    axes = tuple(range(contrib.ndim - 1 - n, contrib.ndim - 1))
    out = np.zeros(contrib.shape[:-1])
    for idx, b in enumerate(ball):
        out += np.roll(contrib[..., idx], tuple(b), axis=axes)
    return out


def torus_hess_mv(hess: np.ndarray, vec: np.ndarray, ball, n: int) -> np.ndarray:
    """Apply the energy Hessian to ``vec`` given the per-site local Hessians.

    ``hess`` has shape ``(..., *p, nball, nball)`` (stacked local Hessians at
    every site), ``vec`` shape ``(..., *p)``.
    """
    axes = tuple(range(vec.ndim - n, vec.ndim))
    out = np.zeros_like(vec)
    shifted = [np.roll(vec, tuple(-o for o in b), axis=axes) for b in ball]
    for ib, b in enumerate(ball):
        acc = np.zeros_like(vec)
        for ib2 in range(len(ball)):
            acc += hess[..., ib, ib2] * shifted[ib2]
        out += np.roll(acc, tuple(b), axis=axes)
    return out


def pad_layers(values: np.ndarray, margin: int, left: float, right: float, n: int) -> np.ndarray:
    """Extend the layer axis (first lattice axis) by constant tails."""
    if margin == 0:
        return values
    layer_ax = values.ndim - n
    widths = [(0, 0)] * values.ndim
    widths[layer_ax] = (margin, margin)
    cvals = [(0.0, 0.0)] * values.ndim
    cvals[layer_ax] = (left, right)
    return np.pad(values, widths, mode="constant", constant_values=cvals)


def strip_configs(padded: np.ndarray, ball, n: int, r: int) -> np.ndarray:
    """Stencil neighborhoods on a strip, from a layer-padded array.

    ``padded`` has at least ``r`` extra layers on each side; the result covers
    the layers ``padded[r:-r]`` and has shape ``(..., L, *q, nball)``.
    """
    layer_ax = padded.ndim - n
    L = padded.shape[layer_ax] - 2 * r
    taxes = tuple(range(layer_ax + 1, padded.ndim))
    cols = []
    for b in ball:
        sl = [slice(None)] * padded.ndim
        sl[layer_ax] = slice(r + b[0], r + b[0] + L)
        a = padded[tuple(sl)]
        t = tuple(-o for o in b[1:])
        if any(t):
            a = np.roll(a, t, axis=taxes)
        cols.append(a)
    return np.stack(cols, axis=-1)


def strip_scatter(contrib: np.ndarray, ball, n: int, r: int) -> np.ndarray:
    """Inverse stencil scatter on a strip.

    ``contrib`` has shape ``(..., L + 2r, *q, nball)`` covering the layers of
    the target window extended by ``r`` on both sides; the result has shape
    ``(..., L, *q)`` with ``out[j] = sum_b contrib[j - ball[b], b]``.
    """
    layer_ax = contrib.ndim - 1 - n
    L = contrib.shape[layer_ax] - 2 * r
    taxes = tuple(range(layer_ax + 1, contrib.ndim - 1))
    out = None
    for idx, b in enumerate(ball):
        sl = [slice(None)] * (contrib.ndim - 1)
        sl[layer_ax] = slice(r - b[0], r - b[0] + L)
        a = contrib[..., idx][tuple(sl)]
        t = tuple(b[1:])
        if any(t):
            a = np.roll(a, t, axis=taxes)
        out = a.copy() if out is None else out + a
    return out
