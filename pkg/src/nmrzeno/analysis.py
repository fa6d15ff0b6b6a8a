"""Fits of Zeno curves to cos(n theta) and exp(-k n), and CSV output."""

from __future__ import annotations

import io
import math
import os
import warnings
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from scipy.optimize import least_squares


class FitError(ValueError):
    """The data do not determine the requested model."""


@dataclass(frozen=True)
class DecayFit:
    model: str
    amplitude: float
    rms_residual: float
    n_points: int
    theta: Optional[float] = None
    k: Optional[float] = None

    @property
    def value(self) -> float:
        return self.theta if self.model == "cosine" else self.k

    def rows(self) -> list:
        key = "theta" if self.model == "cosine" else "k"
        return [
            ("model", self.model),
            (key, self.value),
            ("amplitude", self.amplitude),
            ("rms_residual", self.rms_residual),
            ("n_points", self.n_points),
        ]


def _xy(curve):
    if hasattr(curve, "n_values"):
        n, y = curve.n_values, curve.signal
    else:
        n, y = curve
    n = np.asarray(n, dtype=float)
    y = np.asarray(y, dtype=float)
    if n.shape != y.shape or n.ndim != 1:
        raise ValueError("curve needs matching one-dimensional n and signal arrays")
    if not (np.all(np.isfinite(n)) and np.all(np.isfinite(y))):
        raise ValueError("curve contains non-finite values")
    return n, y


_TOL = dict(xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=2000)


def _best_amplitude(basis, y):
    norm = basis @ basis
    return (basis @ y) / norm if norm > 0 else 0.0


def fit_cosine(curve, oversample: int = 16) -> DecayFit:
    """Least-squares fit of A cos(n theta).

    A grid over theta in (0, pi/dn], dn being the smallest step in n, fixes the
    global minimum; a local least-squares refinement then polishes it. The
    amplitude is solved linearly at each grid point.
    """
    n, y = _xy(curve)
    if n.size < 4:
        raise FitError("cosine fit needs at least 4 points")
    if np.ptp(y) <= 1e-12 * max(1.0, np.max(np.abs(y))):
        raise FitError("signal is constant; no oscillation to fit")
    order = np.argsort(n)
    n, y = n[order], y[order]
    steps = np.diff(n)
    dn = steps[steps > 0].min()
    span = n[-1] - n[0]
    top = math.pi / dn
    count = int(math.ceil(oversample * top * span / math.pi)) + 1
    grid = np.linspace(top / count, top, count)
    basis = np.cos(np.outer(grid, n))
    amp = (basis @ y) / np.einsum("ij,ij->i", basis, basis)
    cost = np.sum((y - amp[:, None] * basis) ** 2, axis=1)
    best = int(np.argmin(cost))
    theta0, a0 = grid[best], amp[best]

    res = least_squares(
        lambda p: p[0] * np.cos(p[1] * n) - y, [a0, theta0], method="lm", x_scale=[1.0, theta0], **_TOL
    )
    a, theta = res.x
    if theta < 0:
        theta = -theta
    if theta * span < math.pi / 2:
        raise FitError("data span less than a quarter period of the fitted cosine")
    resid = a * np.cos(theta * n) - y
    return DecayFit("cosine", float(a), float(np.sqrt(np.mean(resid**2))), int(n.size), theta=float(theta))


def fit_exponential(curve) -> DecayFit:
    """Least-squares fit of A exp(-k n) over the positive points.

    A log-linear fit gives the starting point for a nonlinear refinement on the
    original scale. Non-positive points are dropped with a warning.
    """
    n, y = _xy(curve)
    keep = y > 0
    if not keep.all():
        warnings.warn(f"excluding {int((~keep).sum())} non-positive point(s) from exponential fit", stacklevel=2)
        n, y = n[keep], y[keep]
    if n.size < 3:
        raise FitError("exponential fit needs at least 3 positive points")
    slope, intercept = np.polyfit(n, np.log(y), 1)
    k0, a0 = max(0.0, -slope), math.exp(intercept)
    if np.ptp(y) == 0:
        k, a = 0.0, float(y[0])
    else:
        scale = max(k0, 1.0 / max(np.ptp(n), 1.0) * 1e-6)
        res = least_squares(
            lambda p: p[0] * np.exp(-p[1] * n) - y, [a0, k0], bounds=([-np.inf, 0.0], [np.inf, np.inf]),
            method="trf", x_scale=[abs(a0), scale], **_TOL,
        )
        a, k = (float(v) for v in res.x)
    resid = a * np.exp(-k * n) - y
    return DecayFit("exponential", a, float(np.sqrt(np.mean(resid**2))), int(n.size), k=k)


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(v).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def emit_csv(obj, destination: Union[None, str, os.PathLike, io.TextIOBase] = None) -> str:
    """Render a curve (``n,signal`` rows) or a fit (``key,value`` rows) as CSV text.

    Floats are written with ``repr`` so they round-trip exactly. ``destination``
    may be a path or an open text stream; the text is returned either way.
    """
    if isinstance(obj, DecayFit):
        lines = ["key,value"] + [f"{k},{_fmt(v)}" for k, v in obj.rows()]
    else:
        n, y = _xy(obj)
        ints = [int(v) if float(v).is_integer() else v for v in n]
        lines = ["n,signal"] + [f"{_fmt(a)},{_fmt(b)}" for a, b in zip(ints, y)]
    text = "\n".join(lines) + "\n"
    if destination is None:
        return text
    if hasattr(destination, "write"):
        destination.write(text)
    else:
        with open(destination, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    return text


def read_csv(text: str):
    """Inverse of :func:`emit_csv` for curves: returns (n, signal) arrays."""
    rows = [line.split(",") for line in text.strip().splitlines()]
    if not rows or rows[0] != ["n", "signal"]:
        raise ValueError("not a curve CSV")
    body = rows[1:]
    return np.array([float(r[0]) for r in body]), np.array([float(r[1]) for r in body])
