"""Analytic moving sources used in the reconstruction experiments.

Three built-in families: a pair of moving Gaussians, four constant box
sources travelling along the cube diagonals, and eight Gaussians starting at
the corners.  All are evaluable at arbitrary (x, t); evaluation is vectorized
over points.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .mesh import HALF_WIDTH

L = S = H = HALF_WIDTH


def _gaussian_pair_centers(t):
    c1 = (L * np.sin(2 * np.pi * t), S * np.cos(2 * np.pi * t),
          H * np.cos(4 * np.pi * t))
    c2 = (L - 2 * L * np.abs(np.cos(4 * t)),
          -S + 2 * S * np.abs(np.cos(4 * t)),
          -H + 2 * H * t ** 2)
    return [c1, c2]


def eval_gaussian_pair(x, t, width: float = 2.0):
    x = np.atleast_2d(x)
    out = np.zeros(x.shape[0])
    for cx, cy, cz in _gaussian_pair_centers(t):
        r2 = (x[:, 0] - cx) ** 2 + (x[:, 1] - cy) ** 2 + (x[:, 2] - cz) ** 2
        out += np.exp(-r2 / width ** 2)
    return out


_CONSTANT_FOUR_AMPL = (2.0, 1.0, 1.0, 2.0)


def _constant_four_centers(t):
    return [
        (-L + 2 * L * t, -S + 2 * S * t, H - 2 * H * t),
        (L - 2 * L * t, S - 2 * S * t, -H + 2 * H * t),
        (L - 2 * L * t, -S + 2 * S * t, -H + 2 * H * t),
        (-L + 2 * L * t, S - 2 * S * t, H - 2 * H * t),
    ]


def eval_constant_four(x, t, half_width: float = 0.4):
    x = np.atleast_2d(x)
    out = np.zeros(x.shape[0])
    for a, (cx, cy, cz) in zip(_CONSTANT_FOUR_AMPL, _constant_four_centers(t)):
        inside = ((np.abs(x[:, 0] - cx) < half_width)
                  & (np.abs(x[:, 1] - cy) < half_width)
                  & (np.abs(x[:, 2] - cz) < half_width))
        out += a * inside
    return out


_EIGHT_AMPL = (4.0, 4.0, 4.0, 4.0, 6.0, 6.0, 6.0, 6.0)


def _gaussian_eight_centers(t):
    cp = np.cos(np.pi * t) ** 2
    sp = np.sin(np.pi * t) ** 2
    c2p = np.cos(2 * np.pi * t) ** 2
    ch = np.cos(np.pi / 2 * t)
    sh = np.sin(np.pi / 2 * t)
    return [
        (-L + 2 * L * (1 - t), -S + 2 * S * (1 - t), -H + 2 * H * (1 - t)),
        (-L + 2 * L * t, -S + 2 * S * t, -H + 2 * H * t),
        (-L + 2 * L * cp * (1 - t), -S + 2 * S * sp * t, -H + 2 * H * cp * (1 - t)),
        (-L + 2 * L * cp * (1 - t), -S + 2 * S * cp * (1 - t), -H + 2 * H * sp * t),
        (-L + 2 * L * c2p * ch, -S + 2 * S * sp * sh, -H + 2 * H * sp * sh),
        (-L + 2 * L * sp * sh, -S + 2 * S * c2p * ch, -H + 2 * H * sp * sh),
        (-L + 2 * L * sp * sh, -S + 2 * S * sp * sh, -H + 2 * H * c2p * ch),
        (-L + 2 * L * sp * sh, -S + 2 * S * c2p * ch, -H + 2 * H * c2p * ch),
    ]


def eval_gaussian_eight(x, t):
    x = np.atleast_2d(x)
    out = np.zeros(x.shape[0])
    for a, (cx, cy, cz) in zip(_EIGHT_AMPL, _gaussian_eight_centers(t)):
        r2 = (x[:, 0] - cx) ** 2 + (x[:, 1] - cy) ** 2 + (x[:, 2] - cz) ** 2
        out += a * np.exp(-r2)
    return out


@dataclass(frozen=True)
class SourceSpec:
    """A named analytic source f(x, t)."""

    kind: str  # gaussian_pair | constant_four | gaussian_eight | custom
    func: Callable | None = None
    width: float = 2.0
    box_half_width: float = 0.4

    def __call__(self, x, t):
        if self.kind == "gaussian_pair":
            return eval_gaussian_pair(x, t, self.width)
        if self.kind == "constant_four":
            return eval_constant_four(x, t, self.box_half_width)
        if self.kind == "gaussian_eight":
            return eval_gaussian_eight(x, t)
        if self.kind == "custom":
            if self.func is None:
                raise ValueError("custom source needs a callable")
            return np.asarray(self.func(np.atleast_2d(x), t), dtype=float)
        raise ValueError(f"unknown source kind {self.kind!r}")


def eval_source(spec: SourceSpec, x, t):
    """Evaluate the source at points x (|.| x 3) and time t."""
    return spec(x, t)


def make_source(kind: str, func: Callable | None = None) -> SourceSpec:
    return SourceSpec(kind=kind, func=func)
