"""Closed-form Lipschitz conductivities.

Every phantom is ``sigma(x) = base + g(|x - center|)`` with an analytic
radial profile ``g`` and its derivative, so ``grad sigma`` is exact.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import optimize


class PhantomError(ValueError):
    pass


DEFAULTS = {
    "constant": {"value": 1.0},
    "radial_gaussian": {"amplitude": 0.3, "width": 0.5, "taper_start": 0.75, "taper_end": 0.95},
    "radial_shell": {"jump": 1.0, "radius": 0.5, "ramp": 0.05},
    "offset_bump": {"amplitude": 0.3, "width": 0.4, "center": (0.3, 0.0, 0.0)},
}


def smooth_step(t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """C-infinity step (0 for t <= 0, 1 for t >= 1) and its derivative."""
    t = np.clip(np.asarray(t, float), 0.0, 1.0)
    inner = (t > 0) & (t < 1)
    ts = np.where(inner, t, 0.5)
    a = np.where(inner, np.exp(-1.0 / ts), 0.0)
    b = np.where(inner, np.exp(-1.0 / (1.0 - ts)), 0.0)
    s = np.where(inner, a / np.where(inner, a + b, 1.0), (t >= 1).astype(float))
    ds = np.where(inner, a * b * (1 / ts ** 2 + 1 / (1 - ts) ** 2) / np.where(inner, (a + b) ** 2, 1.0), 0.0)
    return s, ds


@dataclass(frozen=True, eq=False)
class Phantom:
    """A named conductivity with its parameters."""

    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in DEFAULTS:
            raise PhantomError(f"unknown phantom {self.kind!r}; choose from {sorted(DEFAULTS)}")
        unknown = set(self.params) - set(DEFAULTS[self.kind])
        if unknown:
            raise PhantomError(f"unknown parameters for {self.kind}: {sorted(unknown)}")
        merged = {**DEFAULTS[self.kind], **self.params}
        object.__setattr__(self, "params", merged)
        if self.kind == "radial_gaussian" and not 0 < merged["taper_start"] < merged["taper_end"]:
            raise PhantomError("need 0 < taper_start < taper_end")
        if self.kind in ("radial_gaussian", "offset_bump") and not merged["width"] > 0:
            raise PhantomError("width must be positive")
        if self.kind == "radial_shell" and not (merged["ramp"] > 0 and merged["radius"] > merged["ramp"] / 2):
            raise PhantomError("need ramp > 0 and radius > ramp/2")
        if not self.lower_bound > 0:
            raise PhantomError(f"sigma reaches {self.lower_bound:.4g}; conductivity must stay positive")

    @property
    def base(self) -> float:
        return float(self.params["value"]) if self.kind == "constant" else 1.0

    @property
    def center(self) -> np.ndarray:
        return np.asarray(self.params.get("center", (0.0, 0.0, 0.0)), float)

    @property
    def support_radius(self) -> float:
        """Distance from ``center`` beyond which the profile vanishes."""
        p = self.params
        return {"constant": 0.0, "radial_gaussian": p.get("taper_end", 0.0),
                "radial_shell": p.get("radius", 0.0) + p.get("ramp", 0.0) / 2,
                "offset_bump": p.get("width", 0.0)}[self.kind]

    def profile(self, d: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Radial profile ``g(d)`` and ``g'(d)``."""
        d = np.asarray(d, float)
        p = self.params
        if self.kind == "constant":
            return np.zeros_like(d), np.zeros_like(d)
        if self.kind == "radial_gaussian":
            a, w = p["amplitude"], p["width"]
            s, ds = smooth_step((d - p["taper_start"]) / (p["taper_end"] - p["taper_start"]))
            taper, dtaper = 1.0 - s, -ds / (p["taper_end"] - p["taper_start"])
            gauss = a * np.exp(-(d / w) ** 2)
            return gauss * taper, gauss * (-2 * d / w ** 2 * taper + dtaper)
        if self.kind == "radial_shell":
            j, r0, ramp = p["jump"], p["radius"], p["ramp"]
            t = (r0 + ramp / 2 - d) / ramp
            inside = (t > 0) & (t < 1)
            return j * np.clip(t, 0.0, 1.0), np.where(inside, -j / ramp, 0.0)
        a, w = p["amplitude"], p["width"]
        t = d / w
        inside = t < 1
        ts = np.where(inside, t, 0.0)
        g = np.where(inside, a * np.exp(1.0 - 1.0 / (1.0 - ts ** 2)), 0.0)
        dg = np.where(inside, g * (-2 * ts / (1 - ts ** 2) ** 2) / w, 0.0)
        return g, dg

    def _offsets(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        x = np.asarray(points, float) - self.center
        return x, np.linalg.norm(x, axis=-1)

    def sigma(self, points: np.ndarray) -> np.ndarray:
        _, d = self._offsets(points)
        return self.base + self.profile(d)[0]

    def grad_sigma(self, points: np.ndarray) -> np.ndarray:
        x, d = self._offsets(points)
        _, dg = self.profile(d)
        unit = np.divide(x, d[..., None], out=np.zeros_like(x), where=d[..., None] > 0)
        return dg[..., None] * unit

    def grad_log_sigma(self, points: np.ndarray) -> np.ndarray:
        return self.grad_sigma(points) / self.sigma(points)[..., None]

    def _extremum(self, fun, sign: float) -> float:
        top = max(self.support_radius, 1e-3) * 1.05
        d = np.linspace(0.0, top, 20001)
        vals = sign * fun(d)
        i = int(np.argmax(vals))
        lo, hi = d[max(i - 1, 0)], d[min(i + 1, len(d) - 1)]
        if hi > lo:
            res = optimize.minimize_scalar(lambda s: -sign * fun(np.array(s)), bounds=(lo, hi),
                                           method="bounded", options={"xatol": 1e-13})
            return float(max(vals[i], -res.fun))
        return float(vals[i])

    @property
    def lower_bound(self) -> float:
        """Minimum of ``sigma`` over space."""
        g_min = -self._extremum(lambda d: self.profile(d)[0], -1.0)
        return self.base + min(g_min, 0.0)

    @property
    def lipschitz_bound(self) -> float:
        """``sup |grad sigma|`` from the analytic profile derivative."""
        if self.kind == "radial_shell":
            return abs(self.params["jump"]) / self.params["ramp"]
        return self._extremum(lambda d: np.abs(self.profile(d)[1]), 1.0)


def make_phantom(name: str, **params) -> Phantom:
    return Phantom(name, params)
