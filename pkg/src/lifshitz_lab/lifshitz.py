"""Double-logarithmic tail analysis of IDS data near the spectral bottom.

The tail transform maps ``N(E) - N(0+)`` to
``y = log|log(N(E) - N(0+))|`` against ``x = log E``; a Lifshitz tail
``exp(-c E^{-beta})`` becomes the straight line ``y = log c - beta x``.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateDesign, IncomparableRuns, NormalizationSuspect, TooFewPoints

EPS_FLOOR = 1e-8
UPPER_MASS = math.exp(-1.0)
MIN_TAIL_POINTS = 4


class NormalizationWarning(UserWarning):
    pass


def estimate_N0plus(ids, strict: bool = False, eps_floor: float = EPS_FLOOR) -> float:
    """Return N(0+) for a spectrally shifted model, which is 0.

    Spectral mass at energies below ``-eps_floor`` contradicts the shift;
    it is reported as a :class:`NormalizationWarning` (or raised as
    :class:`NormalizationSuspect` when ``strict``).
    """
    energies = np.asarray(ids.energies)
    mean = np.asarray(ids.mean)
    below = energies < -eps_floor
    suspicious = bool(np.any(mean[below] > 0)) or (mean.size > 0 and mean[0] < -eps_floor)
    if suspicious:
        msg = (f"spectral mass observed below E = {-eps_floor:g}; the model does not look shifted "
               "so that the bottom of the spectrum is 0")
        if strict:
            raise NormalizationSuspect(msg)
        warnings.warn(msg, NormalizationWarning, stacklevel=2)
    return 0.0


@dataclass
class TailPoints:
    energies: np.ndarray
    x: np.ndarray
    y: np.ndarray
    window: tuple
    in_window: int
    dropped: dict

    @property
    def used(self) -> int:
        return int(self.x.size)


def tail_points(ids, N0plus: float, window, values=None) -> TailPoints:
    """Transform the grid points inside ``window`` to (log E, log|log(N - N0+)|).

    ``ids`` is an IdsEstimate (or anything with ``energies`` and ``mean``);
    alternatively pass the energies as ``ids`` and the IDS as ``values``.
    Points with no mass above N0+ are dropped as ``empty-tail``, points
    with mass >= 1/e as ``outside-asymptotic-regime``.
    """
    if values is None:
        energies = np.asarray(ids.energies, dtype=float)
        values = np.asarray(ids.mean, dtype=float)
    else:
        energies = np.asarray(ids, dtype=float)
        values = np.asarray(values, dtype=float)
    lo, hi = float(window[0]), float(window[1])
    if not 0 < lo < hi:
        raise ValueError(f"window must satisfy 0 < lo < hi, got {window}")
    sel = (energies >= lo) & (energies <= hi)
    e = energies[sel]
    excess = values[sel] - N0plus
    empty = excess <= 0
    high = excess >= UPPER_MASS
    keep = ~(empty | high)
    dropped = {"empty-tail": int(empty.sum()), "outside-asymptotic-regime": int(high.sum())}
    x = np.log(e[keep])
    y = np.log(np.abs(np.log(excess[keep])))
    pts = TailPoints(energies=e[keep], x=x, y=y, window=(lo, hi), in_window=int(sel.sum()), dropped=dropped)
    if pts.used < MIN_TAIL_POINTS:
        raise TooFewPoints(f"{pts.used} usable tail points in {pts.window} (dropped: {dropped})", dropped=dropped)
    return pts


@dataclass
class LifshitzFit:
    slope: float
    slope_stderr: float | None = None
    intercept: float = 0.0
    window: tuple = (None, None)
    x: np.ndarray = field(default_factory=lambda: np.zeros(0))
    y: np.ndarray = field(default_factory=lambda: np.zeros(0))
    energies: np.ndarray = field(default_factory=lambda: np.zeros(0))
    dropped: dict = field(default_factory=dict)
    residual_rms: float = 0.0
    max_residual: float = 0.0
    d: int | None = None

    @property
    def n_points(self) -> int:
        return int(np.size(self.x))

    def to_dict(self) -> dict:
        return {
            "kind": "LifshitzFit",
            "slope": self.slope,
            "slope_stderr": self.slope_stderr,
            "intercept": self.intercept,
            "window": list(self.window),
            "d": self.d,
            "theory": None if self.d is None else -self.d / 2,
            "n_points": self.n_points,
            "dropped": self.dropped,
            "residual_rms": self.residual_rms,
            "max_residual": self.max_residual,
            "points": {"E": np.asarray(self.energies).tolist(), "x": np.asarray(self.x).tolist(),
                       "y": np.asarray(self.y).tolist()},
        }

    def save_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1, sort_keys=True)
            fh.write("\n")

    def write_points_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["E", "log_E", "loglog_N"])
            for e, x, y in zip(self.energies, self.x, self.y):
                w.writerow([repr(float(e)), repr(float(x)), repr(float(y))])

    def summary(self) -> str:
        se = "n/a" if self.slope_stderr is None else f"{self.slope_stderr:.3f}"
        lines = [f"Lifshitz exponent estimate: {self.slope:.4f} +/- {se} from {self.n_points} points "
                 f"in E in [{self.window[0]}, {self.window[1]}]"]
        if self.d is not None:
            lines.append(f"theoretical value -d/2 = {-self.d / 2:g}")
        if self.dropped:
            lines.append("dropped: " + ", ".join(f"{k}={v}" for k, v in sorted(self.dropped.items())))
        lines.append(f"residual rms {self.residual_rms:.3e}")
        return "\n".join(lines)


def fit_exponent(points, d: int | None = None) -> LifshitzFit:
    """Ordinary least squares of y on x; accepts TailPoints or an (x, y) pair."""
    if isinstance(points, TailPoints):
        x, y, energies = points.x, points.y, points.energies
        window, dropped = points.window, points.dropped
    else:
        x, y = (np.asarray(a, dtype=float) for a in points)
        energies = np.exp(x)
        window, dropped = (float(energies.min()), float(energies.max())) if x.size else (None, None), {}
    n = x.size
    if n < 2 or np.ptp(x) == 0.0:
        raise DegenerateDesign("need at least two distinct log-energies")
    xm, ym = x.mean(), y.mean()
    sxx = float(np.sum((x - xm) ** 2))
    slope = float(np.sum((x - xm) * (y - ym)) / sxx)
    intercept = float(ym - slope * xm)
    resid = y - (intercept + slope * x)
    stderr = math.sqrt(float(resid @ resid) / (n - 2) / sxx) if n > 2 else None
    return LifshitzFit(
        slope=slope, slope_stderr=stderr, intercept=intercept, window=tuple(window), x=x, y=y,
        energies=energies, dropped=dict(dropped), residual_rms=float(np.sqrt(np.mean(resid**2))),
        max_residual=float(np.max(np.abs(resid))), d=d,
    )


def d_independence(fits, tolerance: float = 0.2, theory_tolerance: float | None = None) -> dict:
    """Compare exponents fitted at different fiber dimensions D.

    ``fits`` is a list of ``(D, LifshitzFit)``.  The verdict requires every
    pairwise difference to be within ``tolerance`` and, when
    ``theory_tolerance`` is given, every slope within it of -d/2.
    """
    if len(fits) < 2:
        raise IncomparableRuns("need at least two fits")
    ds = {f.d for _, f in fits}
    windows = {tuple(f.window) for _, f in fits}
    if len(ds) != 1:
        raise IncomparableRuns(f"fits come from different spatial dimensions {sorted(ds, key=str)}")
    if len(windows) != 1:
        raise IncomparableRuns(f"fits use different windows {sorted(windows, key=str)}")
    d = ds.pop()
    theory = None if d is None else -d / 2
    pairs = []
    for a in range(len(fits)):
        for b in range(a + 1, len(fits)):
            (Da, fa), (Db, fb) = fits[a], fits[b]
            se = [s for s in (fa.slope_stderr, fb.slope_stderr) if s is not None]
            pairs.append({
                "D": [Da, Db],
                "difference": abs(fa.slope - fb.slope),
                "combined_stderr": math.sqrt(sum(s * s for s in se)) if se else None,
            })
    per_fit = [{"D": D, "slope": f.slope, "stderr": f.slope_stderr,
                "offset_from_theory": None if theory is None else f.slope - theory} for D, f in fits]
    consistent = all(p["difference"] <= tolerance for p in pairs)
    if theory_tolerance is not None and theory is not None:
        consistent = consistent and all(abs(f.slope - theory) <= theory_tolerance for _, f in fits)
    return {"d": d, "theory": theory, "tolerance": tolerance, "theory_tolerance": theory_tolerance,
            "pairs": pairs, "fits": per_fit, "consistent": bool(consistent)}
