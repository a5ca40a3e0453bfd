"""Band structure of periodic operators and Brillouin-zone integrals.

The supercell C_k has period P = 2k + 1 and its Brillouin zone is
[-pi/P, pi/P)^d.  Band functions are the sorted eigenvalues of the
quasi-periodic cell matrix at each quasi-momentum.
"""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .assembly import assemble_floquet_cell
from .errors import EmptyNeighborhood, FlatBand, FloquetFailure, GridTooCoarse
from .model import DisorderRealization, ModelSpec
from .spectral import counting_profile, eigenvalues_dense

MIN_GRID = 8
REFINE_FACTOR = 4
CLUSTER_TOL = 1e-6
FLAT_TOL = 1e-10
DISC_ALLOWANCE = 0.05
DEGENERATE_PINCH = 1e-3


def theta_grid(n: int, k: int = 0, d: int = 1, midpoint: bool = False) -> np.ndarray:
    """Uniform grid of ``n`` points per axis over the zone of period 2k + 1.

    The endpoint grid starts at -pi/P and contains 0 for even ``n``; the
    midpoint grid is the one used for zone quadrature.  Shape ``(n**d, d)``.
    """
    P = 2 * k + 1
    step = 2 * np.pi / (P * n)
    axis = -np.pi / P + step * (np.arange(n) + (0.5 if midpoint else 0.0))
    return np.array(list(itertools.product(axis, repeat=d)), dtype=float).reshape(-1, d)


def wrap_to_zone(theta, k: int = 0) -> np.ndarray:
    P = 2 * k + 1
    period = 2 * np.pi / P
    return np.mod(np.asarray(theta, dtype=float) + np.pi / P, period) - np.pi / P


def cell_bands(spec: ModelSpec, real: DisorderRealization | None, k: int, theta, m: int,
               j_max: int | None = None) -> np.ndarray:
    A = assemble_floquet_cell(spec, real, k, theta, m)
    ev = eigenvalues_dense(A)
    return ev if j_max is None else ev[: j_max + 1]


@dataclass
class BandStructure:
    """Lowest bands ``bands[t, j] = E_j(thetas[t])`` on an endpoint grid.

    ``evaluate`` maps any quasi-momentum to the same list of bands and is
    used for local refinement.
    """

    k: int
    d: int
    n: int
    thetas: np.ndarray
    bands: np.ndarray
    evaluate: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    m: int = 1

    @property
    def spacing(self) -> float:
        return 2 * np.pi / ((2 * self.k + 1) * self.n)

    @classmethod
    def from_function(cls, fn, n: int, d: int = 1, k: int = 0) -> "BandStructure":
        """Band structure of a synthetic dispersion ``fn(theta) -> bands``."""
        def evaluate(theta):
            return np.atleast_1d(np.asarray(fn(wrap_to_zone(theta, k)), dtype=float))

        thetas = theta_grid(n, k, d)
        bands = np.array([evaluate(t) for t in thetas])
        return cls(k=k, d=d, n=n, thetas=thetas, bands=bands, evaluate=evaluate)

    def _grid_index(self) -> np.ndarray:
        return np.arange(self.n**self.d).reshape((self.n,) * self.d)

    def conjugation_error(self) -> float:
        """max |E_j(theta) - E_j(-theta)| over the grid (zone-periodic)."""
        neg = self._grid_index()[np.ix_(*[np.mod(-np.arange(self.n), self.n)] * self.d)]
        return float(np.max(np.abs(self.bands - self.bands[neg.ravel()])))

    def continuity(self):
        """Lipschitz estimate and per-band crossing flags along grid neighbours.

        A band is flagged when some neighbour increment exceeds three times
        the median increment of that band.
        """
        idx = self._grid_index()
        incs = []
        for ax in range(self.d):
            nb = np.roll(idx, -1, axis=ax).ravel()
            incs.append(np.abs(self.bands[nb] - self.bands[idx.ravel()]))
        inc = np.concatenate(incs)
        c_lip = float(inc.max() / self.spacing) if inc.size else 0.0
        med = np.median(inc, axis=0)
        flagged = [int(j) for j in range(self.bands.shape[1]) if np.any(inc[:, j] > 3 * med[j] + 1e-12)]
        return {"lipschitz": c_lip, "flagged_bands": flagged}

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"theta_{a + 1}" for a in range(self.d)] + ["j", "E_j"])
            for t, row in zip(self.thetas, self.bands):
                for j, e in enumerate(row):
                    w.writerow([repr(float(x)) for x in t] + [j, repr(float(e))])


def band_structure(spec: ModelSpec, real: DisorderRealization | None = None, k: int = 0,
                   n_theta: int = 32, j_max: int = 3, m: int = 8) -> BandStructure:
    """Floquet bands ``E_0..E_{j_max}`` on an ``n_theta``-per-axis grid."""
    if n_theta < MIN_GRID:
        raise GridTooCoarse(f"{n_theta} points per axis; need at least {MIN_GRID}")
    mm = 1 if spec.kind == "lattice" else m

    def evaluate(theta):
        theta = wrap_to_zone(np.atleast_1d(theta), k)
        return cell_bands(spec, real, k, theta, mm, j_max)

    thetas = theta_grid(n_theta, k, spec.d)
    bands = np.array([evaluate(t) for t in thetas])
    return BandStructure(k=k, d=spec.d, n=n_theta, thetas=thetas, bands=bands, evaluate=evaluate, m=mm)


# --------------------------------------------------------------------------
# minima


@dataclass
class BandMinimaReport:
    E_min: float
    Z: list
    m0: int
    degeneracy: list
    n0: int
    quadratic: list
    refined_spacing: float
    values: list
    flat: bool = False

    def to_dict(self):
        return {
            "E_min": self.E_min,
            "Z": [z.tolist() for z in self.Z],
            "m0": self.m0,
            "degeneracy": [list(map(int, g)) for g in self.degeneracy],
            "n0": self.n0,
            "quadratic": [None if q is None else q.tolist() for q in self.quadratic],
            "refined_spacing": self.refined_spacing,
            "flat": self.flat,
        }


def _periodic_distance(a, b, k: int) -> float:
    return float(np.linalg.norm(wrap_to_zone(np.asarray(a) - np.asarray(b), k)))


def _clusters(mask: np.ndarray) -> list[list[int]]:
    """Connected components of ``mask`` on the periodic grid (flat indices)."""
    shape = mask.shape
    flat_mask = mask.ravel()
    seen = np.zeros(flat_mask.size, dtype=bool)
    out = []
    for start in np.flatnonzero(flat_mask):
        if seen[start]:
            continue
        comp, stack = [], [start]
        seen[start] = True
        while stack:
            cur = stack.pop()
            comp.append(cur)
            coords = np.unravel_index(cur, shape)
            for ax in range(len(shape)):
                for step in (-1, 1):
                    nb = list(coords)
                    nb[ax] = (nb[ax] + step) % shape[ax]
                    f = int(np.ravel_multi_index(nb, shape))
                    if flat_mask[f] and not seen[f]:
                        seen[f] = True
                        stack.append(f)
        out.append(comp)
    return out


def _refine(band: BandStructure, theta0: np.ndarray, levels: int):
    h = band.spacing
    best = np.array(theta0, dtype=float)
    best_val = float(band.evaluate(best)[0])
    offsets = np.arange(-REFINE_FACTOR, REFINE_FACTOR + 1)
    history = [best_val]
    for _ in range(levels):
        h /= REFINE_FACTOR
        centre = best
        for off in itertools.product(offsets, repeat=band.d):
            if not any(off):
                continue
            t = centre + h * np.asarray(off, dtype=float)
            v = float(band.evaluate(t)[0])
            if v < best_val:
                best, best_val = t, v
        history.append(best_val)
    return wrap_to_zone(best, band.k), best_val, h, history


def _quadratic_fit(band: BandStructure, theta0: np.ndarray, e0: float, h: float):
    pairs = [(a, b) for a in range(band.d) for b in range(a, band.d)]
    offsets = np.arange(-REFINE_FACTOR, REFINE_FACTOR + 1)
    rows, rhs = [], []
    for off in itertools.product(offsets, repeat=band.d):
        if not any(off):
            continue
        dt = h * np.asarray(off, dtype=float)
        rows.append([dt[a] * dt[b] for a, b in pairs])
        rhs.append(float(band.evaluate(theta0 + dt)[0]) - e0)
    coef, *_ = np.linalg.lstsq(np.asarray(rows), np.asarray(rhs), rcond=None)
    q = np.zeros((band.d, band.d))
    for c, (a, b) in zip(coef, pairs):
        if a == b:
            q[a, a] = c
        else:
            q[a, b] = q[b, a] = c / 2
    return q


def locate_minima(band: BandStructure, refine_levels: int = 3) -> BandMinimaReport:
    """Global minima of the lowest band, refined by local subdivision.

    Grid points within ``1e-6 * width`` of the minimum are grouped into
    connected clusters; each cluster is refined ``refine_levels`` times by
    a factor 4, refined minima closer than the last search window are
    merged, and a quadratic form is fitted around each survivor.
    """
    e0 = band.bands[:, 0]
    width = float(e0.max() - e0.min())
    if width < FLAT_TOL:
        t = band.thetas[int(np.argmin(e0))]
        report = BandMinimaReport(E_min=float(e0.min()), Z=[t], m0=1,
                                  degeneracy=[[0]], n0=1, quadratic=[None],
                                  refined_spacing=band.spacing, values=[float(e0.min())], flat=True)
        raise FlatBand(f"lowest band varies by {width:.2e} across the zone", report=report)
    tol = CLUSTER_TOL * width
    mask = (e0 <= e0.min() + tol).reshape((band.n,) * band.d)
    found = []
    h_last = band.spacing
    for comp in _clusters(mask):
        start = comp[int(np.argmin(e0[comp]))]
        theta, val, h_last, _ = _refine(band, band.thetas[start], refine_levels)
        found.append((theta, val))
    e_min = min(v for _, v in found)
    merged = []
    for theta, val in sorted(found, key=lambda tv: tv[1]):
        if val > e_min + tol:
            continue
        if any(_periodic_distance(theta, t, band.k) < REFINE_FACTOR * h_last for t, _ in merged):
            continue
        merged.append((theta, val))
    merged.sort(key=lambda tv: tuple(tv[0]))
    degeneracy, quadratic = [], []
    for theta, val in merged:
        bands_here = band.evaluate(theta)
        degeneracy.append([int(j) for j in np.flatnonzero(bands_here <= e_min + tol)])
        quadratic.append(_quadratic_fit(band, theta, val, band.spacing / REFINE_FACTOR))
    return BandMinimaReport(
        E_min=float(e_min),
        Z=[t for t, _ in merged],
        m0=len(merged),
        degeneracy=degeneracy,
        n0=max(len(g) for g in degeneracy),
        quadratic=quadratic,
        refined_spacing=float(h_last),
        values=[float(v) for _, v in merged],
    )


def nondegeneracy_check(band: BandStructure, report: BandMinimaReport, delta: float,
                        eps_disc: float = DISC_ALLOWANCE, points_per_axis: int | None = None):
    """Quadratic pinch of the lowest band around each minimum.

    On a punctured local grid with |theta - theta0| < delta returns
    ``C_lower = min (E_0(theta) - E_0(theta0)) / |theta - theta0|^2`` and
    ``margin = min (1 - that ratio)``; ``upper_ok`` allows ``eps_disc``.
    """
    if delta < report.refined_spacing:
        raise EmptyNeighborhood(f"delta = {delta} is below the refined grid spacing {report.refined_spacing:.3e}")
    if points_per_axis is None:
        points_per_axis = 201 if band.d == 1 else 41
    axis = np.linspace(-delta, delta, points_per_axis)
    out = []
    for theta0, e_ref in zip(report.Z, report.values):
        ratios = []
        for off in itertools.product(axis, repeat=band.d):
            off = np.asarray(off)
            r2 = float(off @ off)
            if r2 == 0.0 or r2 >= delta * delta:
                continue
            ratios.append((float(band.evaluate(theta0 + off)[0]) - e_ref) / r2)
        if not ratios:
            raise EmptyNeighborhood("no grid point inside the punctured neighbourhood")
        ratios = np.asarray(ratios)
        c_lower = float(ratios.min())
        margin = float((1.0 - ratios).min())
        out.append({
            "theta0": np.asarray(theta0).tolist(),
            "C_lower": c_lower,
            "upper_ok": bool(margin >= -eps_disc),
            "margin": margin,
            "degenerate": bool(c_lower < DEGENERATE_PINCH),
        })
    return out


def reference_dispersion(theta, theta0) -> float:
    """sum_j (1 - cos(theta_j - theta0_j))."""
    diff = np.atleast_1d(np.asarray(theta, dtype=float)) - np.atleast_1d(np.asarray(theta0, dtype=float))
    return float(np.sum(1.0 - np.cos(diff)))


def bottom_of_spectrum(spec: ModelSpec, m: int = 8, theta_points: int = 32, max_levels: int = 12,
                       tol: float = 1e-10) -> float:
    """Minimum of E_0 over the zone of the omega = 0 operator."""
    band = band_structure(spec, None, 0, theta_points, j_max=0, m=m)
    e0 = band.bands[:, 0]
    width = float(e0.max() - e0.min())
    if width < FLAT_TOL:
        return float(e0.min())
    starts = np.flatnonzero(e0 <= e0.min() + CLUSTER_TOL * width)
    best = np.inf
    for s in starts:
        _, val, _, history = _refine(band, band.thetas[s], max_levels)
        scale = max(1.0, abs(val))
        if abs(history[-1] - history[-2]) > tol * scale:
            raise FloquetFailure(f"band minimum still moving by {abs(history[-1] - history[-2]):.2e} "
                                 f"after {max_levels} refinements")
        best = min(best, val)
    return float(best)


# --------------------------------------------------------------------------
# zone quadrature of the counting function


def periodic_counts(spec: ModelSpec, k: int, real: DisorderRealization | None, energies,
                    n_theta: int = 32, m: int = 8) -> tuple[np.ndarray, int]:
    """Sum over the midpoint quasi-momentum grid of #{j : E_j(theta) <= E}.

    Returns ``(counts, normalization)`` with ``N(E) = counts / normalization``
    and ``normalization = n_theta**d * (2k + 1)**d`` (zone average per unit
    volume).
    """
    energies = np.asarray(energies, dtype=float)
    mm = 1 if spec.kind == "lattice" else m
    total = np.zeros(energies.shape[0], dtype=np.int64)
    for theta in theta_grid(n_theta, k, spec.d, midpoint=True):
        A = assemble_floquet_cell(spec, real, k, theta, mm)
        total += counting_profile(A, energies).counts
    return total, n_theta**spec.d * (2 * k + 1) ** spec.d


def periodic_ids(spec: ModelSpec, k: int, real: DisorderRealization | None, energies,
                 n_theta: int = 32, m: int = 8):
    """IDS of the (2k+1)Z^d-periodic operator built from one disorder period."""
    from .ids import IdsEstimate

    counts, norm = periodic_counts(spec, k, real, energies, n_theta, m)
    return IdsEstimate.from_counts(
        energies=energies,
        counts=counts[None, :],
        normalization=norm,
        method="periodic",
        meta={"k": k, "n_theta": n_theta, "m": 1 if spec.kind == "lattice" else m},
    )
