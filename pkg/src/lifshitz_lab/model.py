"""Operator family description, hypothesis checks, disorder sampling, presets.

A model is ``-Laplacian (x) I_D + W(x) + sum_n diag(omega_i^(n) V_i(x - n))``
on R^d (``kind="continuum"``) or Z^d (``kind="lattice"``).  Potentials are
given as samples on a cell-centred grid of the unit cell [-1/2, 1/2]^d and
interpolated piecewise-constantly.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import (
    AsymmetricW,
    DegenerateLaw,
    ModelFormatError,
    NegativeProfile,
    SubcubeViolated,
)

KINDS = ("continuum", "lattice")
ASYMMETRY_TOL = 1e-12


# --------------------------------------------------------------------------
# disorder laws


@dataclass(frozen=True)
class Bernoulli:
    """``amplitude`` with probability ``p``, otherwise 0."""

    p: float
    amplitude: float = 1.0

    family = "bernoulli"

    @property
    def atoms(self):
        out = []
        if self.p < 1.0:
            out.append(0.0)
        if self.p > 0.0:
            out.append(float(self.amplitude))
        return tuple(sorted(set(out)))

    @property
    def sup(self) -> float:
        return max(self.atoms)

    def sample(self, u: np.ndarray) -> np.ndarray:
        return np.where(u < self.p, float(self.amplitude), 0.0)

    def check(self):
        if not (0.0 <= self.p <= 1.0):
            raise DegenerateLaw(f"Bernoulli p={self.p} outside [0, 1]")
        if not np.isfinite(self.amplitude) or self.amplitude <= 0.0:
            raise DegenerateLaw(f"Bernoulli amplitude {self.amplitude} must be finite and > 0")

    @property
    def nondegenerate(self) -> bool:
        return 0.0 < self.p < 1.0

    def to_dict(self):
        return {"family": self.family, "p": float(self.p), "amplitude": float(self.amplitude)}


@dataclass(frozen=True)
class Uniform:
    """Uniform law on [0, s]."""

    s: float

    family = "uniform"

    @property
    def sup(self) -> float:
        return float(self.s)

    def sample(self, u: np.ndarray) -> np.ndarray:
        return self.s * u

    def check(self):
        if not np.isfinite(self.s):
            raise DegenerateLaw("Uniform law with unbounded support")
        if self.s <= 0.0:
            raise DegenerateLaw(f"Uniform[0, {self.s}] has support reduced to {{0}} or empty")

    @property
    def nondegenerate(self) -> bool:
        return self.s > 0.0

    def to_dict(self):
        return {"family": self.family, "s": float(self.s)}


@dataclass(frozen=True)
class Discrete:
    """Finite law with listed atoms and (unnormalized) weights."""

    atoms: tuple
    weights: tuple

    family = "discrete"

    def __post_init__(self):
        object.__setattr__(self, "atoms", tuple(float(a) for a in self.atoms))
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))

    @property
    def support(self):
        return tuple(sorted(a for a, w in zip(self.atoms, self.weights) if w > 0))

    @property
    def sup(self) -> float:
        return max(self.support)

    def sample(self, u: np.ndarray) -> np.ndarray:
        w = np.asarray(self.weights)
        cdf = np.cumsum(w) / w.sum()
        idx = np.searchsorted(cdf, u, side="right")
        return np.asarray(self.atoms)[np.minimum(idx, len(self.atoms) - 1)]

    def check(self):
        if len(self.atoms) != len(self.weights) or not self.atoms:
            raise DegenerateLaw("discrete law needs matching non-empty atoms and weights")
        if any(w < 0 for w in self.weights) or sum(self.weights) <= 0:
            raise DegenerateLaw("discrete law weights must be nonnegative with positive total")
        if not all(np.isfinite(self.atoms)):
            raise DegenerateLaw("discrete law with unbounded atoms")
        if min(self.support) < 0.0:
            raise DegenerateLaw("discrete law has negative atoms")

    @property
    def nondegenerate(self) -> bool:
        sup = self.support
        return len(sup) > 1 and sup[0] == 0.0

    def to_dict(self):
        return {"family": self.family, "atoms": list(self.atoms), "weights": list(self.weights)}


def law_from_dict(data: dict):
    family = data.get("family")
    if family == "bernoulli":
        return Bernoulli(float(data["p"]), float(data.get("amplitude", 1.0)))
    if family == "uniform":
        return Uniform(float(data["s"]))
    if family == "discrete":
        return Discrete(tuple(data["atoms"]), tuple(data["weights"]))
    raise ModelFormatError(f"unknown disorder family {family!r}")


def _law_contains_zero(law) -> bool:
    if isinstance(law, Uniform):
        return True
    if isinstance(law, Bernoulli):
        return law.p < 1.0
    return 0.0 in law.support


# --------------------------------------------------------------------------
# model description


@dataclass(frozen=True, eq=False)
class ModelSpec:
    """Full description of the random operator.

    ``W`` has shape ``(G,)*d + (D, D)`` and ``V`` shape ``(D,) + (G,)*d``;
    both are samples at cell-centred points ``-1/2 + (g + 1/2)/G``.  For
    lattice models ``G`` is normally 1 (the value at the site).
    ``subcubes`` optionally declares, per component, ``(lo, hi)`` corners
    of a cube in the unit cell on which ``V_i >= 1``.
    """

    d: int
    D: int
    kind: str
    W: np.ndarray
    V: np.ndarray
    nu: tuple
    shift: float = 0.0
    subcubes: tuple | None = None
    name: str = ""

    def __post_init__(self):
        W = np.array(self.W, dtype=float)
        V = np.array(self.V, dtype=float)
        W.setflags(write=False)
        V.setflags(write=False)
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "V", V)
        object.__setattr__(self, "nu", tuple(self.nu))
        if self.kind not in KINDS:
            raise ModelFormatError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if self.d < 1 or self.D < 1:
            raise ModelFormatError("d and D must be >= 1")
        if W.ndim != self.d + 2 or W.shape[-2:] != (self.D, self.D):
            raise ModelFormatError(f"W must have shape (G,)*{self.d} + ({self.D}, {self.D}), got {W.shape}")
        if V.ndim != self.d + 1 or V.shape[0] != self.D:
            raise ModelFormatError(f"V must have shape ({self.D},) + (G,)*{self.d}, got {V.shape}")
        if len(set(W.shape[:-2])) != 1 or len(set(V.shape[1:])) != 1:
            raise ModelFormatError("unit-cell grids must have equal resolution along every axis")
        if len(self.nu) != self.D:
            raise ModelFormatError(f"need {self.D} disorder laws, got {len(self.nu)}")

    @property
    def grid_W(self) -> int:
        return self.W.shape[0]

    @property
    def grid_V(self) -> int:
        return self.V.shape[1]

    def to_dict(self) -> dict:
        GW = self.grid_W
        out = {
            "name": self.name,
            "d": self.d,
            "D": self.D,
            "kind": self.kind,
            "W": {"grid": GW, "values": self.W.reshape(GW**self.d, self.D, self.D).tolist()},
            "V": [{"grid": self.grid_V, "values": self.V[i].reshape(-1).tolist()} for i in range(self.D)],
            "nu": [law.to_dict() for law in self.nu],
            "shift": float(self.shift),
        }
        if self.subcubes is not None:
            out["subcubes"] = [[list(map(float, lo)), list(map(float, hi))] for lo, hi in self.subcubes]
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "ModelSpec":
        try:
            d = int(data["d"])
            D = int(data["D"])
            GW = int(data["W"]["grid"])
            W = np.asarray(data["W"]["values"], dtype=float).reshape((GW,) * d + (D, D))
            vs = data["V"]
            if len(vs) != D:
                raise ModelFormatError(f"need {D} single-site profiles")
            GV = int(vs[0]["grid"])
            V = np.stack([np.asarray(v["values"], dtype=float).reshape((GV,) * d) for v in vs])
            nu = tuple(law_from_dict(x) for x in data["nu"])
            subcubes = data.get("subcubes")
            if subcubes is not None:
                subcubes = tuple((tuple(lo), tuple(hi)) for lo, hi in subcubes)
            return cls(d=d, D=D, kind=data.get("kind", "continuum"), W=W, V=V, nu=nu,
                       shift=float(data.get("shift", 0.0)), subcubes=subcubes, name=data.get("name", ""))
        except (KeyError, ValueError, TypeError) as exc:
            raise ModelFormatError(f"malformed model document: {exc}") from exc


@dataclass(frozen=True, eq=False)
class ValidatedSpec(ModelSpec):
    """A ModelSpec that passed :func:`validate_spec`.

    ``s`` holds the support suprema of the laws, ``subcubes`` the cubes on
    which each ``V_i >= 1`` was verified.
    """

    s: tuple = ()
    disorder_nondegenerate: bool = True


def spec_hash(spec: ModelSpec) -> str:
    blob = json.dumps(spec.to_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def cell_sample_centres(G: int) -> np.ndarray:
    return -0.5 + (np.arange(G) + 0.5) / G


def _find_subcube(profile: np.ndarray, d: int):
    # one grid cell of the piecewise-constant profile is a nondegenerate cube
    G = profile.shape[0]
    hits = np.argwhere(profile >= 1.0)
    if hits.size == 0:
        return None
    g = hits[0]
    lo = tuple(-0.5 + g[a] / G for a in range(d))
    hi = tuple(-0.5 + (g[a] + 1) / G for a in range(d))
    return lo, hi


def _subcube_holds(profile: np.ndarray, d: int, cube) -> bool:
    lo, hi = (np.asarray(c, dtype=float) for c in cube)
    if lo.shape != (d,) or hi.shape != (d,):
        return False
    if np.any(hi <= lo) or np.any(lo < -0.5) or np.any(hi > 0.5):
        return False
    G = profile.shape[0]
    centres = cell_sample_centres(G)
    masks = [(centres >= lo[a] - 1e-12) & (centres <= hi[a] + 1e-12) for a in range(d)]
    sel = profile[np.ix_(*masks)]
    return sel.size > 0 and bool(np.all(sel >= 1.0))


def validate_spec(spec: ModelSpec, strict: bool = True) -> ValidatedSpec:
    """Check the structural hypotheses on W, V and the disorder laws.

    With ``strict=False`` laws whose support is a single point (the
    disorder-free and the constant-disorder cases) are accepted and flagged
    through ``disorder_nondegenerate=False``; everything else is still
    enforced.
    """
    W = np.array(spec.W)
    scale = max(1.0, float(np.max(np.abs(W))) if W.size else 1.0)
    asym = float(np.max(np.abs(W - np.swapaxes(W, -1, -2)))) if W.size else 0.0
    if asym > ASYMMETRY_TOL * scale:
        raise AsymmetricW(f"W is not symmetric (max |W - W^T| = {asym:.3e})")
    W = 0.5 * (W + np.swapaxes(W, -1, -2))
    if not np.all(np.isfinite(W)):
        raise AsymmetricW("W has non-finite samples")

    V = spec.V
    if not np.all(np.isfinite(V)):
        raise NegativeProfile("V has non-finite samples")
    if np.any(V < 0):
        i = int(np.argwhere(V < 0)[0][0])
        raise NegativeProfile(f"V_{i + 1} takes negative values")

    declared = spec.subcubes
    if declared is not None and len(declared) != spec.D:
        raise SubcubeViolated(f"need {spec.D} declared subcubes, got {len(declared)}")
    cubes = []
    for i in range(spec.D):
        if declared is not None:
            cube = declared[i]
            if not _subcube_holds(V[i], spec.d, cube):
                raise SubcubeViolated(f"V_{i + 1} is not >= 1 on the declared cube {cube}")
        else:
            cube = _find_subcube(V[i], spec.d)
            if cube is None:
                raise SubcubeViolated(f"V_{i + 1} never reaches 1 on any cube of the unit cell")
        cubes.append(cube)

    nondegenerate = True
    for i, law in enumerate(spec.nu):
        law.check()
        ok = _law_contains_zero(law) and law.nondegenerate
        if not ok:
            nondegenerate = False
            if strict:
                raise DegenerateLaw(
                    f"law {i + 1} ({law.to_dict()}) must contain 0 in its support and not be reduced to a point"
                )

    base = {f.name: getattr(spec, f.name) for f in dataclasses.fields(ModelSpec)}
    base.update(W=W, subcubes=tuple(cubes))
    return ValidatedSpec(**base, s=tuple(float(law.sup) for law in spec.nu),
                         disorder_nondegenerate=nondegenerate)


# --------------------------------------------------------------------------
# discretization and disorder


@dataclass(frozen=True)
class BoxDiscretization:
    """Dirichlet box C_L with ``m`` mesh points per unit length.

    For the continuum the unknowns are the interior vertices of a uniform
    grid of spacing ``1/m`` on ``[-(2L+1)/2, (2L+1)/2]^d``, i.e.
    ``m(2L+1) - 1`` per axis.  Lattice boxes have one site per integer point.
    """

    L: int
    m: int = 1
    d: int = 1
    D: int = 1
    kind: str = "continuum"

    def __post_init__(self):
        if self.L < 0:
            raise ValueError("L must be >= 0")
        if self.kind == "lattice" and self.m != 1:
            object.__setattr__(self, "m", 1)
        if self.m < 1:
            raise ValueError("m must be >= 1")

    @classmethod
    def for_spec(cls, spec: ModelSpec, L: int, m: int = 1) -> "BoxDiscretization":
        return cls(L=L, m=m if spec.kind == "continuum" else 1, d=spec.d, D=spec.D, kind=spec.kind)

    @property
    def h(self) -> float:
        return 1.0 / self.m

    @property
    def width(self) -> int:
        return 2 * self.L + 1

    @property
    def points_per_axis(self) -> int:
        if self.kind == "lattice":
            return self.width
        return self.m * self.width - 1

    @property
    def n_sites(self) -> int:
        return self.D * self.points_per_axis**self.d

    @property
    def volume(self) -> int:
        return self.width**self.d

    def to_dict(self):
        return dataclasses.asdict(self)


@dataclass(frozen=True, eq=False)
class DisorderRealization:
    """Coupling constants on the box {-L..L}^d.

    ``values[i][idx]`` is omega_{i+1}^{(n)} for the site ``n = idx - L``.
    """

    L: int
    d: int
    values: np.ndarray
    master_seed: int
    realization_index: int
    attempt: int = 0

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def box(self) -> np.ndarray:
        axes = [np.arange(-self.L, self.L + 1)] * self.d
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, self.d)

    @classmethod
    def constant(cls, spec: ModelSpec, L: int, value) -> "DisorderRealization":
        value = np.broadcast_to(np.asarray(value, dtype=float), (spec.D,))
        vals = np.empty((spec.D,) + (2 * L + 1,) * spec.d)
        for i in range(spec.D):
            vals[i] = value[i]
        return cls(L=L, d=spec.d, values=vals, master_seed=-1, realization_index=-1)


def _zigzag(n: np.ndarray) -> np.ndarray:
    return np.where(n >= 0, 2 * n, -2 * n - 1)


def site_counter(coords: np.ndarray) -> np.ndarray:
    """Box-independent counter for integer sites; last axis indexes coordinates.

    Bijective from Z^d onto the naturals (zigzag per axis, Szudzik pairing),
    so the draws inside a box of width w use counters below w^d.
    """
    z = _zigzag(np.asarray(coords, dtype=np.int64))
    c = z[..., 0]
    for a in range(1, z.shape[-1]):
        b = z[..., a]
        c = np.where(c >= b, c * c + c + b, b * b + c)
    return c


def _stream_key(master_seed: int, index: int, attempt: int, component: int) -> np.ndarray:
    if master_seed < 0 or master_seed >= 2**64:
        raise ValueError("master_seed must be a 64-bit unsigned integer")
    ss = np.random.SeedSequence([int(master_seed), int(index), int(attempt), int(component)])
    return ss.generate_state(2, np.uint64)


def sample_realization(spec: ModelSpec, box: BoxDiscretization | int, master_seed: int, index: int,
                       attempt: int = 0) -> DisorderRealization:
    """Draw omega_i^(n) for every site of the box.

    Each (seed, index, attempt, component) keys its own Philox stream, and
    site ``n`` always reads the draw at counter ``site_counter(n)``, so a
    value depends only on that tuple and not on the box or any ordering.
    """
    L = box.L if isinstance(box, BoxDiscretization) else int(box)
    d = spec.d
    axes = [np.arange(-L, L + 1)] * d
    coords = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    counters = site_counter(coords)
    n_draws = int(counters.max()) + 1
    values = np.empty((spec.D,) + counters.shape)
    for i, law in enumerate(spec.nu):
        gen = np.random.Generator(np.random.Philox(key=_stream_key(master_seed, index, attempt, i)))
        u = gen.random(n_draws)
        values[i] = law.sample(u[counters])
    return DisorderRealization(L=L, d=d, values=values, master_seed=int(master_seed),
                               realization_index=int(index), attempt=int(attempt))


def spectral_shift(spec: ValidatedSpec, mesh: BoxDiscretization | int = 8, theta_points: int = 32):
    """Shift W by a multiple of the identity so that the bottom of the
    omega = 0 periodic spectrum sits at 0.

    Returns ``(shifted_spec, E_bottom)``.  ``mesh`` supplies the points per
    unit length of the Floquet cell (ignored for lattice models).
    """
    from .floquet import bottom_of_spectrum

    m = mesh.m if isinstance(mesh, BoxDiscretization) else int(mesh)
    e_bottom = bottom_of_spectrum(spec, m=m, theta_points=theta_points)
    lam = -e_bottom
    W = np.array(spec.W) + lam * np.eye(spec.D)
    return dataclasses.replace(spec, W=W, shift=float(spec.shift + lam)), e_bottom


# --------------------------------------------------------------------------
# presets and files


def constant_W(matrix, d: int = 1) -> np.ndarray:
    matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
    return matrix.reshape((1,) * d + matrix.shape)


def hl_model(D: int, W=None, p: float = 0.5, amplitude: float = 1.0, name: str | None = None) -> ModelSpec:
    """Constant symmetric background with unit-cell indicator impurities
    (impurity spacing 1) and Bernoulli couplings."""
    if W is None:
        W = _default_hl_W(D)
    V = np.ones((D, 1))
    return ModelSpec(d=1, D=D, kind="continuum", W=constant_W(W), V=V,
                     nu=tuple(Bernoulli(p, amplitude) for _ in range(D)),
                     name=name or f"hl-D{D}")


def hl_matched(D: int, amplitude: float = 1.0) -> ModelSpec:
    """hl family with the vacancy probability of a whole cell fixed at 1/2.

    A cell is vacant (all D couplings zero) with probability (1 - p)^D, so
    p = 1 - 2^(-1/D) gives fibers of every D the same chance of an empty
    cell; D = 1 is the scalar Anderson preset.
    """
    W = np.zeros((1, 1)) if D == 1 else None
    return hl_model(D, W=W, p=1.0 - 2.0 ** (-1.0 / D), amplitude=amplitude, name=f"hl-D{D}-matched")


def _default_hl_W(D: int) -> np.ndarray:
    # nearest-neighbour hopping between channels: nondiagonal for D >= 2
    W = np.zeros((D, D))
    for i in range(D - 1):
        W[i, i + 1] = W[i + 1, i] = 1.0
    return W


def lattice_anderson(d: int, law=None, name: str | None = None) -> ModelSpec:
    law = law if law is not None else Bernoulli(0.5, 1.0)
    return ModelSpec(d=d, D=1, kind="lattice", W=constant_W([[0.0]], d), V=np.ones((1,) + (1,) * d),
                     nu=(law,), name=name or f"lattice-anderson-d{d}")


def preset_models() -> dict[str, ModelSpec]:
    presets = {
        "free-d1": ModelSpec(d=1, D=1, kind="continuum", W=constant_W([[0.0]]), V=np.ones((1, 1)),
                             nu=(Bernoulli(0.0, 1.0),), name="free-d1"),
        "scalar-anderson-d1": hl_model(1, W=[[0.0]], name="scalar-anderson-d1"),
        "hl-D2": hl_model(2),
        "hl-D2-matched": hl_matched(2),
        "lattice-anderson-d1": lattice_anderson(1),
        "lattice-anderson-d2": lattice_anderson(2),
    }
    return presets


def load_model(ref: str) -> tuple[ModelSpec, bytes]:
    """Resolve ``preset:NAME``, ``path.json`` or ``path.json:NAME``.

    Returns the model and the canonical bytes that identify it.
    """
    if ref.startswith("preset:"):
        name = ref.split(":", 1)[1]
        presets = preset_models()
        if name not in presets:
            raise ModelFormatError(f"unknown preset {name!r}; available: {sorted(presets)}")
        spec = presets[name]
        return spec, json.dumps(spec.to_dict(), sort_keys=True).encode()
    path, _, name = ref.partition(".json:")
    path = path + ".json" if name else ref
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise ModelFormatError(f"cannot read model file {path}: {exc}") from exc
    try:
        data = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"model file {path} is not valid JSON: {exc}") from exc
    if "presets" in data:
        if not name:
            if len(data["presets"]) != 1:
                raise ModelFormatError(f"{path} holds several models; select one with {path}:NAME")
            name = next(iter(data["presets"]))
        if name not in data["presets"]:
            raise ModelFormatError(f"model {name!r} not found in {path}")
        entry = dict(data["presets"][name])
        entry.setdefault("name", name)
        return ModelSpec.from_dict(entry), raw
    return ModelSpec.from_dict(data), raw


def save_models(path, models: Sequence[ModelSpec] | ModelSpec):
    if isinstance(models, ModelSpec):
        doc = models.to_dict()
    else:
        doc = {"presets": {m.name: m.to_dict() for m in models}}
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
