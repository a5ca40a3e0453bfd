"""Finite-dimensional discretizations of the random operator.

Dirichlet boxes are stored block-tridiagonally (one block per grid point
for d = 1, one block per grid line for d = 2).  Floquet cells and periodic
lattice boxes have wrap-around couplings and are stored densely; they are
small by construction.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, MeshTooCoarse, ThetaOutOfZone
from .model import BoxDiscretization, DisorderRealization, ModelSpec, lattice_anderson


@dataclass(frozen=True, eq=False)
class SymmetricOperatorMatrix:
    """Real symmetric or complex Hermitian matrix.

    ``structure`` is ``"block_tridiagonal"`` (``diag[i]`` = block (i, i),
    ``lower[i]`` = block (i+1, i)) or ``"dense"`` (``tril`` = lower
    triangle).  Upper parts are never stored, so Hermiticity is exact.
    """

    structure: str
    diag: np.ndarray | None = None
    lower: np.ndarray | None = None
    tril: np.ndarray | None = None

    @classmethod
    def from_blocks(cls, diag, lower) -> "SymmetricOperatorMatrix":
        diag = np.asarray(diag)
        lower = np.asarray(lower)
        dtype = np.result_type(diag.dtype, lower.dtype, np.float64)
        nb, b = diag.shape[0], diag.shape[1]
        if diag.shape != (nb, b, b) or lower.shape != (max(nb - 1, 0), b, b):
            raise DimensionMismatch(f"inconsistent block shapes {diag.shape}, {lower.shape}")
        low = np.tril(diag.astype(dtype), -1)
        herm = low + np.conj(np.swapaxes(low, -1, -2))
        idx = np.arange(b)
        herm[:, idx, idx] = diag[:, idx, idx].real
        herm = np.ascontiguousarray(herm)
        lower = np.ascontiguousarray(lower.astype(dtype))
        if lower.shape[0] == 0:
            lower = np.zeros((0, b, b), dtype=dtype)
        for a in (herm, lower):
            a.setflags(write=False)
        return cls("block_tridiagonal", diag=herm, lower=lower)

    @classmethod
    def from_dense(cls, a) -> "SymmetricOperatorMatrix":
        a = np.asarray(a)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise DimensionMismatch(f"dense operator must be square, got {a.shape}")
        dtype = np.result_type(a.dtype, np.float64)
        t = np.tril(a.astype(dtype))
        idx = np.arange(a.shape[0])
        t[idx, idx] = t[idx, idx].real
        t.setflags(write=False)
        return cls("dense", tril=t)

    @property
    def n(self) -> int:
        if self.structure == "dense":
            return self.tril.shape[0]
        return self.diag.shape[0] * self.diag.shape[1]

    @property
    def dtype(self):
        return self.tril.dtype if self.structure == "dense" else self.diag.dtype

    @property
    def field(self) -> str:
        return "complex" if np.issubdtype(self.dtype, np.complexfloating) else "real"

    @property
    def block_size(self) -> int:
        return self.n if self.structure == "dense" else self.diag.shape[1]

    @functools.cached_property
    def scale(self) -> float:
        if self.structure == "dense":
            return float(np.max(np.abs(self.tril))) if self.n else 0.0
        s = float(np.max(np.abs(self.diag))) if self.diag.size else 0.0
        if self.lower.size:
            s = max(s, float(np.max(np.abs(self.lower))))
        return s

    def to_dense(self) -> np.ndarray:
        if self.structure == "dense":
            return _hermitian_from_tril(self.tril)
        nb, b = self.diag.shape[0], self.diag.shape[1]
        out = np.zeros((nb * b, nb * b), dtype=self.dtype)
        for i in range(nb):
            out[i * b:(i + 1) * b, i * b:(i + 1) * b] = self.diag[i]
            if i < nb - 1:
                out[(i + 1) * b:(i + 2) * b, i * b:(i + 1) * b] = self.lower[i]
                out[i * b:(i + 1) * b, (i + 1) * b:(i + 2) * b] = np.conj(self.lower[i].T)
        return out

    @functools.cached_property
    def dense_full(self) -> np.ndarray:
        a = np.ascontiguousarray(self.to_dense())
        a.setflags(write=False)
        return a

    def shifted(self, c: float) -> "SymmetricOperatorMatrix":
        if self.structure == "dense":
            t = np.array(self.tril)
            t[np.diag_indices(self.n)] += c
            return SymmetricOperatorMatrix.from_dense(t)
        diag = np.array(self.diag)
        idx = np.arange(self.block_size)
        diag[:, idx, idx] += c
        return SymmetricOperatorMatrix.from_blocks(diag, self.lower)

    def dump_coo(self, path):
        """Write nonzero entries as ``row col real imag`` lines (full matrix, 0-based)."""
        a = self.to_dense()
        rows, cols = np.nonzero(a)
        with open(path, "w") as fh:
            for r, c in zip(rows, cols):
                v = complex(a[r, c])
                fh.write(f"{r} {c} {v.real:.17g} {v.imag:.17g}\n")


def _hermitian_from_tril(t: np.ndarray) -> np.ndarray:
    low = np.tril(t, -1)
    out = low + np.conj(low.T)
    idx = np.arange(t.shape[0])
    out[idx, idx] = t[idx, idx].real
    return out


def block_direct_sum(a: SymmetricOperatorMatrix, b: SymmetricOperatorMatrix) -> SymmetricOperatorMatrix:
    """Block-diagonal concatenation ``a (+) b``."""
    if a.structure == b.structure == "block_tridiagonal" and a.block_size == b.block_size:
        bs = a.block_size
        dtype = np.result_type(a.dtype, b.dtype)
        diag = np.concatenate([a.diag, b.diag]).astype(dtype)
        lower = np.concatenate([a.lower, np.zeros((1, bs, bs), dtype=dtype), b.lower]).astype(dtype)
        return SymmetricOperatorMatrix.from_blocks(diag, lower)
    da, db = a.to_dense(), b.to_dense()
    out = np.zeros((a.n + b.n,) * 2, dtype=np.result_type(da.dtype, db.dtype))
    out[:a.n, :a.n] = da
    out[a.n:, a.n:] = db
    return SymmetricOperatorMatrix.from_dense(out)


# --------------------------------------------------------------------------
# potential evaluation


def _axis_positions(kind: str, m: int, first: int, count: int, width: int):
    """Twice-m-scaled coordinates ``t = 2 m x`` of ``count`` nodes.

    Nodes are ``x = (first + j)/m - width/2`` for the continuum (vertex grid
    on an interval of length ``width`` starting at ``-width/2``) and the
    integer sites centred on 0 for lattices.
    """
    j = np.arange(count)
    if kind == "lattice":
        return 2 * (first + j - (width - 1) // 2)
    return 2 * (first + j) - m * width


def _cell_and_sample(t: np.ndarray, m: int, G: int):
    two_m = 2 * m
    cell = np.floor_divide(t + m, two_m)
    local2m = t - two_m * cell  # in [-m, m)
    g = np.floor_divide((local2m + m) * G, two_m)
    return cell, np.clip(g, 0, G - 1)


def _node_potential(spec: ModelSpec, m: int, t_axes, omega, omega_L: int, periodic_cells: int | None = None):
    """Potential matrices ``W(x) + diag(omega_i V_i(x - n))`` at every node.

    ``t_axes`` holds per-axis scaled coordinates; the result has shape
    ``(len(t),)*d + (D, D)``.  ``omega`` is indexed by ``cell + omega_L``;
    ``periodic_cells`` wraps the cell index (Floquet cells).
    """
    d, D = spec.d, spec.D
    cells, gW, gV = [], [], []
    for t in t_axes:
        c, g = _cell_and_sample(t, m, spec.grid_W)
        _, gv = _cell_and_sample(t, m, spec.grid_V)
        if periodic_cells is not None:
            c = np.mod(c + omega_L, periodic_cells) - omega_L
        cells.append(c)
        gW.append(g)
        gV.append(gv)
    gw_mesh = np.meshgrid(*gW, indexing="ij")
    pot = np.array(spec.W[tuple(gw_mesh)], dtype=float)
    if omega is not None:
        gv_mesh = np.meshgrid(*gV, indexing="ij")
        c_mesh = np.meshgrid(*[c + omega_L for c in cells], indexing="ij")
        for i in range(D):
            pot[..., i, i] += omega[i][tuple(c_mesh)] * spec.V[i][tuple(gv_mesh)]
    return pot


def _kinetic(spec: ModelSpec, m: int):
    if spec.kind == "lattice":
        hop = -0.5
    else:
        hop = -float(m) ** 2
    return hop, -2.0 * spec.d * hop


def _block_tridiagonal_operator(pot: np.ndarray, hop: float, onsite: float, d: int):
    D = pot.shape[-1]
    M = pot.shape[0]
    eye = np.eye(D)
    if d == 1:
        diag = pot + onsite * eye
        lower = np.broadcast_to(hop * eye, (M - 1, D, D))
        return SymmetricOperatorMatrix.from_blocks(diag, lower)
    if d == 2:
        M2 = pot.shape[1]
        b = M2 * D
        diag = np.zeros((M, b, b))
        for i2 in range(M2):
            sl = slice(i2 * D, (i2 + 1) * D)
            diag[:, sl, sl] = pot[:, i2] + onsite * eye
            if i2 + 1 < M2:
                diag[:, (i2 + 1) * D:(i2 + 2) * D, sl] = hop * eye
        lower = np.broadcast_to(hop * np.eye(b), (M - 1, b, b))
        return SymmetricOperatorMatrix.from_blocks(diag, lower)
    raise DimensionMismatch(f"d = {d} is not supported (d in {{1, 2}})")


def _dense_operator(pot: np.ndarray, hop: float, onsite: float, d: int, phases):
    """Dense operator on a grid of nodes with wrap-around bonds.

    ``phases[a]`` is the factor ``u(x + period e_a) = phase u(x)``; ``None``
    drops the wrap bonds (Dirichlet).
    """
    shape = pot.shape[:d]
    D = pot.shape[-1]
    n_nodes = int(np.prod(shape))
    complex_ = phases is not None and any(p is not None and np.iscomplexobj(p) for p in phases)
    a = np.zeros((n_nodes * D, n_nodes * D), dtype=complex if complex_ else float)
    flat = np.arange(n_nodes).reshape(shape)
    blocks = pot.reshape(n_nodes, D, D) + onsite * np.eye(D)
    for c1 in range(D):
        for c2 in range(D):
            a[flat.ravel() * D + c1, flat.ravel() * D + c2] += blocks[:, c1, c2]
    for ax in range(d):
        src = flat
        dst = np.roll(flat, -1, axis=ax)
        weight = np.full(shape, hop, dtype=a.dtype)
        last = [slice(None)] * d
        last[ax] = shape[ax] - 1
        phase = None if phases is None else phases[ax]
        if phase is None:
            weight[tuple(last)] = 0.0
        else:
            weight[tuple(last)] *= phase
        for c in range(D):
            rows = src.ravel() * D + c
            cols = dst.ravel() * D + c
            w = weight.ravel()
            np.add.at(a, (rows, cols), w)
            np.add.at(a, (cols, rows), np.conj(w))
    return SymmetricOperatorMatrix.from_dense(a)


def _check_realization(spec: ModelSpec, real: DisorderRealization | None, L: int):
    if real is None:
        return None
    if real.L != L or real.d != spec.d or real.values.shape[0] != spec.D:
        raise DimensionMismatch(
            f"realization on box L={real.L} (d={real.d}, D={real.values.shape[0]}) does not match "
            f"L={L} (d={spec.d}, D={spec.D})"
        )
    return real.values


# --------------------------------------------------------------------------
# public builders


def assemble_box(spec: ModelSpec, disc: BoxDiscretization, real: DisorderRealization | None):
    """Dirichlet restriction of the operator to the box C_L.

    Continuum models use second-order central differences on the interior
    vertices; lattice models are delegated to :func:`assemble_lattice`.
    ``real=None`` means omega = 0.
    """
    if spec.kind == "lattice":
        return assemble_lattice(spec, disc, real, bc="dirichlet")
    if disc.m < 2:
        raise MeshTooCoarse(f"m = {disc.m}: need at least 2 mesh points per unit length",
                            "assembly.assemble_box")
    if disc.d != spec.d or disc.D != spec.D:
        raise DimensionMismatch("discretization dimensions differ from the model", "assembly.assemble_box")
    omega = _check_realization(spec, real, disc.L)
    M = disc.points_per_axis
    t = _axis_positions("continuum", disc.m, 1, M, disc.width)
    pot = _node_potential(spec, disc.m, [t] * spec.d, omega, disc.L)
    hop, onsite = _kinetic(spec, disc.m)
    return _block_tridiagonal_operator(pot, hop, onsite, spec.d)


def assemble_lattice(spec: ModelSpec, disc: BoxDiscretization, real: DisorderRealization | None,
                     bc: str = "dirichlet"):
    """Lattice operator on {-L..L}^d with kinetic symbol sum_j (1 - cos theta_j)."""
    if spec.kind != "lattice":
        raise DimensionMismatch("assemble_lattice needs a lattice model", "assembly.assemble_lattice_anderson")
    if disc.d != spec.d:
        raise DimensionMismatch("discretization dimension differs from the model",
                                "assembly.assemble_lattice_anderson")
    omega = _check_realization(spec, real, disc.L)
    M = disc.width
    t = _axis_positions("lattice", 1, 0, M, M)
    pot = _node_potential(spec, 1, [t] * spec.d, omega, disc.L)
    hop, onsite = _kinetic(spec, 1)
    if bc == "dirichlet":
        return _block_tridiagonal_operator(pot, hop, onsite, spec.d)
    if bc == "periodic":
        return _dense_operator(pot, hop, onsite, spec.d, [1.0] * spec.d)
    raise ValueError(f"unknown boundary condition {bc!r}")


def assemble_lattice_anderson(d: int, law, disc: BoxDiscretization, real: DisorderRealization | None,
                              bc: str = "dirichlet"):
    """Scalar discrete Anderson model ``sum_j(1 - cos theta_j) + omega^(n)``."""
    spec = lattice_anderson(d, law)
    disc = BoxDiscretization(L=disc.L, m=1, d=d, D=1, kind="lattice")
    return assemble_lattice(spec, disc, real, bc)


def assemble_floquet_cell(spec: ModelSpec, real: DisorderRealization | None, k: int, theta, m: int = 1):
    """Operator on the supercell C_k with u(x + (2k+1) e_j) = exp(i (2k+1) theta_j) u(x).

    ``real`` must live on C_k (box half-width ``k``) and is repeated
    periodically; ``None`` gives the background operator.  The phases sit
    on the wrap-around bonds only.
    """
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    if theta.shape != (spec.d,):
        raise DimensionMismatch(f"theta must have {spec.d} components", "assembly.assemble_floquet_cell")
    P = 2 * k + 1
    if np.any(np.abs(theta) > np.pi / P * (1 + 1e-12)):
        raise ThetaOutOfZone(f"theta={theta.tolist()} outside [-pi/{P}, pi/{P}]^{spec.d}")
    if spec.kind == "continuum" and m < 2:
        raise MeshTooCoarse(f"m = {m}: need at least 2 mesh points per unit length",
                            "assembly.assemble_floquet_cell")
    omega = _check_realization(spec, real, k)
    mm = 1 if spec.kind == "lattice" else m
    count = P * mm
    t = _axis_positions(spec.kind, mm, 0, count, P)
    pot = _node_potential(spec, mm, [t] * spec.d, omega, k, periodic_cells=P)
    hop, onsite = _kinetic(spec, mm)
    phases = [np.exp(1j * P * th) for th in theta]
    return _dense_operator(pot, hop, onsite, spec.d, phases)
