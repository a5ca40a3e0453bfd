"""Monte-Carlo estimation of the integrated density of states."""

from __future__ import annotations

import csv
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .assembly import assemble_box, block_direct_sum
from .errors import BudgetExceeded, SingularShift
from .floquet import periodic_counts
from .model import BoxDiscretization, ModelSpec, sample_realization, spec_hash
from .spectral import counting_profile


@dataclass(eq=False)
class IdsEstimate:
    """IDS curve with Monte-Carlo error bars.

    ``counts[r, q]`` are the raw integer counts of realization ``r`` at
    ``energies[q]``; the per-realization IDS is ``counts / normalization``
    (the box volume (2L+1)^d, or the zone-sample count times the period
    volume for periodic approximations).
    """

    energies: np.ndarray
    counts: np.ndarray
    normalization: int
    method: str = "box"
    disc: dict | None = None
    spec_hash: str = ""
    seed: int | None = None
    partial: bool = False
    meta: dict = field(default_factory=dict)

    @classmethod
    def from_counts(cls, energies, counts, normalization, **kw) -> "IdsEstimate":
        return cls(energies=np.asarray(energies, dtype=float),
                   counts=np.asarray(counts, dtype=np.int64).reshape(-1, len(energies)),
                   normalization=int(normalization), **kw)

    @property
    def n_realizations(self) -> int:
        return self.counts.shape[0]

    @property
    def per_realization(self) -> np.ndarray:
        return self.counts / self.normalization

    @property
    def mean(self) -> np.ndarray:
        # integer sum first: the reduction order cannot change the result
        return self.counts.sum(axis=0) / (self.n_realizations * self.normalization)

    @property
    def stderr(self) -> np.ndarray:
        n = self.n_realizations
        if n < 2:
            return np.zeros(self.energies.shape)
        return self.per_realization.std(axis=0, ddof=1) / np.sqrt(n)

    def to_dict(self) -> dict:
        return {
            "kind": "IdsEstimate",
            "method": self.method,
            "energies": self.energies.tolist(),
            "mean": self.mean.tolist(),
            "stderr": self.stderr.tolist(),
            "n_realizations": self.n_realizations,
            "normalization": self.normalization,
            "counts": self.counts.tolist(),
            "disc": self.disc,
            "spec_hash": self.spec_hash,
            "seed": self.seed,
            "partial": self.partial,
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "IdsEstimate":
        return cls.from_counts(
            energies=data["energies"], counts=data["counts"], normalization=data["normalization"],
            method=data.get("method", "box"), disc=data.get("disc"), spec_hash=data.get("spec_hash", ""),
            seed=data.get("seed"), partial=data.get("partial", False), meta=data.get("meta", {}),
        )

    def save_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load_json(cls, path) -> "IdsEstimate":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["E", "mean", "stderr"])
            for e, mu, se in zip(self.energies, self.mean, self.stderr):
                w.writerow([repr(float(e)), repr(float(mu)), repr(float(se))])


def _check_grid(energies) -> np.ndarray:
    energies = np.asarray(energies, dtype=float)
    if energies.ndim != 1 or energies.size == 0 or np.any(np.diff(energies) <= 0):
        raise ValueError("energy grid must be non-empty and strictly increasing")
    return energies


def _box_counts(spec: ModelSpec, disc: BoxDiscretization, energies: np.ndarray, seed: int, index: int):
    # one retry with a fresh sub-stream; dropping the realization would bias the mean
    for attempt in (0, 1):
        real = sample_realization(spec, disc, seed, index, attempt=attempt)
        A = assemble_box(spec, disc, real)
        try:
            return counting_profile(A, energies).counts
        except SingularShift:
            if attempt == 1:
                raise
    raise AssertionError("unreachable")


def _box_counts_task(args):
    return _box_counts(*args)


def _periodic_counts_task(args):
    spec, k, energies, seed, index, n_theta, m = args
    real = sample_realization(spec, k, seed, index)
    counts, _ = periodic_counts(spec, k, real, energies, n_theta, m)
    return counts


def _run_realizations(task, args_list, workers: int, time_budget: float | None):
    """Evaluate tasks in index order; returns (rows, exhausted)."""
    rows = []
    start = time.monotonic()
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for row in pool.map(task, args_list):
                rows.append(row)
                if time_budget is not None and time.monotonic() - start > time_budget:
                    pool.shutdown(cancel_futures=True)
                    return rows, True
        return rows, False
    for args in args_list:
        rows.append(task(args))
        if time_budget is not None and time.monotonic() - start > time_budget and len(rows) < len(args_list):
            return rows, True
    return rows, False


def empirical_ids(spec: ModelSpec, disc: BoxDiscretization, energies, n_realizations: int, master_seed: int,
                  workers: int = 1, time_budget: float | None = None) -> IdsEstimate:
    """Finite-box IDS ``#{lambda <= E} / (2L+1)^d`` averaged over realizations.

    Realization ``r`` uses the disorder stream ``(master_seed, r)``.  When
    ``time_budget`` (seconds) runs out, :class:`BudgetExceeded` is raised
    with the partial estimate attached.
    """
    energies = _check_grid(energies)
    if n_realizations < 1:
        raise ValueError("n_realizations must be >= 1")
    args = [(spec, disc, energies, master_seed, r) for r in range(n_realizations)]
    rows, exhausted = _run_realizations(_box_counts_task, args, workers, time_budget)
    est = IdsEstimate.from_counts(
        energies=energies, counts=np.array(rows), normalization=disc.volume, method="box",
        disc=disc.to_dict(), spec_hash=spec_hash(spec), seed=int(master_seed), partial=exhausted,
    )
    if exhausted:
        raise BudgetExceeded(f"time budget of {time_budget}s spent after {len(rows)} of "
                             f"{n_realizations} realizations", partial=est)
    return est


def periodic_ids_mc(spec: ModelSpec, k: int, energies, n_realizations: int, master_seed: int,
                    n_theta: int = 32, m: int = 8, workers: int = 1) -> IdsEstimate:
    """Average of the periodic-approximation IDS over disorder periods on C_k."""
    energies = _check_grid(energies)
    mm = 1 if spec.kind == "lattice" else m
    args = [(spec, k, energies, master_seed, r, n_theta, mm) for r in range(n_realizations)]
    rows, _ = _run_realizations(_periodic_counts_task, args, workers, None)
    return IdsEstimate.from_counts(
        energies=energies, counts=np.array(rows), normalization=n_theta**spec.d * (2 * k + 1) ** spec.d,
        method="periodic", spec_hash=spec_hash(spec), seed=int(master_seed),
        meta={"k": k, "n_theta": n_theta, "m": mm},
    )


def finite_size_study(spec: ModelSpec, Ls, E_star: float, n_realizations: int, master_seed: int,
                      m: int = 1, workers: int = 1) -> list[dict]:
    """IDS at one energy for a sequence of box sizes, with successive differences."""
    rows = []
    prev = None
    for L in Ls:
        disc = BoxDiscretization.for_spec(spec, L, m)
        est = empirical_ids(spec, disc, [E_star], n_realizations, master_seed, workers=workers)
        mean = float(est.mean[0])
        rows.append({
            "L": int(L),
            "mean": mean,
            "stderr": float(est.stderr[0]),
            "diff": None if prev is None else mean - prev,
        })
        prev = mean
    return rows


def approximation_convergence(spec: ModelSpec, ks, energies, n_realizations: int, master_seed: int,
                              reference: IdsEstimate, n_theta: int = 32, m: int = 8,
                              workers: int = 1) -> list[dict]:
    """Compare E[N_{omega,k}] with a large-box reference at each energy.

    The reference must have been computed on the same energy grid.
    """
    energies = _check_grid(energies)
    if not np.array_equal(reference.energies, energies):
        raise ValueError("reference IDS must use the same energy grid")
    rows = []
    for k in ks:
        est = periodic_ids_mc(spec, k, energies, n_realizations, master_seed, n_theta, m, workers)
        for q, e in enumerate(energies):
            rows.append({
                "k": int(k),
                "E": float(e),
                "mean": float(est.mean[q]),
                "stderr": float(est.stderr[q]),
                "reference": float(reference.mean[q]),
                "reference_stderr": float(reference.stderr[q]),
                "deviation": float(abs(est.mean[q] - reference.mean[q])),
            })
    return rows


def direct_sum_check(A, B, energies) -> bool:
    """Counting additivity N(A + B, E) = N(A, E) + N(B, E) on the grid."""
    energies = _check_grid(energies)
    S = block_direct_sum(A, B)
    total = counting_profile(S, energies).counts
    parts = counting_profile(A, energies).counts + counting_profile(B, energies).counts
    return bool(np.array_equal(total, parts))
