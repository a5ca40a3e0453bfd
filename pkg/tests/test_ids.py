import numpy as np
import pytest

from conftest import random_block_tridiagonal
from lifshitz_lab.assembly import SymmetricOperatorMatrix, assemble_box
from lifshitz_lab.errors import BudgetExceeded
from lifshitz_lab.ids import (
    IdsEstimate, approximation_convergence, direct_sum_check, empirical_ids, finite_size_study, periodic_ids_mc,
)
from lifshitz_lab.model import (
    Bernoulli, BoxDiscretization, Discrete, ModelSpec, hl_model, lattice_anderson, preset_models,
    sample_realization,
)
from lifshitz_lab.spectral import counting_profile


def free_continuum(D=1):
    return ModelSpec(d=1, D=D, kind="continuum", W=np.zeros((1, D, D)), V=np.ones((D, 1)),
                     nu=(Bernoulli(0.0),) * D)


def test_weyl_small():
    E = np.linspace(0.5, 4, 20)
    est = empirical_ids(free_continuum(), BoxDiscretization(L=40, m=12), E, 1, 0)
    assert np.max(np.abs(est.mean - np.sqrt(E) / np.pi)) <= 0.03
    assert np.all(est.stderr == 0)


def test_fiber_doubling_exact():
    E = np.linspace(0.5, 4, 11)
    one = empirical_ids(free_continuum(1), BoxDiscretization(L=20, m=8), E, 1, 3)
    two = empirical_ids(free_continuum(2), BoxDiscretization(L=20, m=8, D=2), E, 1, 3)
    assert np.array_equal(two.counts, 2 * one.counts)


def test_disorder_monotone_per_realization():
    E = np.linspace(0.1, 3, 15)
    disc = BoxDiscretization(L=15, m=6)
    full = hl_model(1, W=[[0.0]], p=1.0)
    empty = hl_model(1, W=[[0.0]], p=0.0)
    hi = empirical_ids(full, disc, E, 2, 9)
    lo = empirical_ids(empty, disc, E, 2, 9)
    assert np.all(hi.counts <= lo.counts)
    spec = preset_models()["scalar-anderson-d1"]
    real = sample_realization(spec, disc, 4, 0)
    raised = type(real)(L=real.L, d=1, values=np.ones_like(real.values), master_seed=0, realization_index=0)
    a = counting_profile(assemble_box(spec, disc, real), E).counts
    b = counting_profile(assemble_box(spec, disc, raised), E).counts
    assert np.all(b <= a)


def test_lattice_volume_normalization():
    spec = preset_models()["lattice-anderson-d1"]
    est = empirical_ids(spec, BoxDiscretization.for_spec(spec, 30), [0.5, 5.0], 3, 1)
    assert est.mean[-1] == 1.0
    spec2 = ModelSpec(d=1, D=2, kind="lattice", W=np.zeros((1, 2, 2)), V=np.ones((2, 1)),
                      nu=(Bernoulli(0.5),) * 2)
    est2 = empirical_ids(spec2, BoxDiscretization.for_spec(spec2, 10), [10.0], 2, 1)
    assert est2.mean[0] == 2.0


def test_mean_monotone_and_stderr():
    spec = preset_models()["lattice-anderson-d1"]
    E = np.linspace(0.01, 2.5, 30)
    est = empirical_ids(spec, BoxDiscretization.for_spec(spec, 100), E, 8, 5)
    assert np.all(np.diff(est.mean) >= 0)
    assert np.all(est.stderr >= 0) and np.any(est.stderr > 0)
    const = lattice_anderson(1, Discrete((0.5,), (1.0,)))
    c = empirical_ids(const, BoxDiscretization.for_spec(const, 20), E, 4, 5)
    assert np.all(c.stderr == 0)


def test_stderr_clt_scaling():
    spec = preset_models()["lattice-anderson-d1"]
    disc = BoxDiscretization.for_spec(spec, 50)
    a = empirical_ids(spec, disc, [0.3], 40, 21).stderr[0]
    b = empirical_ids(spec, disc, [0.3], 160, 21).stderr[0]
    assert 1.4 < a / b < 2.8


def test_seed_stability_across_workers():
    spec = preset_models()["hl-D2"]
    disc = BoxDiscretization(L=10, m=4, D=2)
    E = np.linspace(0.2, 3, 7)
    a = empirical_ids(spec, disc, E, 4, 77, workers=1)
    b = empirical_ids(spec, disc, E, 4, 77, workers=2)
    assert a.counts.tobytes() == b.counts.tobytes()
    assert a.mean.tobytes() == b.mean.tobytes()


def test_budget_exceeded_returns_partial():
    spec = preset_models()["lattice-anderson-d1"]
    with pytest.raises(BudgetExceeded) as exc:
        empirical_ids(spec, BoxDiscretization.for_spec(spec, 2000), [0.5], 50, 1, time_budget=1e-9)
    part = exc.value.partial
    assert part.partial and 1 <= part.n_realizations < 50
    assert exc.value.exit_status == 3


def test_json_round_trip(tmp_path):
    spec = preset_models()["lattice-anderson-d1"]
    est = empirical_ids(spec, BoxDiscretization.for_spec(spec, 20), [0.2, 0.9], 3, 2)
    path = tmp_path / "ids.json"
    est.save_json(path)
    back = IdsEstimate.load_json(path)
    assert np.array_equal(back.counts, est.counts) and back.seed == 2 and back.spec_hash == est.spec_hash
    est.write_csv(tmp_path / "ids.csv")
    assert (tmp_path / "ids.csv").read_text().splitlines()[0] == "E,mean,stderr"


def _free_fd_count(L, m, E):
    M = m * (2 * L + 1) - 1
    h = 1.0 / m
    j = np.arange(1, M + 1)
    return int(np.sum(4 / h**2 * np.sin(j * np.pi / (2 * (M + 1))) ** 2 <= E))


def test_finite_size_free():
    # the free count is a staircase in E, so the error at one E oscillates;
    # its supremum over an energy window decays like 1/(2L+1)
    spec = free_continuum()
    Ls, m = [25, 50, 100], 16
    sup_err = []
    for E in np.linspace(1.5, 2.0, 12):
        rows = finite_size_study(spec, Ls, E, 1, 0, m=m)
        for r in rows:
            assert r["mean"] == _free_fd_count(r["L"], m, E) / (2 * r["L"] + 1)
        sup_err.append([abs(r["mean"] - np.sqrt(E) / np.pi) for r in rows])
    sup_err = np.max(sup_err, axis=0)
    assert sup_err[0] > sup_err[1] > sup_err[2]
    assert np.all(sup_err <= 1.0 / (2 * np.array(Ls) + 1) + 2e-3)
    assert rows[0]["diff"] is None and rows[1]["diff"] == rows[1]["mean"] - rows[0]["mean"]
    single = finite_size_study(spec, [10], 1.7, 1, 0, m=8)
    assert len(single) == 1 and single[0]["diff"] is None


def test_convergence_constant_disorder():
    spec = lattice_anderson(1, Discrete((0.25,), (1.0,)))
    E = np.array([0.3, 0.9, 1.5])
    ref = empirical_ids(spec, BoxDiscretization.for_spec(spec, 200), E, 1, 0)
    rows = approximation_convergence(spec, [1, 2, 4], E, 2, 0, ref, n_theta=45)
    by_k = {k: [r["mean"] for r in rows if r["k"] == k] for k in (1, 2, 4)}
    # identical operator for every k: only the zone quadrature differs
    assert np.max(np.abs(np.subtract(by_k[1], by_k[4]))) <= 2 / 45


def test_convergence_free_deviation():
    spec = lattice_anderson(1, Bernoulli(0.0))
    E = np.array([0.2, 0.6, 1.0, 1.4])
    ref = empirical_ids(spec, BoxDiscretization.for_spec(spec, 2000), E, 1, 0)
    rows = approximation_convergence(spec, [2, 4], E, 1, 0, ref, n_theta=32)
    assert max(r["deviation"] for r in rows) < 0.01


def test_periodic_mc_reproducible():
    spec = preset_models()["lattice-anderson-d1"]
    a = periodic_ids_mc(spec, 2, [0.3, 1.0], 5, 4, n_theta=16)
    b = periodic_ids_mc(spec, 2, [0.3, 1.0], 5, 4, n_theta=16)
    assert a.counts.tobytes() == b.counts.tobytes() and a.normalization == 16 * 5


def test_direct_sum_examples(rng):
    A = SymmetricOperatorMatrix.from_dense(np.array([[1.0]]))
    B = SymmetricOperatorMatrix.from_dense(np.array([[2.0]]))
    assert direct_sum_check(A, B, [1.5])
    assert counting_profile(A, [1.5]).counts[0] == 1 and counting_profile(B, [1.5]).counts[0] == 0
    X = random_block_tridiagonal(rng, 1, 50)
    Y = random_block_tridiagonal(rng, 1, 50)
    E = np.linspace(-4, 4, 40)
    assert direct_sum_check(X, Y, E)
    assert np.array_equal(counting_profile(X, E).counts + counting_profile(Y, E).counts,
                          [(np.linalg.eigvalsh(X.to_dense()) < e + 1e-11).sum()
                           + (np.linalg.eigvalsh(Y.to_dense()) < e + 1e-11).sum() for e in E])
    assert direct_sum_check(X, X, E)
