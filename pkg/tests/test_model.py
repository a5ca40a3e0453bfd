import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lifshitz_lab.errors import AsymmetricW, DegenerateLaw, ModelFormatError, NegativeProfile, SubcubeViolated
from lifshitz_lab.model import (
    Bernoulli, BoxDiscretization, Discrete, ModelSpec, Uniform, constant_W, hl_matched, load_model,
    preset_models, sample_realization, save_models, site_counter, spectral_shift, validate_spec,
)


def scalar_spec(V, law=None, W=0.0):
    G = len(V)
    return ModelSpec(d=1, D=1, kind="continuum", W=np.full((G, 1, 1), W), V=np.asarray(V)[None, :],
                     nu=(law or Bernoulli(0.5, 1.0),))


def test_indicator_profile_valid():
    # 1.5 on [-1/4, 1/4] sampled at 8 cell centres
    V = np.where(np.abs(np.linspace(-7 / 16, 7 / 16, 8)) < 0.25, 1.5, 0.0)
    v = validate_spec(scalar_spec(V))
    assert v.s == (1.0,)
    assert v.disorder_nondegenerate


def test_asymmetric_W():
    W = np.zeros((4, 2, 2))
    W[1, 0, 1] = 1e-3
    spec = ModelSpec(d=1, D=2, kind="continuum", W=W, V=np.ones((2, 4)), nu=(Bernoulli(0.5),) * 2)
    with pytest.raises(AsymmetricW):
        validate_spec(spec)


def test_tiny_asymmetry_is_symmetrized():
    W = np.zeros((4, 2, 2))
    W[1, 0, 1], W[1, 1, 0] = 1.0, 1.0 + 1e-14
    spec = ModelSpec(d=1, D=2, kind="continuum", W=W, V=np.ones((2, 4)), nu=(Bernoulli(0.5),) * 2)
    v = validate_spec(spec)
    assert np.array_equal(v.W, np.swapaxes(v.W, -1, -2))


def test_subcube_violated():
    with pytest.raises(SubcubeViolated):
        validate_spec(scalar_spec(np.full(4, 0.5)))


def test_declared_subcube_checked():
    V = np.array([0.0, 2.0, 2.0, 0.0])
    ok = ModelSpec(d=1, D=1, kind="continuum", W=np.zeros((4, 1, 1)), V=V[None], nu=(Bernoulli(0.5),),
                   subcubes=(((-0.25,), (0.25,)),))
    validate_spec(ok)
    bad = ModelSpec(d=1, D=1, kind="continuum", W=np.zeros((4, 1, 1)), V=V[None], nu=(Bernoulli(0.5),),
                    subcubes=(((-0.5,), (0.0,)),))
    with pytest.raises(SubcubeViolated):
        validate_spec(bad)


def test_negative_profile():
    with pytest.raises(NegativeProfile):
        validate_spec(scalar_spec([1.5, -0.1]))


@pytest.mark.parametrize("law", [Bernoulli(0.0), Bernoulli(1.0), Discrete((0.0,), (1.0,)), Discrete((0.5, 1.0), (0.5, 0.5))])
def test_degenerate_laws(law):
    with pytest.raises(DegenerateLaw):
        validate_spec(scalar_spec([1.0], law))
    v = validate_spec(scalar_spec([1.0], law), strict=False)
    assert not v.disorder_nondegenerate


def test_uniform_and_discrete_valid():
    validate_spec(scalar_spec([1.0], Uniform(2.0)))
    v = validate_spec(scalar_spec([1.0], Discrete((0.0, 0.5, 3.0), (0.2, 0.3, 0.5))))
    assert v.s == (3.0,)


def test_sampling_bit_exact():
    spec = preset_models()["lattice-anderson-d1"]
    a = sample_realization(spec, 50, 99, 3).values
    b = sample_realization(spec, 50, 99, 3).values
    assert a.tobytes() == b.tobytes()
    assert set(np.unique(a)) <= {0.0, 1.0}
    assert not np.array_equal(a, sample_realization(spec, 50, 99, 4).values)


def test_sampling_independent_of_box():
    # a site keeps its value when the box grows: values are keyed by the site, not by its position in a loop
    spec = preset_models()["lattice-anderson-d2"]
    small = sample_realization(spec, 3, 5, 0).values[0]
    big = sample_realization(spec, 7, 5, 0).values[0]
    assert np.array_equal(small, big[4:11, 4:11])


def test_site_counter_bijective():
    pts = np.stack(np.meshgrid(np.arange(-20, 21), np.arange(-20, 21), indexing="ij"), -1).reshape(-1, 2)
    c = site_counter(pts)
    assert len(np.unique(c)) == len(c)
    assert c.max() < 41**2


def test_bernoulli_p0_all_zero():
    spec = scalar_spec([1.0], Bernoulli(0.0, 1.0))
    assert np.all(sample_realization(spec, 30, 1, 0).values == 0)


def test_uniform_mean():
    spec = scalar_spec([1.0], Uniform(1.0))
    vals = sample_realization(spec, 500_000, 2024, 0).values
    assert vals.size == 1_000_001
    assert abs(vals.mean() - 0.5) <= 0.002
    assert vals.min() >= 0 and vals.max() <= 1


def test_discrete_frequencies():
    spec = scalar_spec([1.0], Discrete((0.0, 0.5, 2.0), (0.2, 0.3, 0.5)))
    vals = sample_realization(spec, 100_000, 3, 0).values
    for atom, w in [(0.0, 0.2), (0.5, 0.3), (2.0, 0.5)]:
        assert abs(np.mean(vals == atom) - w) < 0.005


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**63), index=st.integers(0, 10**6))
def test_sampling_deterministic_property(seed, index):
    spec = preset_models()["hl-D2"]
    a = sample_realization(spec, 5, seed, index)
    b = sample_realization(spec, 5, seed, index)
    assert np.array_equal(a.values, b.values)
    assert a.values.shape == (2, 11)


def test_box_discretization():
    disc = BoxDiscretization(L=0, m=4)
    assert disc.points_per_axis == 3 and disc.h == 0.25
    assert BoxDiscretization(L=3, m=1, d=2, D=2, kind="lattice").n_sites == 2 * 49
    assert BoxDiscretization(L=100, m=20).volume == 201


def test_spectral_shift_free():
    v = validate_spec(preset_models()["free-d1"], strict=False)
    shifted, e = spectral_shift(v)
    assert abs(e) < 1e-10 and abs(shifted.shift) < 1e-10


def test_spectral_shift_constant():
    spec = ModelSpec(d=1, D=2, kind="continuum", W=constant_W(2.5 * np.eye(2)), V=np.ones((2, 1)),
                     nu=(Bernoulli(0.5),) * 2)
    shifted, e = spectral_shift(validate_spec(spec))
    assert abs(e - 2.5) < 1e-10
    assert np.max(np.abs(shifted.W)) < 1e-10


def test_spectral_shift_offdiagonal_and_idempotent():
    v = validate_spec(preset_models()["hl-D2"])
    shifted, e = spectral_shift(v)
    assert abs(e + 1) < 1e-10 and abs(shifted.shift - 1) < 1e-10
    again, e2 = spectral_shift(shifted)
    assert abs(again.shift - shifted.shift) < 1e-8 and abs(e2) < 1e-8


def test_presets():
    P = preset_models()
    for name in ["free-d1", "scalar-anderson-d1", "hl-D2", "lattice-anderson-d1", "lattice-anderson-d2"]:
        assert name in P
    free = P["free-d1"]
    assert (free.d, free.D) == (1, 1) and np.all(free.W == 0) and free.nu[0].p == 0
    hl = P["hl-D2"]
    assert hl.D == 2 and hl.kind == "continuum"
    assert np.all(hl.V == 1) and np.allclose(hl.W, hl.W[0])
    assert P["lattice-anderson-d1"].kind == "lattice"


def test_matched_family():
    assert hl_matched(1).nu[0].p == 0.5
    p = hl_matched(2).nu[0].p
    assert abs((1 - p) ** 2 - 0.5) < 1e-15


def test_json_round_trip(tmp_path):
    P = preset_models()
    path = tmp_path / "models.json"
    save_models(path, list(P.values()))
    spec, raw = load_model(f"{path}:hl-D2")
    assert np.array_equal(spec.W, P["hl-D2"].W)
    assert spec.nu == P["hl-D2"].nu
    single = tmp_path / "one.json"
    save_models(single, P["free-d1"])
    spec, _ = load_model(str(single))
    assert spec.to_dict() == P["free-d1"].to_dict()


def test_bad_model_files(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"d": 1, "D": 2, "W": {"grid": 1, "values": [[[0]]]}}))
    with pytest.raises(ModelFormatError):
        load_model(str(bad))
    with pytest.raises(ModelFormatError):
        load_model("preset:nope")
