import numpy as np
import pytest
from hypothesis import given, strategies as st

from cibm import diffcore as dc
from cibm.datagen import SynthSpec, make_synthetic
from cibm.errors import ContractError, DimensionError, ValidationError
from cibm.metrics import accuracy
from cibm.model import (calibrate_intervention_percentiles, forward, init_model, intervene, load_checkpoint,
                        predict, save_checkpoint)


@pytest.fixture(scope="module")
def data():
    return make_synthetic(SynthSpec(n=1024))


def model_for(ds, mode="soft", seed=0):
    return init_model(ds.X.shape[1], ds.n_concepts, ds.n_classes, (32, 32), mode, ds.groups, seed=seed)


def test_same_seed_same_parameters(data):
    a, b = model_for(data, seed=4), model_for(data, seed=4)
    for (ka, va), (kb, vb) in zip(a.param_arrays().items(), b.param_arrays().items()):
        assert ka == kb and va.tobytes() == vb.tobytes()


def test_initial_sigma_near_one(data):
    out = forward(model_for(data), np.random.default_rng(0).standard_normal((256, data.X.shape[1])))
    assert 0.5 <= out.sigma.value.mean() <= 2.0


def test_untrained_accuracy_near_chance(data):
    accs = [accuracy(predict(model_for(data, seed=s), data.X)[1], data.Y) for s in range(5)]
    assert abs(np.mean(accs) - 1 / data.n_classes) < 0.05


def test_forward_eps_zero_gives_mu(data):
    m = model_for(data)
    out = forward(m, data.X[:10], np.zeros((10, data.n_concepts)))
    np.testing.assert_array_equal(out.c_logits.value, out.mu.value)
    np.testing.assert_array_equal(out.c_down.value, out.c_logits.value)


def test_forward_eval_deterministic(data):
    m = model_for(data)
    assert forward(m, data.X[:50]).y_logits.value.tobytes() == forward(m, data.X[:50]).y_logits.value.tobytes()


def test_hard_mode_binarizes(data):
    m = model_for(data, "hard")
    m.mu_head.W = dc.parameter(np.zeros_like(m.mu_head.W.value))
    pattern = np.where(np.arange(data.n_concepts) % 3 == 0, 1e6, -1e6)
    m.mu_head.b = dc.parameter(pattern)
    out = forward(m, data.X[:4])
    np.testing.assert_array_equal(out.c_down.value, np.tile(pattern > 0, (4, 1)).astype(float))


def test_forward_shape_errors(data):
    m = model_for(data)
    with pytest.raises(DimensionError):
        forward(m, data.X[:4, :5])
    with pytest.raises(DimensionError):
        forward(m, data.X[:4], np.zeros((3, data.n_concepts)))


def test_percentiles(data):
    m = calibrate_intervention_percentiles(model_for(data), data.X)
    lo, hi = m.intervention_percentiles.T
    assert np.all(lo <= hi)
    m.mu_head.W = dc.parameter(np.zeros_like(m.mu_head.W.value))
    m.mu_head.b = dc.parameter(np.full(data.n_concepts, 0.7))
    calibrate_intervention_percentiles(m, data.X)
    assert np.all(m.intervention_percentiles == 0.7)


def test_intervene_semantics(data):
    m = calibrate_intervention_percentiles(model_for(data), data.X)
    out = forward(m, data.X[:20])
    c = data.C[:20]
    same = intervene(out, c, [], m)
    np.testing.assert_array_equal(same.y_logits.value, out.y_logits.value)
    one = intervene(out, c, [1], m)
    cols = m.groups[1]
    lo, hi = m.intervention_percentiles[cols].T
    np.testing.assert_array_equal(one.c_down.value[:, cols], np.where(c[:, cols] > 0.5, hi, lo))
    untouched = [i for i in range(data.n_concepts) if i not in cols]
    np.testing.assert_array_equal(one.c_down.value[:, untouched], out.c_down.value[:, untouched])
    twice = intervene(one, c, [1], m)
    np.testing.assert_array_equal(twice.c_down.value, one.c_down.value)
    with pytest.raises(ValidationError):
        intervene(out, c, [99], m)


def test_full_hard_intervention_is_ground_truth(data):
    m = calibrate_intervention_percentiles(model_for(data, "hard"), data.X)
    out = intervene(forward(m, data.X[:30]), data.C[:30], list(range(len(m.groups))), m)
    np.testing.assert_array_equal(out.c_down.value, data.C[:30])


def test_soft_intervention_needs_calibration(data):
    m = model_for(data)
    with pytest.raises(ContractError):
        intervene(forward(m, data.X[:3]), data.C[:3], [0], m)


@given(st.lists(st.integers(0, 3), max_size=4))
def test_intervene_idempotent(groups):
    ds = make_synthetic(SynthSpec(n=64, d=8, k=8, g=4, kc=3))
    m = calibrate_intervention_percentiles(model_for(ds), ds.X)
    once = intervene(forward(m, ds.X), ds.C, groups, m)
    twice = intervene(once, ds.C, groups, m)
    np.testing.assert_array_equal(once.y_logits.value, twice.y_logits.value)


def test_checkpoint_round_trip(tmp_path, data):
    m = calibrate_intervention_percentiles(model_for(data, "hard", seed=2), data.X)
    path = tmp_path / "m.npz"
    save_checkpoint(m, path, {"beta": 0.5})
    back, echo = load_checkpoint(path, require_groups=True)
    assert echo == {"beta": 0.5}
    assert back.concept_mode == "hard" and back.groups == m.groups
    for (k1, v1), (k2, v2) in zip(m.param_arrays().items(), back.param_arrays().items()):
        assert k1 == k2 and v1.tobytes() == v2.tobytes()
    assert back.intervention_percentiles.tobytes() == m.intervention_percentiles.tobytes()


def test_checkpoint_without_groups(tmp_path, data):
    import json
    m = model_for(data)
    path = tmp_path / "m.npz"
    save_checkpoint(m, path)
    with np.load(path) as z:
        arrays = dict(z)
    header = json.loads(bytes(arrays["__header__"]).decode())
    header.pop("groups")
    arrays["__header__"] = np.frombuffer(json.dumps(header).encode(), dtype=np.uint8)
    np.savez(path, **arrays)
    with pytest.raises(ContractError):
        load_checkpoint(path, require_groups=True)
