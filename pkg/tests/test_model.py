import numpy as np
import pytest

from phdae import dcnet
from phdae.errors import DimensionMismatch
from phdae.model import (
    PhDaeParams,
    StructuralMask,
    assemble,
    initialize_params,
    load_model,
    save_model,
    unflatten,
)


def test_skew_assembly_forced():
    template = PhDaeParams.dense(2, 1)
    params = PhDaeParams(
        m_j=np.array([[1.0, 2.0], [3.0, 4.0]]), mask_j=template.mask_j,
        l_r=np.zeros((2, 2)), mask_r=template.mask_r,
        l_e=np.zeros((2, 2)), mask_e=template.mask_e,
        g=np.zeros((2, 1)), mask_g=template.mask_g,
    )
    model = assemble(params)
    assert np.array_equal(model.j, np.array([[0.0, -0.5], [0.5, 0.0]]))


def test_gram_assembly():
    template = PhDaeParams.dense(2, 1)
    params = PhDaeParams(
        m_j=np.zeros((2, 2)), mask_j=template.mask_j,
        l_r=np.diag([2.0, 0.0]), mask_r=template.mask_r,
        l_e=np.array([[1.0, 0.0], [1.0, 1.0]]), mask_e=template.mask_e,
        g=np.zeros((2, 1)), mask_g=template.mask_g,
    )
    model = assemble(params)
    assert np.array_equal(model.r, np.diag([4.0, 0.0]))
    assert np.array_equal(model.e, np.array([[1.0, 1.0], [1.0, 2.0]]))
    assert np.linalg.eigvalsh(model.e).min() > 0


def test_hamiltonian_zero_state():
    model, _ = dcnet.build_dc_network(dcnet.NOMINAL)
    assert model.hamiltonian(np.zeros(5)) == 0.0


def test_hamiltonian_dc_network_values():
    model, _ = dcnet.build_dc_network(dcnet.NOMINAL)
    # inductor only: H = L/2
    assert model.hamiltonian([1.0, 0.0, 0.0, 0.0, 0.0]) == pytest.approx(1.0)
    # capacitors only: H = (C1 + C2)/2
    assert model.hamiltonian([0.0, 1.0, 1.0, 0.0, 0.0]) == pytest.approx(0.015)


def test_output_port_and_selector():
    model, _ = dcnet.build_dc_network(dcnet.NOMINAL)
    y = model.output(np.array([0.0, 0.0, 0.0, 0.1, 0.0]))
    assert y.shape == (1,)
    assert y[0] == pytest.approx(0.1)

    assert np.array_equal(model.output(np.zeros(5)), np.zeros(1))

    selector = np.zeros((3, 5))
    selector[0, 3] = selector[1, 1] = selector[2, 2] = 1.0
    picked = model.output(np.array([0.0, 2.0, 3.0, 1.0, 0.0]), selector)
    assert np.array_equal(picked, [1.0, 2.0, 3.0])

    with pytest.raises(DimensionMismatch):
        model.output(np.zeros(4))


def test_flatten_empty_when_all_frozen():
    frozen = StructuralMask.fixed(np.zeros((2, 2)))
    params = PhDaeParams(
        m_j=np.zeros((2, 2)), mask_j=frozen,
        l_r=np.zeros((2, 2)), mask_r=frozen,
        l_e=np.eye(2), mask_e=StructuralMask.fixed(np.eye(2)),
        g=np.zeros((2, 1)), mask_g=StructuralMask.fixed(np.zeros((2, 1))),
    )
    assert params.n_theta == 0
    assert params.flatten().shape == (0,)


def test_flatten_round_trip():
    rng = np.random.default_rng(9)
    template = PhDaeParams.dense(4, 2)
    params = initialize_params(template, rng)
    theta = params.flatten()
    back = unflatten(theta, params)
    assert np.array_equal(back.flatten(), theta)
    for name in ("m_j", "l_r", "l_e", "g"):
        assert np.array_equal(getattr(back, name), getattr(params, name))


def test_dc_network_free_count():
    _, params = dcnet.build_dc_network(dcnet.NOMINAL)
    assert params.n_theta == 6


def test_structure_preserved_for_random_theta():
    rng = np.random.default_rng(42)
    template = PhDaeParams.dense(5, 2)
    for _ in range(50):
        theta = rng.standard_normal(template.n_theta)
        model = assemble(template.with_theta(theta))
        assert np.array_equal(model.j, -model.j.T)
        assert np.linalg.eigvalsh(model.r).min() >= -1e-10
        assert np.linalg.eigvalsh(model.e).min() >= -1e-10


def test_hamiltonian_nonnegative_property():
    rng = np.random.default_rng(7)
    template = PhDaeParams.dense(4, 1)
    for _ in range(10):
        model = assemble(initialize_params(template, rng))
        for _ in range(100):
            x = rng.standard_normal(4) * 10.0
            assert model.hamiltonian(x) >= -1e-12


def test_frozen_entries_survive_updates():
    _, params = dcnet.build_dc_network(dcnet.NOMINAL)
    rng = np.random.default_rng(0)
    updated = params.with_theta(rng.standard_normal(6))
    model = assemble(updated)
    assert np.array_equal(model.j, dcnet.J_TOPOLOGY)
    assert np.array_equal(model.g, dcnet.G_TOPOLOGY)
    # structural zero rows of E stay exactly zero
    assert np.array_equal(model.e[3], np.zeros(5))
    assert np.array_equal(model.e[4], np.zeros(5))
    assert np.array_equal(model.e, np.diag(model.e.diagonal()))


def test_mask_shape_validation():
    with pytest.raises(DimensionMismatch):
        StructuralMask(np.ones((2, 2), dtype=bool), np.zeros((2, 3)))


def test_serialization_round_trip(tmp_path):
    rng = np.random.default_rng(12)
    _, params = dcnet.build_dc_network(dcnet.NOMINAL)
    params = params.with_theta(rng.uniform(0.5, 1.5, 6))
    model = assemble(params)
    path = tmp_path / "model.json"
    selector = dcnet.RECOVERY_SELECTOR
    save_model(path, model, params=params, selector=selector,
               extra={"n_lag": 5})
    bundle = load_model(path)
    for name in ("e", "j", "r", "q", "g"):
        assert np.array_equal(getattr(bundle["model"], name), getattr(model, name))
    assert np.array_equal(bundle["params"].flatten(), params.flatten())
    assert np.array_equal(bundle["selector"], selector)
    assert bundle["n_lag"] == 5
    bundle["model"].validate()
