"""Tests for the Jones-calculus network simulator and the setting compilers"""

import json
import math
from dataclasses import replace

import numpy as np
import pytest

import optics
from qstate import product_mub_basis, computational_basis, unbiasedness
from optics import (
    ModeState, HWP, HWPArray, BD, PBS, SLMPhase, PostSelectH, Network,
    hwp_jones, transfer_matrix, is_lossless_unitary, realized_basis,
    build_source_array, source_intensities, beam_positions_mm,
    intensity_regulator_network, intensity_regulator_transmission, regulator_phase_for,
    compile_subspace, configure_projector, subspace_network, projector_amplitudes,
    verify_subspace_setting, verify_all_subspaces, render_table, column_names,
    compile_mub_network, NetworkCompiler, simulate,
)
from utils import (
    InvalidDimensionError, InvalidParameterError, InvalidPairError, LayoutError, ValidationError,
)


def test_half_wave_plate_matrices():
    assert np.array_equal(hwp_jones(0.0), np.array([[1, 0], [0, -1]]))
    assert np.array_equal(hwp_jones(45.0), np.array([[0, 1], [1, 0]]))
    out = hwp_jones(22.5) @ np.array([1.0, 0.0])
    assert np.allclose(out, [1 / math.sqrt(2), 1 / math.sqrt(2)], atol=1e-15)
    with pytest.raises(InvalidParameterError):
        HWP(180.0)


def test_empty_network_is_identity():
    state = ModeState({((0, 0), "V"): 0.6, ((0, 1), "H"): 0.8j})
    out = Network((), [(0, 0), (0, 1)]).simulate(state)
    assert out.amplitudes == state.amplitudes


def test_beam_displacer_moves_vertical_light_only():
    state = ModeState({((0, 4), "H"): 0.6, ((0, 4), "V"): 0.8})
    out = Network((BD((0, -2)),), [(0, 4)]).simulate(state)
    assert out.amplitude((0, 4), "H") == 0.6
    assert out.amplitude((0, 2), "V") == 0.8
    assert out.amplitude((0, 4), "V") == 0.0
    with pytest.raises(InvalidParameterError):
        BD((0, 0))


def test_mode_state_rejects_excess_norm():
    with pytest.raises(ValidationError):
        ModeState({((0, 0), "H"): 1.0, ((0, 1), "H"): 0.5})
    with pytest.raises(ValidationError):
        ModeState({((0, 0), "D"): 1.0})


def test_stray_input_port_is_a_layout_error():
    network = Network((HWP(45.0),), [(0, 0)])
    with pytest.raises(LayoutError):
        network.simulate(ModeState.single((0, 1)))


def test_undeclared_output_port_is_a_layout_error():
    network = Network((HWP(45.0), BD((0, 1))), [(0, 0)], output_ports=[(0, 0)])
    with pytest.raises(LayoutError):
        network.simulate(ModeState.single((0, 0)))


def test_pbs_collision_is_a_layout_error():
    r = 1 / math.sqrt(2)
    state = ModeState({((0, 0), "V"): r, ((0, 1), "V"): r})
    network = Network((PBS({(0, 0): (0, 1)}),), [(0, 0), (0, 1)])
    with pytest.raises(LayoutError):
        network.simulate(state)


@pytest.mark.parametrize("phi", [0.0, 0.3, math.pi / 2, 2.0, math.pi])
def test_intensity_regulator_amplitude(phi):
    out = intensity_regulator_network(phi).simulate(ModeState.single((0, 0)))
    assert abs(out.amplitude((0, 0), "H") - (1 - np.exp(1j * phi)) / 2) < 1e-12
    assert abs(out.intensity((0, 0)) - intensity_regulator_transmission(phi)) < 1e-12


def test_regulator_phase_for_transmission():
    assert np.isclose(intensity_regulator_transmission(math.pi / 2), 0.5)
    for t in (0.0, 0.25, 0.9, 1.0):
        assert np.isclose(intensity_regulator_transmission(regulator_phase_for(t)), t, atol=1e-12)
    with pytest.raises(InvalidParameterError):
        regulator_phase_for(1.2)


def test_source_array_two_beams():
    network = build_source_array(2)
    intensities = source_intensities(network)
    assert sorted(intensities) == [(0, 0), (0, 2)]
    assert all(abs(v - 0.5) < 1e-12 for v in intensities.values())


def test_source_array_32_beams():
    network = build_source_array(32)
    intensities = source_intensities(network)
    assert len(intensities) == 32
    assert all(abs(v - 1 / 32) < 1e-12 for v in intensities.values())
    rows = sorted({p[0] for p in intensities})
    cols = sorted({p[1] for p in intensities})
    assert rows == [0, 2, 4, 6]
    assert cols == list(range(0, 16, 2))
    assert is_lossless_unitary(network)
    assert beam_positions_mm(network)[(2, 4)] == (2.0, 4.0)


@pytest.mark.parametrize("d", [3, 64, 1])
def test_source_array_rejects_unsupported_sizes(d):
    with pytest.raises(InvalidDimensionError):
        build_source_array(d)


def test_lossy_elements_scale_intensity():
    lossless = intensity_regulator_network(math.pi)
    lossy = replace(lossless, loss=0.1)
    out = lossy.simulate(ModeState.single((0, 0)))
    assert np.isclose(out.intensity((0, 0)), 0.9 ** 10, atol=1e-12)
    assert not lossy.lossless


def test_subspace_roles_for_adjacent_paths():
    setting = compile_subspace(0, 1, 32)
    assert setting.roles == {
        "HWPA2": "SSM", "HWPA3": "HWP@0°", "HWPA4": "HWP@0°", "HWPA5": "HWP@0°", "HWP1": "HWP@45°",
    }


def test_subspace_roles_for_paths_0_2():
    setting = compile_subspace(0, 2, 32)
    assert setting.roles["HWPA2"] in ("θ2@0°", "θ3@0°")
    assert setting.roles["HWPA3"] == "SSM"
    assert [setting.roles[c] for c in ("HWPA4", "HWPA5", "HWP1")] == ["HWP@0°", "HWP@0°", "HWP@45°"]


def test_subspace_roles_for_paths_0_31():
    setting = compile_subspace(0, 31, 32)
    assert [setting.roles[c] for c in column_names(5)] == ["HWP@0°"] * 4 + ["SSM"]
    assert setting.output_pol == "H"


@pytest.mark.parametrize("pair", [(0, 1), (0, 2), (0, 31), (5, 26), (30, 31)])
def test_compiled_settings_pass_verification(pair):
    report = verify_subspace_setting(compile_subspace(*pair, 32))
    assert report["passed"], report["failures"]
    assert report["max_leakage"] < 1e-9
    assert report["max_probability_error"] < 1e-9


@pytest.mark.parametrize("d", [2, 4, 8, 16])
def test_every_pair_verifies(d):
    summary = verify_all_subspaces(d)
    assert summary["passed"]
    assert summary["n_pairs"] == d * (d - 1) // 2


@pytest.mark.slow
def test_every_pair_verifies_at_d32():
    summary = verify_all_subspaces(32)
    assert summary["n_pairs"] == 496
    assert summary["passed"], summary["failures"][:3]
    assert summary["max_leakage"] < 1e-9


def test_wrong_merge_stage_is_reported_as_routing_failure():
    setting = compile_subspace(0, 2, 8)
    broken = replace(setting, ssm_stage=0)
    report = verify_subspace_setting(broken)
    assert not report["passed"]
    assert any(f.startswith("routing") for f in report["failures"])


@pytest.mark.parametrize("basis,sign", [("X", 1), ("X", -1), ("Y", 1), ("Y", -1)])
def test_projector_settings(basis, sign):
    alpha, beta = projector_amplitudes(basis, sign)
    setting = compile_subspace(3, 12, 16, alpha, beta)
    assert verify_subspace_setting(setting)["passed"]


def test_projector_detects_superposition_with_certainty():
    setting = compile_subspace(0, 1, 4)
    r = 1 / math.sqrt(2)
    out = subspace_network(setting).simulate(ModeState({((0, 0), "H"): r, ((0, 1), "H"): r}))
    assert abs(abs(out.amplitude(setting.detect_port, "H")) ** 2 - 1.0) < 1e-12

    orthogonal = subspace_network(setting).simulate(ModeState({((0, 0), "H"): r, ((0, 1), "H"): -r}))
    assert abs(orthogonal.amplitude(setting.detect_port, "H")) < 1e-12


def test_random_projector_reconfiguration():
    setting = compile_subspace(2, 7, 8)
    report = verify_subspace_setting(setting, alpha=0.3 + 0.4j, beta=-0.5j)
    assert report["passed"]
    retuned = configure_projector(setting, 1.0, 0.0)
    assert np.isclose(retuned.ssm_angle % 90.0, 0.0) or np.isclose(retuned.ssm_angle % 90.0, 45.0)


def test_invalid_pairs():
    with pytest.raises(InvalidPairError):
        compile_subspace(5, 5, 8)
    with pytest.raises(InvalidPairError):
        compile_subspace(2, 8, 8)
    with pytest.raises(InvalidDimensionError):
        compile_subspace(0, 1, 6)


def test_render_table_lists_roles():
    text = render_table([compile_subspace(0, 1, 8), compile_subspace(0, 7, 8)])
    assert "Subspace" in text and "HWPA2" in text and "HWP1" in text
    assert "(0,7)" in text and "SSM" in text


def test_subspace_prefix_is_lossless():
    setting = compile_subspace(1, 6, 8)
    assert is_lossless_unitary(subspace_network(setting, prefix_only=True))


@pytest.mark.parametrize("n", [1, 2, 3, 4, 5])
def test_mub_network_realizes_product_basis(n):
    network = compile_mub_network(n)
    assert is_lossless_unitary(network)
    realized = realized_basis(network)
    target = product_mub_basis(n)
    overlaps = np.abs(np.sum(target.vectors.conj() * realized.vectors, axis=1))
    assert np.allclose(overlaps, 1.0, atol=1e-10)
    assert unbiasedness(computational_basis(2 ** n), realized) < 1e-10


def test_mub_network_with_zero_analyzer_measures_computational_basis():
    network = compile_mub_network(3, analyzer_angle=0.0)
    realized = realized_basis(network)
    assert np.allclose(np.abs(realized.vectors), np.eye(8), atol=1e-12)


def test_mub_phase_profile_stays_unbiased():
    n = 3
    phases = np.linspace(0.0, 2.0, 8)
    realized = realized_basis(compile_mub_network(n, phase_profile=phases))
    expected = product_mub_basis(n).vectors * np.exp(-1j * phases)[None, :]
    assert np.allclose(realized.vectors, expected, atol=1e-12)
    assert unbiasedness(computational_basis(8), realized) < 1e-10


def test_mub_network_bounds():
    with pytest.raises(InvalidDimensionError):
        compile_mub_network(0)
    with pytest.raises(InvalidDimensionError):
        compile_mub_network(7)


def test_network_json_round_trip():
    network = compile_mub_network(2, phase_profile=[0.0, 0.5, 1.0, 1.5])
    restored = Network.from_dict(json.loads(json.dumps(network.to_dict())))
    original, _ = transfer_matrix(network)
    again, _ = transfer_matrix(restored)
    assert np.allclose(original, again, atol=1e-15)
    assert [e.kind for e in restored.elements] == [e.kind for e in network.elements]


def test_slm_and_postselection_elements():
    fields = {(0, 0): np.array([[0.6], [0.8]], dtype=complex)}
    shifted = SLMPhase({(0, 0): math.pi}).apply(fields)
    assert np.allclose(shifted[(0, 0)][:, 0], [0.6, -0.8])
    kept = PostSelectH().apply(fields)
    assert np.allclose(kept[(0, 0)][:, 0], [0.6, 0.0])
    swapped = HWPArray({(0, 0): 45.0}).apply(fields)
    assert np.allclose(swapped[(0, 0)][:, 0], [0.8, 0.6])


def test_compiler_handler_reports():
    compiler = NetworkCompiler(n_random=2, seed=3)
    settings, reports = compiler.compile_pairs([(0, 1), (1, 2)], 4)
    assert len(settings) == 2 and all(r["passed"] for r in reports)
    network, report = compiler.compile_mub(2)
    assert report["passed"] and report["unitary"]
    assert network.output_ports == ((0, 0), (0, 1), (0, 2), (0, 3))


def test_compiler_checks_phase_profiled_mub_network():
    compiler = NetworkCompiler()
    phases = np.linspace(0.0, 2.0, 8)
    _, report = compiler.compile_mub(3, phase_profile=phases)
    assert report["passed"] and report["basis_deviation"] < 1e-10
    _, report = compiler.compile_mub(3, phase_profile=phases, analyzer_angle=0.0)
    assert report["passed"]


def test_compiler_fails_network_missing_its_phase_profile(monkeypatch):
    build = optics.compile_mub_network
    monkeypatch.setattr(optics, "compile_mub_network", lambda n, phases, angle: build(n, None, angle))
    _, report = NetworkCompiler().compile_mub(3, phase_profile=np.linspace(0.0, 2.0, 8))
    assert report["unitary"]
    assert report["basis_deviation"] > 0.1
    assert not report["passed"]


def test_compiler_rejects_unsupported_analyzer_angle():
    with pytest.raises(InvalidParameterError):
        NetworkCompiler().compile_mub(3, phase_profile=np.zeros(8), analyzer_angle=10.0)


def test_module_level_simulate_matches_network_method():
    network = build_source_array(4)
    state = ModeState.single((0, 0))
    assert simulate(network, state).amplitudes == network.simulate(state).amplitudes
