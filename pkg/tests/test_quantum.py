"""
Tests for quantum fixtures in detlp/quantum.py.

Tests cover:
- Born-rule contraction against closed forms
- Singlet, GHZ and product presets
- Fixture validation and fixture documents
- CHSH oracle
"""
import math

import numpy as np
import pytest

from detlp.model import ExperimentSpec, Outcome, Setting, enumerate_outcomes, enumerate_settings
from detlp.quantum import (
    PRESET_NAMES,
    FixtureError,
    QuantumFixture,
    chsh_value,
    fixture_from_dict,
    frequencies_for,
    ghz_fixture,
    joint_probabilities,
    load_fixture,
    preset,
    product_fixture,
    random_singlet_fixture,
    singlet_fixture,
    singlet_joint_probability,
    spin_basis,
)

U, D, N = 0, 1, 2
SQRT_HALF = 1.0 / math.sqrt(2.0)


class TestSinglet:
    """Test singlet contraction and its closed form."""

    @pytest.mark.unit
    def test_equal_angles_anticorrelated(self, archetype):
        q = joint_probabilities(singlet_fixture((0.3, 1.0), (0.3, 2.0)), archetype)
        assert q.get(Setting((0, 0)), Outcome((U, U))) == pytest.approx(0.0, abs=1e-15)
        assert q.get(Setting((0, 0)), Outcome((U, D))) == pytest.approx(0.5)

    @pytest.mark.unit
    def test_opposite_angles(self):
        assert singlet_joint_probability(0.0, math.pi, 1, 1) == pytest.approx(0.5)

    @pytest.mark.unit
    def test_contraction_matches_closed_form(self, archetype):
        """Brute-force state contraction agrees with ¼(1 - ra·rb·cos(a - b))."""
        rng = np.random.default_rng(11)
        a = rng.uniform(0, 2 * math.pi, 2)
        b = rng.uniform(0, 2 * math.pi, 2)
        q = joint_probabilities(singlet_fixture(a, b), archetype)
        sign = {U: 1, D: -1}
        for s in enumerate_settings(archetype):
            for d in enumerate_outcomes(archetype, s, "detect"):
                expected = singlet_joint_probability(
                    a[s.indices[0]], b[s.indices[1]], sign[d.results[0]], sign[d.results[1]]
                )
                assert q.get(s, d) == pytest.approx(expected, abs=1e-14)

    @pytest.mark.unit
    def test_optimized_bell_values(self, optimized_bell):
        spec, q = optimized_bell
        # A1 = 0, B2 = 2π/3: P(U,U) = ¼(1 - cos 2π/3) = 3/8
        assert q.get(Setting((0, 1)), Outcome((U, U))) == pytest.approx(0.375)
        assert q.get(Setting((0, 0)), Outcome((U, U))) == pytest.approx(0.0, abs=1e-15)
        assert len(q.values) == 4
        assert all(len(row) == 4 for row in q.values.values())

    @pytest.mark.unit
    def test_spin_basis_is_unitary(self):
        u = spin_basis(1.234)
        assert np.allclose(u @ u.conj().T, np.eye(2))

    @pytest.mark.unit
    def test_random_singlet_is_seeded(self):
        f1 = random_singlet_fixture(4, seed=7)
        f2 = random_singlet_fixture(4, seed=7)
        f3 = random_singlet_fixture(4, seed=8)
        assert len(f1.bases[0]) == 4
        assert np.array_equal(f1.bases[1][3], f2.bases[1][3])
        assert not np.array_equal(f1.bases[1][3], f3.bases[1][3])


class TestGhz:
    """Test the three-observer GHZ fixture."""

    @pytest.mark.unit
    def test_xxx(self, ghz):
        spec, q = ghz
        s = Setting((0, 0, 0))
        assert q.get(s, Outcome((U, U, U))) == pytest.approx(0.25)
        assert q.get(s, Outcome((U, U, D))) == pytest.approx(0.0, abs=1e-15)

    @pytest.mark.unit
    def test_xyy_parity(self, ghz):
        spec, q = ghz
        assert q.get(Setting((0, 1, 1)), Outcome((U, U, U))) == pytest.approx(0.0, abs=1e-15)
        assert q.get(Setting((0, 1, 1)), Outcome((U, U, D))) == pytest.approx(0.25)

    @pytest.mark.unit
    def test_shape(self, ghz):
        spec, q = ghz
        assert spec.observers == ("Alice", "Bob", "Charlie")
        assert len(q.values) == 8
        assert all(len(row) == 8 for row in q.values.values())

    @pytest.mark.unit
    def test_fixture_spec_mismatch(self, archetype):
        with pytest.raises(FixtureError, match="observers"):
            joint_probabilities(ghz_fixture(), archetype)


class TestProductAndPresets:
    """Test the product fixture and the preset registry."""

    @pytest.mark.unit
    def test_product_eigenstate(self, product):
        spec, q = product
        assert q.get(Setting((0, 0)), Outcome((U, U))) == pytest.approx(1.0)
        assert q.get(Setting((1, 1)), Outcome((U, U))) == pytest.approx(0.25)

    @pytest.mark.unit
    def test_product_needs_two_angles(self):
        with pytest.raises(FixtureError):
            product_fixture(state_angles=(0.0,))

    @pytest.mark.unit
    @pytest.mark.parametrize("name", PRESET_NAMES)
    def test_every_preset_validates(self, name):
        spec, fix = preset(name)
        joint_probabilities(fix, spec).validate(spec)

    @pytest.mark.unit
    def test_unknown_preset(self):
        with pytest.raises(FixtureError, match="unknown preset"):
            preset("werner")

    @pytest.mark.unit
    def test_chsh_maximal(self):
        spec, fix = preset("chsh")
        assert chsh_value(joint_probabilities(fix, spec), spec) == pytest.approx(2 * math.sqrt(2))

    @pytest.mark.unit
    def test_chsh_local_data(self, product):
        spec, q = product
        assert chsh_value(q, spec) <= 2.0 + 1e-12

    @pytest.mark.unit
    def test_chsh_needs_archetype(self, mermin):
        spec, q = mermin
        with pytest.raises(FixtureError):
            chsh_value(q, spec)

    @pytest.mark.unit
    def test_non_coincidence_tallied_outcomes_get_zero(self, archetype):
        s = Setting((0, 0))
        outs = tuple(enumerate_outcomes(archetype, s, "detect")) + (Outcome((U, N)),)
        spec = ExperimentSpec(archetype.observers, archetype.measurements, archetype.detect_results, ((s, outs),))
        q = joint_probabilities(singlet_fixture((0, 1), (0, 2)), spec)
        assert q.get(s, Outcome((U, N))) == 0.0


class TestFixtureValidation:
    """Test QuantumFixture invariants."""

    @pytest.mark.unit
    def test_unnormalized_state(self):
        with pytest.raises(FixtureError, match="norm"):
            QuantumFixture((2, 2), np.array([1.0, 1.0, 0.0, 0.0]), ((np.eye(2),) * 2,) * 2)

    @pytest.mark.unit
    def test_non_unitary_basis(self):
        bad = np.array([[1.0, 0.0], [1.0, 0.0]])
        with pytest.raises(FixtureError, match="unitary"):
            QuantumFixture((2, 2), np.array([1.0, 0, 0, 0]), ((np.eye(2), bad), (np.eye(2), np.eye(2))))

    @pytest.mark.unit
    def test_wrong_state_length(self):
        with pytest.raises(FixtureError, match="shape"):
            QuantumFixture((2, 2), np.array([1.0, 0.0]), ((np.eye(2),) * 2,) * 2)

    @pytest.mark.unit
    def test_single_observer(self):
        with pytest.raises(FixtureError, match="at least 2 observers"):
            QuantumFixture((2,), np.array([1.0, 0.0]), ((np.eye(2),) * 2,))


class TestFixtureDocuments:
    """Test fixture documents and files."""

    @pytest.mark.unit
    def test_named_preset(self):
        spec, fix = fixture_from_dict({"preset": "mermin"})
        assert spec.k(0) == 3
        assert fix.name == "mermin"

    @pytest.mark.unit
    def test_singlet_angles(self):
        spec, fix = fixture_from_dict({"preset": "singlet", "angles": [[0, 1.0471975511965976], [0, 2.0943951023931953]]})
        _, q = frequencies_for(fix, spec)
        assert q.get(Setting((0, 1)), Outcome((U, U))) == pytest.approx(0.375)

    @pytest.mark.unit
    def test_random_singlet_document(self):
        spec, fix = fixture_from_dict({"preset": "random-singlet", "measurements": 4, "seed": 2})
        assert spec.measurements[0] == ("A1", "A2", "A3", "A4")
        assert spec.n_settings == 16

    @pytest.mark.unit
    def test_explicit_fixture(self):
        """|01⟩ measured in the computational basis: Alice U, Bob D."""
        doc = {
            "dims": [2, 2],
            "state": [0, 1, 0, 0],
            "bases": [
                [[[1, 0], [0, 1]], [[0, 1], [1, 0]]],
                [[[1, 0], [0, 1]], [[0, 1], [1, 0]]],
            ],
            "name": "basis-state",
        }
        spec, fix = fixture_from_dict(doc)
        _, q = frequencies_for(fix, spec)
        assert fix.name == "basis-state"
        assert q.get(Setting((0, 0)), Outcome((U, D))) == pytest.approx(1.0)
        assert q.get(Setting((1, 1)), Outcome((D, U))) == pytest.approx(1.0)

    @pytest.mark.unit
    def test_complex_amplitudes(self):
        doc = {
            "dims": [2, 2],
            "state": [[SQRT_HALF, 0], [0, 0], [0, 0], [0, SQRT_HALF]],
            "bases": [[[[1, 0], [0, 1]]] * 2] * 2,
        }
        spec, fix = fixture_from_dict(doc)
        assert fix.state[3] == pytest.approx(1j * SQRT_HALF)

    @pytest.mark.unit
    @pytest.mark.parametrize("doc", [
        {"dims": [2, 2]},
        {"preset": "singlet", "angles": [[0, 1]]},
        {"dims": [2, 2], "state": ["a", 0, 0, 0], "bases": []},
        {"preset": "random-singlet"},
    ])
    def test_malformed_documents(self, doc):
        with pytest.raises(FixtureError):
            fixture_from_dict(doc)

    @pytest.mark.unit
    def test_load_fixture_file(self, temp_dir):
        path = temp_dir / "fixture.json"
        path.write_text('{"preset": "ghz"}')
        spec, fix = load_fixture(str(path))
        assert fix.dims == (2, 2, 2)

    @pytest.mark.unit
    def test_load_fixture_invalid_json(self, temp_dir):
        path = temp_dir / "fixture.json"
        path.write_text("[1, 2")
        with pytest.raises(FixtureError, match="invalid JSON"):
            load_fixture(str(path))
