"""
Quantum fixtures: tallied frequencies from state vectors and measurement bases.

A fixture is a pure state on Π d_i dimensions plus, for every observer and
measurement, a unitary whose rows are the bras of the detect-results. The
Born rule gives the coincidence probabilities of each setting:

    q_sd = |⟨d| U_{s_1} ⊗ ... ⊗ U_{s_N} |ψ⟩|²

Presets:
    optimized-bell  singlet, A = (0, π/3), B = (0, 2π/3)
    chsh            singlet, A = (0, π/2), B = (π/4, 3π/4)
    mermin          singlet, A = B = (0, 2π/3, 4π/3)
    ghz             (|000⟩ + |111⟩)/√2 with X and Y measurements
    product         |U⟩ ⊗ |U⟩ with z-axis and equatorial measurements

Spin-1/2 convention: a measurement at angle θ has bras
⟨U| = (cos θ/2, sin θ/2) and ⟨D| = (-sin θ/2, cos θ/2).
"""
import json
import math
from dataclasses import dataclass
from typing import Any, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .model import (
    ExperimentSpec,
    Setting,
    SpecError,
    TalliedFrequencies,
    enumerate_outcomes,
    enumerate_settings,
    is_coincidence,
    spec_from_dict,
)

NORM_TOLERANCE = 1e-12
UNITARY_TOLERANCE = 1e-10
NEGATIVE_EPSILON = 1e-12


class FixtureError(ValueError):
    """Invalid quantum fixture or fixture file."""


@dataclass(frozen=True)
class QuantumFixture:
    """Pure state and per-(observer, measurement) measurement bases.

    Attributes:
        dims: Local dimension d_i per observer
        state: Complex amplitudes, length Π d_i, first observer most significant
        bases: bases[i][k] is a d_i x d_i unitary, row r = bra of result r
        name: Label used in reports
    """
    dims: Tuple[int, ...]
    state: np.ndarray
    bases: Tuple[Tuple[np.ndarray, ...], ...]
    name: str = "custom"

    def __post_init__(self):
        if len(self.dims) < 2:
            raise FixtureError("a fixture needs at least 2 observers")
        size = math.prod(self.dims)
        state = np.asarray(self.state, dtype=complex)
        if state.shape != (size,):
            raise FixtureError(f"state has shape {state.shape}, expected ({size},)")
        norm = float(np.linalg.norm(state))
        if abs(norm - 1.0) > NORM_TOLERANCE:
            raise FixtureError(f"state norm is {norm!r}, expected 1 within {NORM_TOLERANCE}")
        if len(self.bases) != len(self.dims):
            raise FixtureError("bases must have one entry per observer")
        for i, (d, per_obs) in enumerate(zip(self.dims, self.bases)):
            if len(per_obs) < 2:
                raise FixtureError(f"observer {i} needs at least 2 measurement bases")
            for k, u in enumerate(per_obs):
                u = np.asarray(u, dtype=complex)
                if u.shape != (d, d):
                    raise FixtureError(f"basis ({i},{k}) has shape {u.shape}, expected ({d},{d})")
                err = float(np.max(np.abs(u @ u.conj().T - np.eye(d))))
                if err > UNITARY_TOLERANCE:
                    raise FixtureError(f"basis ({i},{k}) is not unitary (max |UU†-I| = {err:.3e})")

    def matches(self, spec: ExperimentSpec) -> None:
        """Raise FixtureError unless spec has the fixture's shape with full bases."""
        if spec.n_observers != len(self.dims):
            raise FixtureError(f"spec has {spec.n_observers} observers, fixture {len(self.dims)}")
        for i, d in enumerate(self.dims):
            if spec.k(i) != len(self.bases[i]):
                raise FixtureError(
                    f"observer {spec.observers[i]}: spec has {spec.k(i)} measurements, fixture {len(self.bases[i])}"
                )
            for k in range(spec.k(i)):
                if spec.z(i, k) != d:
                    raise FixtureError(
                        f"measurement {spec.measurements[i][k]}: {spec.z(i, k)} results, fixture dimension {d}"
                    )


def joint_probabilities(fix: QuantumFixture, spec: ExperimentSpec) -> TalliedFrequencies:
    """Born-rule frequencies on each tallied set; non-coincidence outcomes get 0."""
    fix.matches(spec)
    psi = np.asarray(fix.state, dtype=complex)
    values = {}
    for s in enumerate_settings(spec):
        u = np.asarray(fix.bases[0][s.indices[0]], dtype=complex)
        for i in range(1, spec.n_observers):
            u = np.kron(u, np.asarray(fix.bases[i][s.indices[i]], dtype=complex))
        p = np.abs(u @ psi) ** 2
        if p.min() < -NEGATIVE_EPSILON:
            raise FixtureError(f"negative probability {p.min()!r}")
        p = np.clip(p, 0.0, 1.0)
        row = {}
        for d in enumerate_outcomes(spec, s, "tallied"):
            if is_coincidence(spec, s, d):
                flat = 0
                for i, res in enumerate(d.results):
                    flat = flat * fix.dims[i] + res
                row[d] = float(p[flat])
            else:
                row[d] = 0.0
        values[s] = row
    q = TalliedFrequencies(values)
    q.validate(spec)
    return q


def spin_basis(theta: float) -> np.ndarray:
    """Spin measurement at angle theta in the x-z plane; rows are ⟨U| and ⟨D|."""
    c, s = math.cos(theta / 2.0), math.sin(theta / 2.0)
    return np.array([[c, s], [-s, c]], dtype=complex)


def singlet_fixture(
    angles_a: Sequence[float], angles_b: Sequence[float], name: str = "singlet"
) -> QuantumFixture:
    """Two-qubit singlet (|01⟩ - |10⟩)/√2 measured at the given analyzer angles."""
    if len(angles_a) < 2 or len(angles_b) < 2:
        raise FixtureError("singlet fixture needs at least 2 angles per side")
    state = np.array([0.0, 1.0, -1.0, 0.0], dtype=complex) / math.sqrt(2.0)
    bases = (
        tuple(spin_basis(a) for a in angles_a),
        tuple(spin_basis(b) for b in angles_b),
    )
    return QuantumFixture((2, 2), state, bases, name)


def singlet_joint_probability(a: float, b: float, ra: int, rb: int) -> float:
    """Closed form P(ra, rb) for the singlet; ra, rb ∈ {+1 (U), -1 (D)}."""
    return 0.25 * (1.0 - ra * rb * math.cos(a - b))


def ghz_basis(phi: float) -> np.ndarray:
    """Equatorial qubit measurement: ⟨U| = (1, e^{-iφ})/√2, ⟨D| = (1, -e^{-iφ})/√2."""
    e = np.exp(-1j * phi)
    return np.array([[1.0, e], [1.0, -e]], dtype=complex) / math.sqrt(2.0)


def ghz_fixture() -> QuantumFixture:
    """(|000⟩ + |111⟩)/√2; measurement 1 is X (φ = 0), measurement 2 is Y (φ = π/2)."""
    state = np.zeros(8, dtype=complex)
    state[0] = state[7] = 1.0 / math.sqrt(2.0)
    per_obs = (ghz_basis(0.0), ghz_basis(math.pi / 2.0))
    return QuantumFixture((2, 2, 2), state, (per_obs, per_obs, per_obs), "ghz")


def product_fixture(
    state_angles: Sequence[float] = (0.0, 0.0),
    angles_a: Sequence[float] = (0.0, math.pi / 2.0),
    angles_b: Sequence[float] = (0.0, math.pi / 2.0),
    name: str = "product",
) -> QuantumFixture:
    """Product of spin-up states along state_angles; LR-explainable with perfect detection."""
    factors = [spin_basis(t)[0].conj() for t in state_angles]
    if len(factors) != 2:
        raise FixtureError("product fixture takes one state angle per observer (2 observers)")
    state = np.kron(factors[0], factors[1])
    bases = (
        tuple(spin_basis(a) for a in angles_a),
        tuple(spin_basis(b) for b in angles_b),
    )
    return QuantumFixture((2, 2), state, bases, name)


def random_singlet_fixture(n_measurements: int, seed: int = 0) -> QuantumFixture:
    """Singlet with n_measurements uniformly random analyzer angles per side."""
    rng = np.random.default_rng(seed)
    a = rng.uniform(0.0, 2.0 * math.pi, n_measurements)
    b = rng.uniform(0.0, 2.0 * math.pi, n_measurements)
    return singlet_fixture(a.tolist(), b.tolist(), name=f"random-singlet-k{n_measurements}-s{seed}")


def correlator(spec: ExperimentSpec, q: TalliedFrequencies, s_indices: Tuple[int, int]) -> float:
    """E = Σ r_a r_b q for a two-observer, two-result setting (U = +1, D = -1)."""
    row = q.values[Setting(tuple(s_indices))]
    e = 0.0
    for d, p in row.items():
        if len(d.results) != 2 or max(d.results) > 1:
            continue
        e += (1 - 2 * d.results[0]) * (1 - 2 * d.results[1]) * p
    return e


def chsh_value(q: TalliedFrequencies, spec: ExperimentSpec) -> float:
    """Largest |S| over the four CHSH sign placements (2 for LR, 2√2 at most)."""
    if spec.n_observers != 2 or spec.k(0) != 2 or spec.k(1) != 2:
        raise FixtureError("CHSH needs 2 observers with 2 measurements each")
    e = [[correlator(spec, q, (a, b)) for b in range(2)] for a in range(2)]
    total = sum(sum(row) for row in e)
    return max(abs(total - 2.0 * e[a][b]) for a in range(2) for b in range(2))


PRESET_NAMES = ("optimized-bell", "chsh", "mermin", "ghz", "product")


def preset(name: str) -> Tuple[ExperimentSpec, QuantumFixture]:
    """Spec and fixture of a named preset."""
    if name == "optimized-bell":
        fix = singlet_fixture((0.0, math.pi / 3.0), (0.0, 2.0 * math.pi / 3.0), name)
    elif name == "chsh":
        fix = singlet_fixture((0.0, math.pi / 2.0), (math.pi / 4.0, 3.0 * math.pi / 4.0), name)
    elif name == "mermin":
        angles = (0.0, 2.0 * math.pi / 3.0, 4.0 * math.pi / 3.0)
        fix = singlet_fixture(angles, angles, name)
    elif name == "ghz":
        fix = ghz_fixture()
    elif name == "product":
        fix = product_fixture()
    else:
        raise FixtureError(f"unknown preset {name!r}; expected one of {list(PRESET_NAMES)}")
    spec = ExperimentSpec.uniform(len(fix.dims), len(fix.bases[0]))
    return spec, fix


def _complex(value: Any, what: str) -> complex:
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return complex(value, 0.0)
    if isinstance(value, (list, tuple)) and len(value) == 2:
        return complex(float(value[0]), float(value[1]))
    raise FixtureError(f"{what}: expected a number or [re, im] pair, got {value!r}")


def _default_results(d: int) -> Tuple[str, ...]:
    return ("U", "D") if d == 2 else tuple(f"R{r + 1}" for r in range(d))


def fixture_from_dict(doc: Mapping[str, Any]) -> Tuple[ExperimentSpec, QuantumFixture]:
    """Parse a fixture document.

    Either a preset:
        {"preset": "optimized-bell"}
        {"preset": "singlet", "angles": [[0, 1.0471975511965976], [0, 2.0943951023931953]]}
        {"preset": "random-singlet", "measurements": 4, "seed": 7}
    or an explicit fixture:
        {"dims": [2, 2], "state": [[0, 0], [0.7071, 0], ...],
         "bases": [[[[1, 0], [0, 0]], [[0, 0], [1, 0]]], ...], "spec": {...}}
    """
    try:
        if "preset" in doc:
            name = doc["preset"]
            if name == "singlet":
                angles = doc["angles"]
                if len(angles) != 2:
                    raise FixtureError("singlet preset needs 'angles' for exactly 2 observers")
                fix = singlet_fixture([float(a) for a in angles[0]], [float(b) for b in angles[1]])
                spec = None
            elif name == "random-singlet":
                fix = random_singlet_fixture(int(doc["measurements"]), int(doc.get("seed", 0)))
                spec = None
            elif name == "product" and ("state_angles" in doc or "angles" in doc):
                angles = doc.get("angles", [[0.0, math.pi / 2.0], [0.0, math.pi / 2.0]])
                fix = product_fixture(
                    [float(t) for t in doc.get("state_angles", [0.0, 0.0])],
                    [float(a) for a in angles[0]],
                    [float(b) for b in angles[1]],
                )
                spec = None
            else:
                spec, fix = preset(name)
        else:
            dims = tuple(int(d) for d in doc["dims"])
            state = np.array([_complex(a, "state") for a in doc["state"]], dtype=complex)
            bases = tuple(
                tuple(
                    np.array([[_complex(z, "basis") for z in row] for row in matrix], dtype=complex)
                    for matrix in per_obs
                )
                for per_obs in doc["bases"]
            )
            fix = QuantumFixture(dims, state, bases, str(doc.get("name", "custom")))
            spec = None
    except (KeyError, TypeError, IndexError) as e:
        raise FixtureError(f"malformed fixture document: {type(e).__name__} {e}") from None
    if "spec" in doc:
        try:
            spec = spec_from_dict(doc["spec"])
        except SpecError as e:
            raise FixtureError(f"embedded spec: {e}") from None
    if spec is None:
        spec = _spec_for(fix)
    fix.matches(spec)
    return spec, fix


def _spec_for(fix: QuantumFixture) -> ExperimentSpec:
    base = ExperimentSpec.uniform(len(fix.dims), 2)
    measurements = tuple(
        tuple(f"{name[0]}{k + 1}" for k in range(len(fix.bases[i])))
        for i, name in enumerate(base.observers)
    )
    detect = tuple(
        tuple(_default_results(d) for _ in fix.bases[i]) for i, d in enumerate(fix.dims)
    )
    return ExperimentSpec(base.observers, measurements, detect)


def load_fixture(source: Union[str, Mapping[str, Any]]) -> Tuple[ExperimentSpec, QuantumFixture]:
    """Load a fixture from a JSON file path or an already parsed document."""
    if isinstance(source, Mapping):
        return fixture_from_dict(source)
    with open(source, "r") as fp:
        try:
            doc = json.load(fp)
        except json.JSONDecodeError as e:
            raise FixtureError(f"{source}: invalid JSON ({e})") from None
    if not isinstance(doc, dict):
        raise FixtureError(f"{source}: fixture must be a JSON object")
    return fixture_from_dict(doc)


def preset_frequencies(name: str) -> Tuple[ExperimentSpec, TalliedFrequencies]:
    spec, fix = preset(name)
    return spec, joint_probabilities(fix, spec)


def frequencies_for(fix: QuantumFixture, spec: Optional[ExperimentSpec] = None) -> Tuple[ExperimentSpec, TalliedFrequencies]:
    spec = spec or _spec_for(fix)
    return spec, joint_probabilities(fix, spec)
