"""
Experiment schema and combinatorial enumeration.

An EPR experiment is described by its observers, the measurements each
observer can choose and the detect-results of each measurement. The
no-detect result ``N`` is implicit and always sorts last. From that schema
this module derives:

- settings (one measurement per observer), in lexicographic order
- outcomes of a setting (all, detect-only, or tallied)
- categories: one result for every (observer, measurement) pair,
  encoded as a mixed-radix integer
- the projection of a category onto a setting, and its inverse image

Category encoding:
    Positions are ordered observer-major then measurement, the first
    position being the most significant digit. Each digit is the result
    index with no-detect as the largest value, so the archetypal experiment
    (A1, A2, B1, B2) maps (U, U, U, N) to ((0*3 + 0)*3 + 0)*3 + 2 = 2.

Frequency files:
    {
      "format": "detlp.frequencies/1",
      "spec": {...},
      "frequencies": {"A1,B1": {"U,U": "0.0", "U,D": "0.5", ...}, ...}
    }
"""
import itertools
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Dict, Iterator, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .utils import decimal_str, parse_decimal

NO_DETECT = "N"
SPEC_FORMAT = "detlp.spec/1"
FREQUENCIES_FORMAT = "detlp.frequencies/1"
FREQUENCY_TOLERANCE = 1e-9

DEFAULT_OBSERVER_NAMES = ("Alice", "Bob", "Charlie", "Dave", "Eve", "Frank", "Grace", "Heidi")


class SpecError(ValueError):
    """Malformed experiment schema."""


class FrequencyError(ValueError):
    """Tallied frequencies that do not fit the experiment."""


@dataclass(frozen=True)
class Setting:
    """Measurement index chosen by each observer."""
    indices: Tuple[int, ...]


@dataclass(frozen=True)
class Outcome:
    """Result index per observer; the no-detect index equals Z for that measurement."""
    results: Tuple[int, ...]


@dataclass(frozen=True)
class Category:
    """Result index for every (observer, measurement) position."""
    digits: Tuple[int, ...]


@dataclass(frozen=True)
class ExperimentSpec:
    """Observers, their measurements and per-measurement detect-results.

    Attributes:
        observers: Observer names in declared order
        measurements: Measurement names per observer
        detect_results: Detect-result labels per (observer, measurement)
        tallied: Optional per-setting override of the tallied outcome set;
            settings not listed tally coincidences only
    """
    observers: Tuple[str, ...]
    measurements: Tuple[Tuple[str, ...], ...]
    detect_results: Tuple[Tuple[Tuple[str, ...], ...], ...]
    tallied: Tuple[Tuple[Setting, Tuple[Outcome, ...]], ...] = field(default=())

    def __post_init__(self):
        n = len(self.observers)
        if n < 2:
            raise SpecError(f"need at least 2 observers, got {n}")
        if len(set(self.observers)) != n:
            raise SpecError(f"observer names must be unique: {list(self.observers)}")
        if len(self.measurements) != n or len(self.detect_results) != n:
            raise SpecError("measurements and detect_results must have one entry per observer")
        for i, name in enumerate(self.observers):
            meas = self.measurements[i]
            if len(meas) < 2:
                raise SpecError(f"observer {name} needs at least 2 measurements, got {len(meas)}")
            if len(set(meas)) != len(meas):
                raise SpecError(f"measurement names of {name} must be unique: {list(meas)}")
            if len(self.detect_results[i]) != len(meas):
                raise SpecError(f"observer {name}: one result list per measurement required")
            for k, labels in enumerate(self.detect_results[i]):
                if len(labels) < 2:
                    raise SpecError(f"measurement {meas[k]} needs at least 2 detect-results")
                if len(set(labels)) != len(labels):
                    raise SpecError(f"result labels of {meas[k]} must be unique: {list(labels)}")
                if NO_DETECT in labels:
                    raise SpecError(f"measurement {meas[k]}: '{NO_DETECT}' is reserved for no-detect")
        seen = set()
        for s, outcomes in self.tallied:
            self._check_setting(s)
            if s in seen:
                raise SpecError(f"tallied override repeated for setting {s.indices}")
            seen.add(s)
            outs = set(outcomes)
            if len(outs) != len(outcomes):
                raise SpecError(f"tallied override for {s.indices} repeats an outcome")
            for r in outcomes:
                self._check_outcome(s, r)
                if all(r.results[i] == self.z(i, s.indices[i]) for i in range(n)):
                    raise SpecError("the all-no-detect outcome can never be tallied")
            missing = [d for d in self._detect_outcomes(s) if d not in outs]
            if missing:
                raise SpecError(f"tallied override for {s.indices} must contain every coincidence")

    # shape -------------------------------------------------------------

    @property
    def n_observers(self) -> int:
        return len(self.observers)

    def k(self, i: int) -> int:
        """Number of measurements of observer i."""
        return len(self.measurements[i])

    def z(self, i: int, k: int) -> int:
        """Number of detect-results of measurement k of observer i (also its no-detect index)."""
        return len(self.detect_results[i][k])

    @cached_property
    def positions(self) -> Tuple[Tuple[int, int], ...]:
        return tuple((i, k) for i in range(self.n_observers) for k in range(self.k(i)))

    @cached_property
    def _position_index(self) -> Dict[Tuple[int, int], int]:
        return {ik: p for p, ik in enumerate(self.positions)}

    def position(self, i: int, k: int) -> int:
        return self._position_index[(i, k)]

    @cached_property
    def radices(self) -> np.ndarray:
        return np.array([self.z(i, k) + 1 for i, k in self.positions], dtype=np.int64)

    @cached_property
    def place_values(self) -> np.ndarray:
        w = np.ones(len(self.positions), dtype=np.int64)
        for p in range(len(self.positions) - 2, -1, -1):
            w[p] = w[p + 1] * self.radices[p + 1]
        return w

    @property
    def n_categories(self) -> int:
        return math.prod(int(r) for r in self.radices)

    @property
    def n_perfect_categories(self) -> int:
        return math.prod(int(r) - 1 for r in self.radices)

    @property
    def n_settings(self) -> int:
        return math.prod(self.k(i) for i in range(self.n_observers))

    @cached_property
    def digit_table(self) -> np.ndarray:
        """Digits of every category, row = category code."""
        return decode_many(self, np.arange(self.n_categories, dtype=np.int64))

    @cached_property
    def _tallied_map(self) -> Dict[Setting, Tuple[Outcome, ...]]:
        return dict(self.tallied)

    def observer_index(self, name: str) -> int:
        try:
            return self.observers.index(name)
        except ValueError:
            raise SpecError(f"unknown observer {name!r}; declared {list(self.observers)}") from None

    # validation helpers ------------------------------------------------

    def _check_setting(self, s: Setting) -> None:
        if len(s.indices) != self.n_observers:
            raise SpecError(f"setting {s.indices} must have {self.n_observers} entries")
        for i, k in enumerate(s.indices):
            if not 0 <= k < self.k(i):
                raise SpecError(f"setting {s.indices}: invalid measurement index for {self.observers[i]}")

    def _check_outcome(self, s: Setting, r: Outcome) -> None:
        if len(r.results) != self.n_observers:
            raise SpecError(f"outcome {r.results} must have {self.n_observers} entries")
        for i, res in enumerate(r.results):
            if not 0 <= res <= self.z(i, s.indices[i]):
                raise SpecError(f"outcome {r.results}: invalid result index for {self.observers[i]}")

    def _detect_outcomes(self, s: Setting) -> List[Outcome]:
        ranges = [range(self.z(i, k)) for i, k in enumerate(s.indices)]
        return [Outcome(tuple(r)) for r in itertools.product(*ranges)]

    def is_coincidence_only(self) -> bool:
        """True when every setting tallies exactly its coincidences."""
        return all(len(outs) == len(self._detect_outcomes(s)) for s, outs in self.tallied)

    @classmethod
    def uniform(
        cls,
        n_observers: int,
        n_measurements: int,
        results: Sequence[str] = ("U", "D"),
        observer_names: Optional[Sequence[str]] = None,
    ) -> "ExperimentSpec":
        """N observers, K measurements each, the same Z detect-results everywhere.

        Observers default to Alice, Bob, Charlie, ... and measurements to the
        observer's initial plus a 1-based index (A1, A2, B1, ...).
        """
        if observer_names is None:
            if n_observers > len(DEFAULT_OBSERVER_NAMES):
                observer_names = [f"O{i + 1}" for i in range(n_observers)]
            else:
                observer_names = DEFAULT_OBSERVER_NAMES[:n_observers]
        observers = tuple(observer_names)
        measurements = tuple(
            tuple(f"{name[0]}{k + 1}" for k in range(n_measurements)) for name in observers
        )
        detect = tuple(tuple(tuple(results) for _ in range(n_measurements)) for _ in observers)
        return cls(observers, measurements, detect)


# ---------------------------------------------------------------------------
# Encoding


def encode_category(spec: ExperimentSpec, j: Category) -> int:
    if len(j.digits) != len(spec.positions):
        raise SpecError(f"category has {len(j.digits)} digits, expected {len(spec.positions)}")
    code = 0
    for digit, radix in zip(j.digits, spec.radices):
        if not 0 <= digit < radix:
            raise SpecError(f"category digit {digit} out of range [0, {radix})")
        code = code * int(radix) + digit
    return code


def decode_category(spec: ExperimentSpec, code: int) -> Category:
    if not 0 <= code < spec.n_categories:
        raise SpecError(f"category code {code} out of range [0, {spec.n_categories})")
    digits = []
    for radix in reversed(spec.radices):
        code, d = divmod(code, int(radix))
        digits.append(d)
    return Category(tuple(reversed(digits)))


def decode_many(spec: ExperimentSpec, codes: np.ndarray) -> np.ndarray:
    """Vectorized decode: shape (len(codes), n_positions), dtype int16."""
    codes = np.asarray(codes, dtype=np.int64)
    return ((codes[:, None] // spec.place_values[None, :]) % spec.radices[None, :]).astype(np.int16)


def category_in_perfect_set(spec: ExperimentSpec, j: Category) -> bool:
    """True when j assigns a detect-result to every measurement (j ∈ J)."""
    return all(d < int(r) - 1 for d, r in zip(j.digits, spec.radices))


# ---------------------------------------------------------------------------
# Enumeration


def enumerate_settings(spec: ExperimentSpec) -> List[Setting]:
    ranges = [range(spec.k(i)) for i in range(spec.n_observers)]
    return [Setting(tuple(s)) for s in itertools.product(*ranges)]


def enumerate_outcomes(spec: ExperimentSpec, s: Setting, which: str = "all") -> List[Outcome]:
    """Outcomes of setting s.

    Args:
        which: "all" for R_s, "detect" for coincidences D_s, "tallied" for D̃_s
    """
    spec._check_setting(s)
    if which == "all":
        ranges = [range(spec.z(i, k) + 1) for i, k in enumerate(s.indices)]
        return [Outcome(tuple(r)) for r in itertools.product(*ranges)]
    if which == "detect":
        return spec._detect_outcomes(s)
    if which == "tallied":
        override = spec._tallied_map.get(s)
        if override is None:
            return spec._detect_outcomes(s)
        # keep R_s order regardless of declaration order
        return sorted(override, key=lambda r: outcome_index(spec, s, r))
    raise ValueError(f"which must be 'all', 'detect' or 'tallied', got {which!r}")


def outcome_index(spec: ExperimentSpec, s: Setting, r: Outcome) -> int:
    """Position of r within enumerate_outcomes(spec, s, 'all')."""
    idx = 0
    for i, k in enumerate(s.indices):
        idx = idx * (spec.z(i, k) + 1) + r.results[i]
    return idx


def is_coincidence(spec: ExperimentSpec, s: Setting, r: Outcome) -> bool:
    return all(r.results[i] < spec.z(i, k) for i, k in enumerate(s.indices))


def project(spec: ExperimentSpec, j: Category, s: Setting) -> Outcome:
    """P_s(j): the results j assigns to the measurements selected by s."""
    return Outcome(tuple(j.digits[spec.position(i, k)] for i, k in enumerate(s.indices)))


def outcome_codes(spec: ExperimentSpec, s: Setting, digits: Optional[np.ndarray] = None) -> np.ndarray:
    """outcome_index of P_s(j) for every category row of ``digits`` (default: all of J̃)."""
    if digits is None:
        digits = spec.digit_table
    codes = np.zeros(digits.shape[0], dtype=np.int64)
    for i, k in enumerate(s.indices):
        codes = codes * (spec.z(i, k) + 1) + digits[:, spec.position(i, k)]
    return codes


def categories_for(spec: ExperimentSpec, s: Setting, r: Outcome) -> Iterator[Category]:
    """Every j with P_s(j) = r, in increasing code order."""
    spec._check_outcome(s, r)
    fixed = {spec.position(i, k): r.results[i] for i, k in enumerate(s.indices)}
    ranges = [
        (fixed[p],) if p in fixed else range(int(radix))
        for p, radix in enumerate(spec.radices)
    ]
    for digits in itertools.product(*ranges):
        yield Category(tuple(digits))


def j_spec(spec: ExperimentSpec, s: Setting, d: Outcome) -> Category:
    """Category with result d on the measurements of s and no-detect elsewhere."""
    spec._check_outcome(s, d)
    digits = [int(r) - 1 for r in spec.radices]
    for i, k in enumerate(s.indices):
        digits[spec.position(i, k)] = d.results[i]
    return Category(tuple(digits))


def detect_mask(spec: ExperimentSpec, i: int, k: int, digits: Optional[np.ndarray] = None) -> np.ndarray:
    """Boolean mask of categories where observer i detects on measurement k."""
    if digits is None:
        digits = spec.digit_table
    return digits[:, spec.position(i, k)] < spec.z(i, k)


# ---------------------------------------------------------------------------
# Labels


def setting_label(spec: ExperimentSpec, s: Setting) -> str:
    return ",".join(spec.measurements[i][k] for i, k in enumerate(s.indices))


def parse_setting(spec: ExperimentSpec, label: str) -> Setting:
    parts = [p.strip() for p in label.split(",")]
    if len(parts) != spec.n_observers:
        raise SpecError(f"setting label {label!r} must name {spec.n_observers} measurements")
    idx = []
    for i, name in enumerate(parts):
        try:
            idx.append(spec.measurements[i].index(name))
        except ValueError:
            raise SpecError(
                f"setting label {label!r}: {name!r} is not a measurement of {spec.observers[i]}"
            ) from None
    return Setting(tuple(idx))


def outcome_label(spec: ExperimentSpec, s: Setting, r: Outcome) -> str:
    labels = []
    for i, k in enumerate(s.indices):
        res = r.results[i]
        labels.append(NO_DETECT if res == spec.z(i, k) else spec.detect_results[i][k][res])
    return ",".join(labels)


def parse_outcome(spec: ExperimentSpec, s: Setting, label: str) -> Outcome:
    parts = [p.strip() for p in label.split(",")]
    if len(parts) != spec.n_observers:
        raise SpecError(f"outcome label {label!r} must list {spec.n_observers} results")
    res = []
    for i, (k, name) in enumerate(zip(s.indices, parts)):
        if name == NO_DETECT:
            res.append(spec.z(i, k))
            continue
        try:
            res.append(spec.detect_results[i][k].index(name))
        except ValueError:
            raise SpecError(
                f"outcome label {label!r}: {name!r} is not a result of {spec.measurements[i][k]}"
            ) from None
    return Outcome(tuple(res))


def category_label(spec: ExperimentSpec, j: Category) -> str:
    labels = []
    for (i, k), d in zip(spec.positions, j.digits):
        labels.append(NO_DETECT if d == spec.z(i, k) else spec.detect_results[i][k][d])
    return ",".join(labels)


# ---------------------------------------------------------------------------
# Frequencies


@dataclass(frozen=True)
class TalliedFrequencies:
    """q_sd for every setting s and tallied outcome d ∈ D̃_s."""
    values: Mapping[Setting, Mapping[Outcome, float]]

    def get(self, s: Setting, d: Outcome) -> float:
        return self.values[s][d]

    def validate(self, spec: ExperimentSpec, tol: float = FREQUENCY_TOLERANCE) -> None:
        """Raise FrequencyError unless q is defined exactly on each D̃_s and normalized."""
        settings = enumerate_settings(spec)
        extra = set(self.values) - set(settings)
        if extra:
            raise FrequencyError(f"unknown settings: {sorted(setting_label(spec, s) for s in extra)}")
        for s in settings:
            row = self.values.get(s)
            label = setting_label(spec, s)
            if row is None:
                raise FrequencyError(f"missing frequencies for setting {label}")
            tallied = enumerate_outcomes(spec, s, "tallied")
            if set(row) != set(tallied):
                missing = [outcome_label(spec, s, d) for d in tallied if d not in row]
                unknown = [outcome_label(spec, s, d) for d in row if d not in set(tallied)]
                raise FrequencyError(
                    f"setting {label}: outcomes must be exactly the tallied set "
                    f"(missing {missing}, not tallied {unknown})"
                )
            total = 0.0
            for d, value in row.items():
                if not math.isfinite(value) or value < 0.0:
                    raise FrequencyError(
                        f"setting {label} outcome {outcome_label(spec, s, d)}: frequency {value!r} must be >= 0"
                    )
                total += value
            if abs(total - 1.0) > tol:
                raise FrequencyError(f"setting {label}: frequencies sum to {total!r}, not 1")


@dataclass(frozen=True)
class FullFrequencies:
    """q̃_sr for every r ∈ R_s, stored per setting in enumerate_outcomes order."""
    values: Mapping[Setting, np.ndarray]

    def get(self, spec: ExperimentSpec, s: Setting, r: Outcome) -> float:
        return float(self.values[s][outcome_index(spec, s, r)])

    def as_tensor(self, spec: ExperimentSpec, s: Setting) -> np.ndarray:
        """q̃_s reshaped with one axis per observer."""
        shape = tuple(spec.z(i, k) + 1 for i, k in enumerate(s.indices))
        return np.asarray(self.values[s]).reshape(shape)


def full_from_tallied(spec: ExperimentSpec, q: TalliedFrequencies) -> FullFrequencies:
    """Extend q with zero mass on every untallied outcome."""
    out = {}
    for s in enumerate_settings(spec):
        size = math.prod(spec.z(i, k) + 1 for i, k in enumerate(s.indices))
        arr = np.zeros(size)
        for d, value in q.values[s].items():
            arr[outcome_index(spec, s, d)] = value
        out[s] = arr
    return FullFrequencies(out)


# ---------------------------------------------------------------------------
# JSON


def spec_to_dict(spec: ExperimentSpec) -> Dict[str, Any]:
    doc: Dict[str, Any] = {
        "format": SPEC_FORMAT,
        "observers": [
            {
                "name": name,
                "measurements": [
                    {"name": m, "results": list(spec.detect_results[i][k])}
                    for k, m in enumerate(spec.measurements[i])
                ],
            }
            for i, name in enumerate(spec.observers)
        ],
    }
    if spec.tallied:
        doc["tallied"] = {
            setting_label(spec, s): [outcome_label(spec, s, r) for r in enumerate_outcomes(spec, s, "tallied")]
            for s in enumerate_settings(spec)
            if s in spec._tallied_map
        }
    return doc


def spec_from_dict(doc: Mapping[str, Any]) -> ExperimentSpec:
    fmt = doc.get("format", SPEC_FORMAT)
    if fmt != SPEC_FORMAT:
        raise SpecError(f"unsupported spec format {fmt!r}")
    try:
        obs_docs = doc["observers"]
        observers = tuple(o["name"] for o in obs_docs)
        measurements = tuple(tuple(m["name"] for m in o["measurements"]) for o in obs_docs)
        detect = tuple(
            tuple(tuple(m["results"]) for m in o["measurements"]) for o in obs_docs
        )
    except (KeyError, TypeError) as e:
        raise SpecError(f"malformed spec document: missing {e}") from None
    base = ExperimentSpec(observers, measurements, detect)
    tallied_doc = doc.get("tallied") or {}
    if not tallied_doc:
        return base
    overrides = []
    for label, outcome_labels in tallied_doc.items():
        s = parse_setting(base, label)
        overrides.append((s, tuple(parse_outcome(base, s, o) for o in outcome_labels)))
    return ExperimentSpec(observers, measurements, detect, tuple(overrides))


def load_spec(path: str) -> ExperimentSpec:
    with open(path, "r") as fp:
        try:
            doc = json.load(fp)
        except json.JSONDecodeError as e:
            raise SpecError(f"{path}: invalid JSON ({e})") from None
    return spec_from_dict(doc)


def frequencies_to_dict(
    spec: ExperimentSpec, q: TalliedFrequencies, embed_spec: bool = True
) -> Dict[str, Any]:
    doc: Dict[str, Any] = {"format": FREQUENCIES_FORMAT}
    if embed_spec:
        doc["spec"] = spec_to_dict(spec)
    doc["frequencies"] = {
        setting_label(spec, s): {
            outcome_label(spec, s, d): decimal_str(q.values[s][d])
            for d in enumerate_outcomes(spec, s, "tallied")
        }
        for s in enumerate_settings(spec)
    }
    return doc


def frequencies_from_dict(
    doc: Mapping[str, Any], spec: Optional[ExperimentSpec] = None
) -> Tuple[ExperimentSpec, TalliedFrequencies]:
    """Parse a frequency document; the embedded spec is used when none is given."""
    fmt = doc.get("format", FREQUENCIES_FORMAT)
    if fmt != FREQUENCIES_FORMAT:
        raise FrequencyError(f"unsupported frequencies format {fmt!r}")
    if spec is None:
        if "spec" not in doc:
            raise FrequencyError("frequency document has no embedded spec; pass --spec")
        spec = spec_from_dict(doc["spec"])
    rows = doc.get("frequencies")
    if not isinstance(rows, Mapping):
        raise FrequencyError("frequency document needs a 'frequencies' object")
    values: Dict[Setting, Dict[Outcome, float]] = {}
    for s_label, row in rows.items():
        try:
            s = parse_setting(spec, s_label)
        except SpecError as e:
            raise FrequencyError(str(e)) from None
        if s in values:
            raise FrequencyError(f"setting {s_label} listed twice")
        parsed: Dict[Outcome, float] = {}
        for d_label, raw in row.items():
            try:
                d = parse_outcome(spec, s, d_label)
                parsed[d] = parse_decimal(raw, f"q[{s_label}][{d_label}]")
            except ValueError as e:
                raise FrequencyError(str(e)) from None
        values[s] = parsed
    q = TalliedFrequencies(values)
    q.validate(spec)
    return spec, q


def load_frequencies(
    path: str, spec: Optional[ExperimentSpec] = None
) -> Tuple[ExperimentSpec, TalliedFrequencies]:
    with open(path, "r") as fp:
        try:
            doc = json.load(fp)
        except json.JSONDecodeError as e:
            raise FrequencyError(f"{path}: invalid JSON ({e})") from None
    return frequencies_from_dict(doc, spec)


def dumps_json(doc: Any) -> str:
    """Deterministic JSON text used for every file detlp writes."""
    return json.dumps(doc, indent=2, ensure_ascii=False) + "\n"
