"""
Solver-independent verification.

Everything here re-derives what it checks from the experiment schema and
the frequencies alone:

- construct_witness: an explicit LR model for any coincidence-only data
- check_perfect_detection: perfect-detection characterization of a model
- check_no_signaling: marginal independence of full frequencies
- verify_certificate: a Bell-type inequality with no-detect terms, checked
  against every category column
- certify_pinned / bisect_critical_efficiency: pinned feasibility programs

Certificate semantics:
    The pinned program has rows norm (= 1), couple[s][d] (= 0) and
    pin[i][k] (>= level). A multiplier vector y proves that no LR model
    reaches the pinned levels when

        c_j = y_norm + Σ_s y_{s,P_s(j)} + Σ_{(i,k) pinned, j_ik detected} y_ik <= tol  for every j
        -Σ_d q_sd y_sd <= tol                                                      for every s
        y_ik >= -tol on pin rows
        yᵀb = y_norm + Σ y_ik level_ik > tol

    with tol = tolerance · max|y| · max|column entry|.

Certificate file:
    {
      "format": "detlp.certificate/1",
      "scenario": {"kind": "dsym", "maximize": ["Alice", "Bob"], "fixed": {}},
      "efficiency": "0.95",
      "rows": [{"label": "norm", "rhs": "1.0", "y": "-0.1"}, ...],
      "margin": "0.0125",
      "verification": {"status": "verified", "categories_checked": 81, ...},
      "spec": {...}, "frequencies": {...}
    }
"""
import itertools
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .builder import (
    LrModel,
    ObjectiveScenario,
    ScenarioInfeasible,
    build_pinned,
    extract_model,
    model_from_solution,
    pin_rows,
)
from .logging import DebugLogger
from .lp import FarkasError, LpStatus, extract_farkas, solve
from .model import (
    ExperimentSpec,
    FullFrequencies,
    TalliedFrequencies,
    category_label,
    decode_category,
    decode_many,
    detect_mask,
    encode_category,
    enumerate_outcomes,
    enumerate_settings,
    frequencies_from_dict,
    frequencies_to_dict,
    is_coincidence,
    j_spec,
    outcome_codes,
    outcome_index,
    outcome_label,
    setting_label,
    spec_to_dict,
)
from .types import CertificateConfig, ScenarioConfig, SolverTolerances
from .utils import decimal_str, parse_decimal

CERTIFICATE_FORMAT = "detlp.certificate/1"
WITNESS_FORMAT = "detlp.witness/1"
CHUNK_SIZE = 65536


class WitnessError(ValueError):
    """The explicit witness construction does not apply to this tallying."""


class CertificateError(Exception):
    """A certificate failed verification or could not be produced."""


class CertificateFormatError(CertificateError, ValueError):
    """A certificate document is malformed."""


# ---------------------------------------------------------------------------
# Witness and perfect-detection checks


def construct_witness(spec: ExperimentSpec, q: TalliedFrequencies) -> LrModel:
    """LR model supported on j_spec categories with v_s = 1/|S|.

    Works for every normalized q (signaling or not) as long as each setting
    tallies exactly its coincidences.
    """
    if not spec.is_coincidence_only():
        raise WitnessError("witness construction needs coincidence-only tallying")
    q.validate(spec)
    settings = enumerate_settings(spec)
    v_s = 1.0 / len(settings)
    x = np.zeros(spec.n_categories)
    for s in settings:
        for d, qsd in q.values[s].items():
            x[encode_category(spec, j_spec(spec, s, d))] += qsd * v_s
    return model_from_solution(spec, x, {s: v_s for s in settings})


@dataclass
class PerfectDetectionReport:
    """Perfect-detection characterization of one model.

    ``statements`` maps 1..4 to the outcome of each consequence of a
    perfect-detection support; it is empty when the support leaves J.
    """
    support_in_perfect_set: bool
    all_detected: bool
    off_support_mass: float
    min_pdet: float
    statements: Dict[int, bool] = field(default_factory=dict)
    failures: List[str] = field(default_factory=list)

    @property
    def biconditional(self) -> bool:
        return self.support_in_perfect_set == self.all_detected

    @property
    def holds(self) -> bool:
        return self.biconditional and all(self.statements.values())


def check_perfect_detection(
    model: LrModel,
    spec: ExperimentSpec,
    q: Optional[TalliedFrequencies] = None,
    tol: float = 1e-8,
) -> PerfectDetectionReport:
    """Support ⊆ J ⇔ every PDet_ik = 1, and when it holds:

    1. q̃_sr = 0 for every r outside the coincidences D_s
    2. q_sd = 0 for every tallied non-coincidence d
    3. v_s = 1 for every setting
    4. q̃_sd = q_sd on the coincidences

    Statements 2 and 4 need q; they are skipped when q is None.
    """
    perfect = np.all(spec.digit_table < (spec.radices - 1)[None, :], axis=1)
    off_mass = float(model.x[~perfect].sum())
    min_pdet = min(model.pdet.values())
    report = PerfectDetectionReport(
        support_in_perfect_set=off_mass <= tol,
        all_detected=min_pdet >= 1.0 - tol,
        off_support_mass=off_mass,
        min_pdet=min_pdet,
    )
    if not report.biconditional:
        report.failures.append(
            f"support in J is {report.support_in_perfect_set} but all PDet = 1 is {report.all_detected}"
        )
    if not report.support_in_perfect_set:
        return report

    settings = enumerate_settings(spec)
    s1 = s2 = s3 = s4 = True
    for s in settings:
        label = setting_label(spec, s)
        row = model.q_full.values[s]
        for r in enumerate_outcomes(spec, s, "all"):
            if not is_coincidence(spec, s, r) and row[outcome_index(spec, s, r)] > tol:
                s1 = False
                report.failures.append(f"q̃[{label}][{outcome_label(spec, s, r)}] > 0")
        if abs(model.v[s] - 1.0) > tol:
            s3 = False
            report.failures.append(f"v[{label}] = {model.v[s]!r}")
        if q is None:
            continue
        for d, qsd in q.values[s].items():
            if is_coincidence(spec, s, d):
                got = float(row[outcome_index(spec, s, d)])
                if abs(got - qsd) > tol:
                    s4 = False
                    report.failures.append(f"q̃[{label}][{outcome_label(spec, s, d)}] = {got!r} != q = {qsd!r}")
            elif qsd > tol:
                s2 = False
                report.failures.append(f"q[{label}][{outcome_label(spec, s, d)}] = {qsd!r} > 0")
    report.statements = {1: s1, 3: s3}
    if q is not None:
        report.statements.update({2: s2, 4: s4})
    report.statements = dict(sorted(report.statements.items()))
    return report


@dataclass
class NoSignalingReport:
    passed: bool
    max_deviation: float
    comparisons: int
    worst: Optional[Dict[str, Any]] = None


def check_no_signaling(q_full: FullFrequencies, spec: ExperimentSpec, tol: float = 1e-8) -> NoSignalingReport:
    """Marginals of every proper observer subset G agree across settings that agree on G."""
    settings = enumerate_settings(spec)
    n = spec.n_observers
    max_dev = 0.0
    worst = None
    comparisons = 0
    for size in range(1, n):
        for group in itertools.combinations(range(n), size):
            others = tuple(i for i in range(n) if i not in group)
            reference: Dict[Tuple[int, ...], Tuple[Any, np.ndarray]] = {}
            for s in settings:
                key = tuple(s.indices[i] for i in group)
                marginal = q_full.as_tensor(spec, s).sum(axis=others)
                if key not in reference:
                    reference[key] = (s, marginal)
                    continue
                comparisons += 1
                ref_s, ref = reference[key]
                diff = np.abs(marginal - ref)
                dev = float(diff.max())
                if dev > max_dev:
                    max_dev = dev
                    where = np.unravel_index(int(diff.argmax()), diff.shape)
                    worst = {
                        "observers": [spec.observers[i] for i in group],
                        "settings": [setting_label(spec, ref_s), setting_label(spec, s)],
                        "results": [
                            "N" if r == spec.z(i, key[g]) else spec.detect_results[i][key[g]][r]
                            for g, (i, r) in enumerate(zip(group, where))
                        ],
                        "deviation": dev,
                    }
    return NoSignalingReport(max_dev <= tol, max_dev, comparisons, worst)


# ---------------------------------------------------------------------------
# Certificates


@dataclass
class BellCertificate:
    """Multipliers on the rows of a pinned feasibility program.

    Attributes:
        row_labels: Row names in program order (norm, couple[...], pin[...])
        y: One multiplier per row
        margin: yᵀb as reported when the certificate was produced
        efficiency: Level pinned on the maximized observers (None: fixed only)
        scenario: Scenario whose observers were pinned
    """
    row_labels: Tuple[str, ...]
    y: np.ndarray
    margin: float
    efficiency: Optional[float]
    scenario: ObjectiveScenario


@dataclass
class VerificationReport:
    ok: bool
    categories_checked: int
    total_categories: int
    exhaustive: bool
    max_column_value: float
    margin: float
    tolerance: float
    worst_category: Optional[str] = None
    failures: List[str] = field(default_factory=list)

    def __bool__(self) -> bool:
        return self.ok

    def to_dict(self) -> Dict[str, Any]:
        return {
            "status": "verified" if self.ok else "failed",
            "categories_checked": self.categories_checked,
            "total_categories": self.total_categories,
            "exhaustive": self.exhaustive,
            "max_column_value": decimal_str(self.max_column_value),
            "margin": decimal_str(self.margin),
            "tolerance": decimal_str(self.tolerance),
            "worst_category": self.worst_category,
            "failures": list(self.failures),
        }


def certificate_rows(
    spec: ExperimentSpec, q: TalliedFrequencies, scenario: ObjectiveScenario, efficiency: Optional[float]
) -> Tuple[List[str], np.ndarray]:
    """Row labels and right-hand sides of the pinned program, rebuilt from the schema."""
    labels = ["norm"]
    rhs = [1.0]
    for s in enumerate_settings(spec):
        for d in enumerate_outcomes(spec, s, "tallied"):
            labels.append(f"couple[{setting_label(spec, s)}][{outcome_label(spec, s, d)}]")
            rhs.append(0.0)
    for label, _, _, level in pin_rows(spec, scenario, efficiency):
        labels.append(label)
        rhs.append(level)
    return labels, np.array(rhs)


def _column_max(
    spec: ExperimentSpec,
    codes: np.ndarray,
    y_norm: float,
    lookups: Sequence[Tuple[Any, np.ndarray]],
    pins: Sequence[Tuple[int, int, float]],
) -> Tuple[float, int]:
    digits = decode_many(spec, codes)
    c = np.full(len(codes), y_norm)
    for s, table in lookups:
        c += table[outcome_codes(spec, s, digits)]
    for i, k, yik in pins:
        c += yik * detect_mask(spec, i, k, digits)
    at = int(np.argmax(c))
    return float(c[at]), int(codes[at])


def verify_certificate(
    cert: BellCertificate,
    spec: ExperimentSpec,
    q: TalliedFrequencies,
    scenario: Optional[ObjectiveScenario] = None,
    config: Optional[CertificateConfig] = None,
    jobs: int = 1,
    logger: Optional[DebugLogger] = None,
) -> VerificationReport:
    """Check a certificate against every category column (or a seeded sample beyond the cap)."""
    config = config or CertificateConfig()
    scenario = scenario or cert.scenario
    labels, rhs = certificate_rows(spec, q, scenario, cert.efficiency)
    y = np.asarray(cert.y, dtype=float)
    total = spec.n_categories
    failures = []
    if tuple(labels) != tuple(cert.row_labels) or y.shape != (len(labels),):
        return VerificationReport(False, 0, total, False, math.inf, -math.inf, config.tolerance,
                                  failures=["certificate rows do not match the pinned program"])
    if not np.all(np.isfinite(y)):
        return VerificationReport(False, 0, total, False, math.inf, -math.inf, config.tolerance,
                                  failures=["certificate has non-finite multipliers"])

    max_entry = max(1.0, max(max(row.values()) for row in q.values.values()))
    tol = config.tolerance * max(float(np.max(np.abs(y))), 1e-300) * max_entry
    margin = float(y @ rhs)

    lookups = []
    row = 1
    for s in enumerate_settings(spec):
        size = math.prod(spec.z(i, k) + 1 for i, k in enumerate(s.indices))
        table = np.zeros(size)
        v_value = 0.0
        for d in enumerate_outcomes(spec, s, "tallied"):
            table[outcome_index(spec, s, d)] = y[row]
            v_value -= q.values[s][d] * y[row]
            row += 1
        lookups.append((s, table))
        if v_value > tol:
            failures.append(f"v[{setting_label(spec, s)}] column value {v_value!r} > {tol!r}")
    pins = []
    for (label, i, k, _), yik in zip(pin_rows(spec, scenario, cert.efficiency), y[row:]):
        if yik < -tol:
            failures.append(f"{label} multiplier {yik!r} has the wrong sign")
        pins.append((i, k, float(yik)))

    exhaustive = total <= config.max_exhaustive
    if exhaustive:
        chunks = [np.arange(start, min(start + CHUNK_SIZE, total), dtype=np.int64)
                  for start in range(0, total, CHUNK_SIZE)]
    else:
        rng = np.random.default_rng(config.seed)
        sample = np.unique(rng.integers(0, total, size=config.sample_size, dtype=np.int64))
        chunks = [sample[start:start + CHUNK_SIZE] for start in range(0, len(sample), CHUNK_SIZE)]
    checked = int(sum(len(c) for c in chunks))

    def work(codes):
        return _column_max(spec, codes, float(y[0]), lookups, pins)

    if jobs > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(work, chunks))
    else:
        results = [work(c) for c in chunks]

    worst_value, worst_code = -math.inf, -1
    for value, code in results:
        if value > worst_value:
            worst_value, worst_code = value, code
    worst_label = category_label(spec, decode_category(spec, worst_code)) if worst_code >= 0 else None
    if worst_value > tol:
        failures.append(f"category {worst_code} ({worst_label}) has column value {worst_value!r} > {tol!r}")
    if margin < tol:
        failures.append(f"margin {margin!r} is below {tol!r}")
    if not exhaustive and logger is not None:
        logger.warning("certificate_partial_coverage", {"checked": checked, "total": total})

    report = VerificationReport(
        ok=not failures,
        categories_checked=checked,
        total_categories=total,
        exhaustive=exhaustive,
        max_column_value=worst_value,
        margin=margin,
        tolerance=tol,
        worst_category=worst_label,
        failures=failures,
    )
    if logger is not None:
        event = {"scenario": scenario.label, "efficiency": cert.efficiency, "margin": margin,
                 "max_column_value": worst_value, "categories_checked": checked}
        if report.ok:
            logger.info("certificate_verified", event)
        else:
            logger.critical("certificate_failed", {**event, "failures": report.failures})
    return report


@dataclass
class CertifyResult:
    """Outcome of a pinned feasibility check: a certificate or a witness model."""
    feasible: bool
    efficiency: Optional[float]
    scenario: ObjectiveScenario
    certificate: Optional[BellCertificate] = None
    verification: Optional[VerificationReport] = None
    witness: Optional[LrModel] = None
    iterations: int = 0


def certify_pinned(
    spec: ExperimentSpec,
    q: TalliedFrequencies,
    scenario: ObjectiveScenario,
    efficiency: Optional[float],
    tolerances: Optional[SolverTolerances] = None,
    config: Optional[CertificateConfig] = None,
    scenario_config: Optional[ScenarioConfig] = None,
    jobs: int = 1,
    logger: Optional[DebugLogger] = None,
) -> CertifyResult:
    """Pin the scenario's observers at ``efficiency``; certify infeasibility or return a witness."""
    scenario_config = scenario_config or ScenarioConfig()
    lp = build_pinned(spec, q, scenario, efficiency)
    sol = solve(lp, tolerances, logger)
    if sol.status == LpStatus.OPTIMAL:
        witness = extract_model(lp, sol, spec, scenario_config.model_tolerance)
        return CertifyResult(True, efficiency, scenario, witness=witness, iterations=sol.iterations)

    try:
        ray = extract_farkas(lp, sol)
    except FarkasError as e:
        raise CertificateError(f"no certificate could be extracted: {e}") from e
    cert = BellCertificate(
        row_labels=tuple(c.name for c in lp.constraints),
        y=ray.y,
        margin=ray.margin,
        efficiency=efficiency,
        scenario=scenario,
    )
    report = verify_certificate(cert, spec, q, scenario, config, jobs, logger)
    if not report:
        raise CertificateError("certificate failed verification: " + "; ".join(report.failures))
    return CertifyResult(False, efficiency, scenario, cert, report, iterations=sol.iterations)


def certify_scenario(
    spec: ExperimentSpec,
    q: TalliedFrequencies,
    scenario: ObjectiveScenario,
    **kwargs,
) -> CertifyResult:
    """Certificate for data that no LR model explains under the scenario's fixed levels alone."""
    return certify_pinned(spec, q, scenario, None, **kwargs)


def pinned_feasible(
    spec: ExperimentSpec,
    q: TalliedFrequencies,
    scenario: ObjectiveScenario,
    efficiency: Optional[float],
    tolerances: Optional[SolverTolerances] = None,
) -> bool:
    return solve(build_pinned(spec, q, scenario, efficiency), tolerances).status == LpStatus.OPTIMAL


def bisect_critical_efficiency(
    spec: ExperimentSpec,
    q: TalliedFrequencies,
    scenario: ObjectiveScenario,
    iterations: int = 20,
    tolerances: Optional[SolverTolerances] = None,
    logger: Optional[DebugLogger] = None,
) -> float:
    """Locate the pinned-feasibility boundary on [0, 1] by bisection."""
    if not pinned_feasible(spec, q, scenario, 0.0, tolerances):
        raise ScenarioInfeasible(f"scenario {scenario.label} is infeasible at efficiency 0")
    if pinned_feasible(spec, q, scenario, 1.0, tolerances):
        return 1.0
    lo, hi = 0.0, 1.0
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        if pinned_feasible(spec, q, scenario, mid, tolerances):
            lo = mid
        else:
            hi = mid
    value = 0.5 * (lo + hi)
    if logger is not None:
        logger.info("bisection_done", {"scenario": scenario.label, "value": value, "iterations": iterations})
    return value


# ---------------------------------------------------------------------------
# Files


def scenario_to_dict(scenario: ObjectiveScenario) -> Dict[str, Any]:
    return {
        "kind": scenario.kind,
        "maximize": list(scenario.maximize),
        "fixed": {name: decimal_str(v) for name, v in scenario.fixed},
    }


def scenario_from_dict(doc: Mapping[str, Any]) -> ObjectiveScenario:
    fixed = tuple((name, parse_decimal(v, f"fixed[{name}]")) for name, v in (doc.get("fixed") or {}).items())
    return ObjectiveScenario(tuple(doc["maximize"]), doc.get("kind", "dsym"), fixed)


def certificate_to_dict(
    cert: BellCertificate,
    spec: ExperimentSpec,
    q: TalliedFrequencies,
    report: Optional[VerificationReport] = None,
) -> Dict[str, Any]:
    _, rhs = certificate_rows(spec, q, cert.scenario, cert.efficiency)
    return {
        "format": CERTIFICATE_FORMAT,
        "scenario": scenario_to_dict(cert.scenario),
        "efficiency": None if cert.efficiency is None else decimal_str(cert.efficiency),
        "rows": [
            {"label": label, "rhs": decimal_str(b), "y": decimal_str(yi)}
            for label, b, yi in zip(cert.row_labels, rhs, cert.y)
        ],
        "margin": decimal_str(cert.margin),
        "verification": report.to_dict() if report is not None else {"status": "unverified"},
        "spec": spec_to_dict(spec),
        "frequencies": frequencies_to_dict(spec, q, embed_spec=False)["frequencies"],
    }


def certificate_from_dict(doc: Mapping[str, Any]) -> Tuple[BellCertificate, ExperimentSpec, TalliedFrequencies]:
    if doc.get("format") != CERTIFICATE_FORMAT:
        raise CertificateFormatError(f"unsupported certificate format {doc.get('format')!r}")
    try:
        spec, q = frequencies_from_dict({"spec": doc["spec"], "frequencies": doc["frequencies"]})
        scenario = scenario_from_dict(doc["scenario"])
        rows = doc["rows"]
        eff = doc.get("efficiency")
        cert = BellCertificate(
            row_labels=tuple(r["label"] for r in rows),
            y=np.array([parse_decimal(r["y"], r["label"]) for r in rows]),
            margin=parse_decimal(doc["margin"], "margin"),
            efficiency=None if eff is None else parse_decimal(eff, "efficiency"),
            scenario=scenario,
        )
    except (KeyError, TypeError) as e:
        raise CertificateFormatError(f"malformed certificate document: missing {e}") from None
    return cert, spec, q


def load_certificate(path: str) -> Tuple[BellCertificate, ExperimentSpec, TalliedFrequencies]:
    with open(path, "r") as fp:
        try:
            doc = json.load(fp)
        except json.JSONDecodeError as e:
            raise CertificateFormatError(f"{path}: invalid JSON ({e})") from None
    if not isinstance(doc, dict):
        raise CertificateFormatError(f"{path}: certificate must be a JSON object")
    return certificate_from_dict(doc)


def witness_to_dict(
    model: LrModel,
    spec: ExperimentSpec,
    scenario: Optional[ObjectiveScenario] = None,
    efficiency: Optional[float] = None,
) -> Dict[str, Any]:
    return {
        "format": WITNESS_FORMAT,
        "scenario": None if scenario is None else scenario_to_dict(scenario),
        "efficiency": None if efficiency is None else decimal_str(efficiency),
        "dsym": decimal_str(model.dsym),
        "dmin": {name: decimal_str(v) for name, v in model.dmin.items()},
        "pdet": {spec.measurements[i][k]: decimal_str(model.pdet[(i, k)]) for i, k in spec.positions},
        "v": {setting_label(spec, s): decimal_str(v) for s, v in model.v.items()},
        "support": [
            {
                "code": int(code),
                "category": category_label(spec, decode_category(spec, int(code))),
                "x": decimal_str(model.x[code]),
            }
            for code in model.support
        ],
    }
