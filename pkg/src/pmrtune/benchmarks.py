"""Reference designs for three benchmark plants and a reproduction harness.

The package ships the published reference values it was validated against:
the relay-experiment rows, the two coefficient design tables, and the full
tuning/performance tables for one plant per class,

    Ga(s) = e^-s / (s+1)^2    (class A)
    Gb(s) = 1 / (s+1)^2       (class B)
    Gc(s) = 1 / (s+1)         (class C)

The harness re-derives every value through the public pipeline and reports
per-cell deviations.  Printed reference cells carry three significant
digits, so the pinned-mode comparisons accept one unit in the last printed
digit plus the spread induced by rounding of the pinned inputs themselves
(the identified point is only known to its printed precision).

A handful of printed cells are irreproducible from the printed inputs; they
are registered in ERRATA with the arithmetic reason and checked separately
(see the module-level notes on each entry).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from decimal import Decimal
from typing import Callable, Iterable, Optional

from .analysis import make_reference, simulate_closed_loop
from .ident import FrequencyPoint, PlantClass, rap_auto
from .lti import TransferFunction
from .tuning import (
    COEFFICIENT_NAMES,
    HarmonicSet,
    PRINTED_FIRST_MODE_TABLE_STR,
    PRINTED_HIGHER_MODE_ROW_STR,
    TuningSpec,
    build_phase_lead,
    coefficients_for,
    compute_mode_gains,
    tune,
)

# ---------------------------------------------------------------------------
# Benchmark plants and their reference identification rows
# ---------------------------------------------------------------------------

BENCHMARK_PLANTS: dict[str, TransferFunction] = {
    "ga": TransferFunction([1.0], [1.0, 2.0, 1.0], 1.0),
    "gb": TransferFunction([1.0], [1.0, 2.0, 1.0], 0.0),
    "gc": TransferFunction([1.0], [1.0, 1.0], 0.0),
}

BENCHMARK_CLASSES: dict[str, PlantClass] = {
    "ga": PlantClass.A, "gb": PlantClass.B, "gc": PlantClass.C,
}

# Reference relay-experiment rows: gamma, relay gain d, oscillation
# amplitude, filter magnitude, identified magnitude and frequency.
RAP_REFERENCE: dict[str, dict[str, str]] = {
    "ga": {"gamma": "0", "d": "1.3", "a_nu": "0.648", "f_mag": "1",
           "m_nu": "0.392", "omega_nu": "1.32"},
    "gb": {"gamma": "-60", "d": "2.4", "a_nu": "0.589", "f_mag": "0.757",
           "m_nu": "0.255", "omega_nu": "1.69"},
    "gc": {"gamma": "-120", "d": "1.6", "a_nu": "0.532", "f_mag": "0.501",
           "m_nu": "0.501", "omega_nu": "1.68"},
}

# Reference lead-section cells for the class A benchmark.
LEAD_REFERENCE: dict[str, str] = {"k_a": "2.50", "z_a": "0.526",
                                  "p_a": "3.29"}


def pinned_point(plant_id: str) -> FrequencyPoint:
    """The identified point fixed to its printed reference values."""
    row = RAP_REFERENCE[plant_id]
    return FrequencyPoint(
        nu_deg=BENCHMARK_CLASSES[plant_id].nu_deg,
        omega_nu=float(row["omega_nu"]),
        m_nu=float(row["m_nu"]),
        plant_class=BENCHMARK_CLASSES[plant_id],
        source="rap",
    )


# ---------------------------------------------------------------------------
# Performance-table scenarios
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Scenario:
    """One column of a reference performance table.

    ``level`` is "low" (max compensated frequency at 0.1 of the identified
    frequency) or "high" (at 0.9 of it); the fundamental follows from the
    harmonic set.  ``eta_overrides`` reproduces columns that were generated
    with a different zero-placement parameter than the stock table value.
    """

    plant_id: str
    case: str                  # "i" (consecutive) | "ii" (odd)
    N: int
    level: str                 # "low" | "high"
    ratio_str: str             # printed omega_r / omega_nu
    gains: dict[int, tuple[str, str, str]]   # n -> (K_p, K_r1, K_r2)
    t_s: str
    n_s: str
    m_o: str
    eta_overrides: dict[int, float] = field(default_factory=dict)

    @property
    def scenario_id(self) -> str:
        return f"{self.plant_id}-{self.case}-N{self.N}-{self.level}"

    @property
    def harmonics(self) -> HarmonicSet:
        kind = "consecutive" if self.case == "i" else "odd"
        return HarmonicSet(kind, self.N)

    @property
    def max_target(self) -> float:
        return 0.1 if self.level == "low" else 0.9

    def omega_r(self, omega_nu: float) -> float:
        """Exact fundamental: max(n*omega_r) = target * omega_nu."""
        return self.max_target * omega_nu / self.harmonics.max_mode

    def reference_kind(self) -> str:
        if self.N == 1:
            return "sine"
        return "sawtooth_trunc" if self.case == "i" else "square_trunc"


# The class C single-mode column of the reference tables was generated with
# a legacy zero-placement parameter of 0.1; the published variable table
# (and this engine's default) gives 0.9 for class C.  The printed gains and
# closed-loop metrics of that column are only reproduced with 0.1, so the
# scenario carries it as an explicit override.
GC_N1_LEGACY_ETA: dict[int, float] = {1: 0.1}


def _scenarios() -> tuple[Scenario, ...]:
    s: list[Scenario] = []

    def add(plant_id, case, N, level, ratio, gains, t_s, n_s, m_o, **kw):
        s.append(Scenario(plant_id, case, N, level, ratio,
                          gains, t_s, n_s, m_o, **kw))

    # ---- class A benchmark, consecutive harmonics ----
    add("ga", "i", 1, "low", "0.100",
        {1: ("1.01", "0.162", "-0.0112")}, "126", "2.6", "0.5")
    add("ga", "i", 1, "high", "0.900",
        {1: ("0.272", "0.0311", "-0.244")}, "115", "22", "4.4")
    add("ga", "i", 3, "low", "0.0333",
        {1: ("1.02", "0.117", "-0.000997"),
         2: ("0.999", "0.0229", "-0.00146"),
         3: ("0.998", "0.0228", "-0.00328")}, "455", "3.2", "0.0")
    add("ga", "i", 3, "high", "0.300",
        {1: ("0.968", "0.107", "-0.0769"),
         2: ("0.903", "0.0147", "-0.107"),
         3: ("0.552", "0.00437", "-0.147")}, "321", "20", "1.3")
    add("ga", "i", 5, "low", "0.0200",
        {1: ("1.02", "0.0702", "-0.000134"),
         2: ("1.00", "0.0230", "-0.000526"),
         3: ("0.999", "0.0229", "-0.00118"),
         4: ("0.999", "0.0229", "-0.00210"),
         5: ("0.998", "0.0228", "-0.00328")}, "1008", "4.2", "0.13")
    add("ga", "i", 5, "high", "0.180",
        {1: ("1.01", "0.0680", "-0.0108"),
         2: ("0.972", "0.0200", "-0.0415"),
         3: ("0.927", "0.0163", "-0.0890"),
         4: ("0.830", "0.0111", "-0.142"),
         5: ("0.552", "0.00437", "-0.147")}, "1457", "55", "2.2")
    # ---- class A benchmark, odd harmonics ----
    add("ga", "ii", 3, "low", "0.0200",
        {1: ("1.02", "0.117", "-0.000359"),
         3: ("0.999", "0.0229", "-0.00118"),
         5: ("0.998", "0.0228", "-0.00328")}, "464", "1.9", "0.0")
    add("ga", "ii", 3, "high", "0.180",
        {1: ("1.00", "0.113", "-0.0286"),
         3: ("0.927", "0.0163", "-0.0890"),
         5: ("0.555", "0.00437", "-0.148")}, "428", "16", "5.7")
    add("ga", "ii", 5, "low", "0.0111",
        {1: ("1.02", "0.0702", "-0.0000414"),
         3: ("1.00", "0.0230", "-0.000365"),
         5: ("0.999", "0.0230", "-0.00199"),
         7: ("0.999", "0.0229", "-0.00199"),
         9: ("0.998", "0.0228", "-0.00328")}, "957", "2.2", "1.3")
    add("ga", "ii", 5, "high", "0.100",
        {1: ("1.02", "0.0695", "-0.00335"),
         3: ("0.982", "0.0210", "-0.0291"),
         5: ("0.940", "0.0173", "-0.136"),
         7: ("0.846", "0.0117", "-0.136"),
         9: ("0.552", "0.00437", "-0.147")}, "1566", "33", "3.7")

    # ---- class B benchmark, consecutive harmonics ----
    add("gb", "i", 1, "low", "0.100",
        {1: ("3.85", "1.14", "-0.0562")}, "27", "0.74", "1.9")
    add("gb", "i", 1, "high", "0.900",
        {1: ("1.22", "0.220", "-1.44")}, "27", "6.5", "1.6")
    add("gb", "i", 3, "low", "0.0333",
        {1: ("3.89", "0.923", "-0.00235"),
         2: ("0.999", "0.0295", "-0.00242"),
         3: ("0.998", "0.0293", "-0.00544")}, "96", "0.87", "0.070")
    add("gb", "i", 3, "high", "0.300",
        {1: ("3.81", "0.841", "-0.187"),
         2: ("0.903", "0.0190", "-0.177"),
         3: ("0.552", "0.00563", "-0.244")}, "46", "3.7", "0")
    add("gb", "i", 5, "low", "0.0200",
        {1: ("3.91", "0.697", "-0.000850"),
         2: ("1.00", "0.0296", "-0.000871"),
         3: ("0.999", "0.0295", "-0.00196"),
         4: ("0.999", "0.0294", "-0.00348"),
         5: ("0.998", "0.0293", "-0.00544")}, "150", "0.81", "0.39")
    add("gb", "i", 5, "high", "0.180",
        {1: ("3.88", "0.675", "-0.0685"),
         2: ("0.972", "0.0258", "-0.0686"),
         3: ("0.927", "0.0210", "-0.147"),
         4: ("0.830", "0.0143", "-0.234"),
         5: ("0.552", "0.00563", "-0.244")}, "117", "5.7", "0.046")
    # ---- class B benchmark, odd harmonics ----
    add("gb", "ii", 3, "low", "0.0200",
        {1: ("3.89", "0.923", "-0.000846"),
         3: ("0.999", "0.0295", "-0.00196"),
         5: ("0.998", "0.0293", "-0.00544")}, "218", "1.2", "3.3")
    add("gb", "ii", 3, "high", "0.180",
        {1: ("3.86", "0.894", "-0.0681"),
         3: ("0.927", "0.0210", "-0.147"),
         5: ("0.552", "0.00563", "-0.244")}, "50", "2.4", "0.022")
    add("gb", "ii", 5, "low", "0.0111",
        {1: ("3.91", "0.698", "-0.000263"),
         3: ("1.00", "0.0296", "-0.000605"),
         5: ("0.999", "0.0295", "-0.00329"),
         7: ("0.999", "0.0294", "-0.00329"),
         9: ("0.998", "0.0293", "-0.00544")}, "519", "1.6", "4.2")
    add("gb", "ii", 5, "high", "0.100",
        {1: ("3.90", "0.691", "-0.0212"),
         3: ("0.982", "0.0270", "-0.0481"),
         5: ("0.940", "0.0222", "-0.226"),
         7: ("0.846", "0.0151", "-0.226"),
         9: ("0.552", "0.00563", "-0.244")}, "129", "3.5", "0.32")

    # ---- class C benchmark, consecutive harmonics ----
    add("gc", "i", 1, "low", "0.100",
        {1: ("1.71", "1.66", "-0.0479")}, "94", "2.5", "6.3",
        eta_overrides=dict(GC_N1_LEGACY_ETA))
    add("gc", "i", 1, "high", "0.900",
        {1: ("0.332", "0.319", "-0.751")}, "24", "5.8", "0",
        eta_overrides=dict(GC_N1_LEGACY_ETA))
    add("gc", "i", 3, "low", "0.0333",
        {1: ("1.76", "1.57", "-0.00105"),
         2: ("0.999", "0.0292", "-0.00237"),
         3: ("0.998", "0.0290", "-0.00532")}, "101", "0.90", "1.2")
    add("gc", "i", 3, "high", "0.300",
        {1: ("1.73", "1.43", "-0.0832"),
         2: ("0.903", "0.0188", "-0.173"),
         3: ("0.552", "0.00557", "-0.239")}, "49", "4.0", "0.018")
    add("gc", "i", 5, "low", "0.0200",
        {1: ("1.80", "1.47", "-0.000384"),
         2: ("1.00", "0.0293", "-0.000853"),
         3: ("0.999", "0.0292", "-0.00192"),
         4: ("0.999", "0.0291", "-0.00341"),
         5: ("0.998", "0.0290", "-0.00532")}, "168", "0.9", "1.3")
    add("gc", "i", 5, "high", "0.180",
        {1: ("1.78", "1.42", "-0.0309"),
         2: ("0.972", "0.0255", "-0.0672"),
         3: ("0.927", "0.0208", "-0.144"),
         4: ("0.830", "0.0141", "-0.230"),
         5: ("0.552", "0.00557", "-0.239")}, "113", "5.4", "0")
    # ---- class C benchmark, odd harmonics ----
    add("gc", "ii", 3, "low", "0.0200",
        {1: ("1.76", "1.57", "-0.000377"),
         3: ("0.999", "0.0292", "-0.00192"),
         5: ("0.998", "0.0290", "-0.00532")}, "340", "1.8", "3.0")
    add("gc", "ii", 3, "high", "0.180",
        {1: ("1.75", "1.52", "-0.0303"),
         3: ("0.927", "0.0208", "-0.144"),
         5: ("0.552", "0.00557", "-0.239")}, "55", "2.6", "0.054")
    add("gc", "ii", 5, "low", "0.0111",
        {1: ("1.80", "1.47", "-0.000118"),
         3: ("1.00", "0.0293", "-0.000592"),
         5: ("0.999", "0.0292", "-0.00322"),
         7: ("0.999", "0.0291", "-0.00322"),
         9: ("0.998", "0.0290", "-0.00532")}, "736", "2.2", "2.9")
    add("gc", "ii", 5, "high", "0.100",
        {1: ("1.79", "1.45", "-0.00957"),
         3: ("0.982", "0.0267", "-0.0471"),
         5: ("0.940", "0.0220", "-0.221"),
         7: ("0.846", "0.0150", "-0.221"),
         9: ("0.552", "0.00557", "-0.239")}, "116", "3.1", "0.014")

    return tuple(s)


SCENARIOS: tuple[Scenario, ...] = _scenarios()
SCENARIOS_BY_ID: dict[str, Scenario] = {sc.scenario_id: sc
                                        for sc in SCENARIOS}

# The subset used for the timed closed-loop metric checks: N=1 at both
# levels, plus both five-mode cases at the high level, for each plant.
METRIC_ACCEPTANCE_IDS: tuple[str, ...] = tuple(
    f"{p}-{case}-N{N}-{level}"
    for p in ("ga", "gb", "gc")
    for case, N, level in (("i", 1, "low"), ("i", 1, "high"),
                           ("i", 5, "high"), ("ii", 5, "high"))
)

# ---------------------------------------------------------------------------
# Errata: printed cells that are arithmetically inconsistent with the
# printed inputs of their own table.  Each entry carries the reason; the
# reproduction harness reports them separately instead of passing or
# silently widening tolerances.
# ---------------------------------------------------------------------------

ERRATA: dict[str, str] = {
    # The odd-harmonic five-mode columns print the n=5 K_r2 row equal to the
    # n=7 row; the zero-product identity K_r2 = (eta^2-1) (n w_r)^2 K_p with
    # the printed K_p5 of the same column demands roughly half the printed
    # value.
    "ga-ii-N5-low:n5:K_r2": "duplicates the printed n=7 cell",
    "ga-ii-N5-high:n5:K_r2": "duplicates the printed n=7 cell",
    "gb-ii-N5-low:n5:K_r2": "duplicates the printed n=7 cell",
    "gb-ii-N5-high:n5:K_r2": "duplicates the printed n=7 cell",
    "gc-ii-N5-low:n5:K_r2": "duplicates the printed n=7 cell",
    "gc-ii-N5-high:n5:K_r2": "duplicates the printed n=7 cell",
    # Four sibling columns with the same max frequency ratio print 0.552 for
    # the top mode; this one cell prints 0.555, inconsistent with its own
    # ratio row (the gain for n>1 depends only on n*omega_r/omega_nu).
    "ga-ii-N3-high:n5:K_p": "inconsistent with the printed ratio row "
                            "(sibling columns print 0.552)",
    # No identified point that rounds to the printed (1.69, 0.255) row can
    # produce these first-mode K_r1 cells: K_r1 = beta1*(w^2-wr^2)/(M w)
    # peaks below printed-minus-one-digit over the whole rounding box.
    "gb-i-N5-low:n1:K_r1": "outside the printed-input rounding box",
    "gb-i-N5-high:n1:K_r1": "outside the printed-input rounding box",
    "gb-ii-N5-low:n1:K_r1": "outside the printed-input rounding box",
    "gb-ii-N5-high:n1:K_r1": "outside the printed-input rounding box",
}


# ---------------------------------------------------------------------------
# Diff machinery
# ---------------------------------------------------------------------------

def printed_ulp(printed: str) -> float:
    """One unit in the last printed digit of a reference cell."""
    return float(Decimal(1).scaleb(Decimal(printed).as_tuple().exponent))


@dataclass(frozen=True)
class CellDiff:
    table: str
    cell: str
    expected_str: str
    expected: float
    computed: float
    abs_err: float
    tolerance: float
    passed: bool
    note: str = ""

    def row(self) -> list:
        return [self.table, self.cell, self.expected_str,
                repr(self.computed), repr(self.abs_err),
                repr(self.tolerance), "pass" if self.passed else "FAIL",
                self.note]


@dataclass
class DiffReport:
    title: str
    cells: list[CellDiff] = field(default_factory=list)

    def add(self, table: str, cell: str, expected_str: str, computed: float,
            tolerance: float, note: str = "") -> CellDiff:
        expected = float(expected_str)
        err = abs(computed - expected)
        diff = CellDiff(table, cell, expected_str, expected, float(computed),
                        err, float(tolerance), err <= tolerance, note)
        self.cells.append(diff)
        return diff

    def extend(self, other: "DiffReport") -> None:
        self.cells.extend(other.cells)

    @property
    def n_pass(self) -> int:
        return sum(c.passed for c in self.cells)

    @property
    def n_fail(self) -> int:
        return len(self.cells) - self.n_pass

    def failed(self) -> list[CellDiff]:
        return [c for c in self.cells if not c.passed]

    def failed_ids(self) -> set[str]:
        return {c.cell for c in self.failed()}

    def to_json_dict(self) -> dict:
        return {
            "title": self.title,
            "n_pass": self.n_pass,
            "n_fail": self.n_fail,
            "cells": [
                {"table": c.table, "cell": c.cell,
                 "expected": c.expected_str, "computed": c.computed,
                 "abs_err": c.abs_err, "tolerance": c.tolerance,
                 "passed": c.passed, "note": c.note}
                for c in self.cells
            ],
        }

    def to_markdown(self, only_failures: bool = False) -> str:
        lines = [f"## {self.title}",
                 "",
                 f"{self.n_pass}/{len(self.cells)} cells within tolerance",
                 "",
                 "| table | cell | expected | computed | abs err |"
                 " tolerance | verdict | note |",
                 "|---|---|---|---|---|---|---|---|"]
        for c in self.cells:
            if only_failures and c.passed:
                continue
            lines.append("| " + " | ".join(str(v) for v in c.row()) + " |")
        lines.append("")
        return "\n".join(lines)


# ---------------------------------------------------------------------------
# Reproduction operations
# ---------------------------------------------------------------------------

def reproduce_coefficient_tables() -> DiffReport:
    """Re-derive both coefficient tables from the tuning-variable rules.

    Tolerance: one unit in the last printed digit (inputs are exact angles
    and zero-placement values, so no input rounding is involved).
    """
    report = DiffReport("coefficient tables")
    for (N, cls_name), row in sorted(PRINTED_FIRST_MODE_TABLE_STR.items()):
        derived = coefficients_for(PlantClass(cls_name), N, 1).as_tuple()
        for name, printed, value in zip(COEFFICIENT_NAMES, row, derived):
            report.add("first-mode table", f"N{N}:{cls_name}:{name}",
                       printed, value, printed_ulp(printed))
    derived = coefficients_for(PlantClass.A, 5, 2).as_tuple()
    for name, printed, value in zip(COEFFICIENT_NAMES,
                                    PRINTED_HIGHER_MODE_ROW_STR, derived):
        report.add("higher-mode table", f"n>1:{name}", printed, value,
                   printed_ulp(printed))
    return report


def _pinning_spread(point: FrequencyPoint, evaluate: Callable[[float, float],
                                                              float]) -> float:
    """Half-spread of a cell over the printed rounding box of (w_nu, m_nu).

    The pinned inputs are only known to their printed digits, so a cell
    value computed from them carries this much irreducible uncertainty.
    """
    w_ulp = printed_ulp(f"{point.omega_nu:g}")
    m_ulp = printed_ulp(f"{point.m_nu:g}")
    values = [evaluate(point.omega_nu + dw, point.m_nu + dm)
              for dw in (-0.5 * w_ulp, 0.0, 0.5 * w_ulp)
              for dm in (-0.5 * m_ulp, 0.0, 0.5 * m_ulp)]
    return 0.5 * (max(values) - min(values))


_GAIN_NAMES = ("K_p", "K_r1", "K_r2")


def _scenario_gains(scenario: Scenario, point: FrequencyPoint
                    ) -> dict[int, tuple[float, float, float]]:
    spec = TuningSpec(point, scenario.omega_r(point.omega_nu),
                      scenario.harmonics)
    controller = tune(spec, eta_overrides=scenario.eta_overrides or None)
    return {m.n: (m.k_p, m.k_r1, m.k_r2) for m in controller.modes}


def reproduce_scenario_gains(scenario: Scenario,
                             point: Optional[FrequencyPoint] = None,
                             relative_tolerance: Optional[float] = None
                             ) -> DiffReport:
    """Diff one scenario column against the pipeline's gains.

    With no explicit point the identification is pinned to the printed
    values, and cells are accepted at one last-digit unit plus the pinned
    input rounding spread.  With an explicit (end-to-end) point a relative
    tolerance must be supplied instead.
    """
    pinned = point is None
    if pinned:
        point = pinned_point(scenario.plant_id)
    elif relative_tolerance is None:
        raise ValueError("an explicit point needs a relative tolerance")
    report = DiffReport(f"gains {scenario.scenario_id}"
                        + ("" if pinned else " (end-to-end)"))
    computed = _scenario_gains(scenario, point)
    cls = BENCHMARK_CLASSES[scenario.plant_id]

    for n, printed_cells in scenario.gains.items():
        for gi, gname in enumerate(_GAIN_NAMES):
            printed = printed_cells[gi]
            value = computed[n][gi]
            cell = f"{scenario.scenario_id}:n{n}:{gname}"
            if pinned:
                eta_ov = scenario.eta_overrides.get(n)
                coeffs = coefficients_for(cls, scenario.N, n, eta_ov)

                def cell_value(w: float, m: float, _n=n, _c=coeffs) -> float:
                    pt = replace(point, omega_nu=w, m_nu=m)
                    wr = scenario.omega_r(w)
                    return compute_mode_gains(_c, pt, _n, wr, 0.0)[gi]

                tol = printed_ulp(printed) + _pinning_spread(point, cell_value)
            else:
                tol = abs(float(printed)) * relative_tolerance
            note = ERRATA.get(cell, "")
            report.add("performance gains", cell, printed, value, tol,
                       ("erratum: " + note) if note else "")
    return report


def reproduce_lead_cells() -> DiffReport:
    """Class A lead-section cells against the pinned identification."""
    report = DiffReport("lead section")
    point = pinned_point("ga")
    lead = build_phase_lead(point)
    w_ulp = printed_ulp(RAP_REFERENCE["ga"]["omega_nu"])
    report.add("lead section", "ga:k_a", LEAD_REFERENCE["k_a"], lead.k_a,
               printed_ulp(LEAD_REFERENCE["k_a"]))
    report.add("lead section", "ga:z_a", LEAD_REFERENCE["z_a"], lead.z_a,
               printed_ulp(LEAD_REFERENCE["z_a"]) + 0.4 * 0.5 * w_ulp)
    report.add("lead section", "ga:p_a", LEAD_REFERENCE["p_a"], lead.p_a,
               printed_ulp(LEAD_REFERENCE["p_a"]) + 2.5 * 0.5 * w_ulp)
    return report


def reproduce_gains_pinned() -> DiffReport:
    """All performance-table gain cells with pinned identification."""
    report = DiffReport("performance gains (pinned identification)")
    report.extend(reproduce_lead_cells())
    for scenario in SCENARIOS:
        report.extend(reproduce_scenario_gains(scenario))
    return report


def reproduce_rap(plant_ids: Iterable[str] = ("ga", "gb", "gc"),
                  sim_duration: float = 200.0, step: float = 1e-3
                  ) -> DiffReport:
    """Run the relay identification and diff it against the reference rows.

    Tolerances: 3% relative on the oscillation frequency and 7% on the
    identified magnitude (the describing-function readout is approximate).
    """
    report = DiffReport("relay identification")
    for plant_id in plant_ids:
        row = RAP_REFERENCE[plant_id]
        result = rap_auto(BENCHMARK_PLANTS[plant_id], float(row["d"]),
                          sim_duration=sim_duration, step=step)
        report.add("relay identification", f"{plant_id}:omega_nu",
                   row["omega_nu"], result.point.omega_nu,
                   0.03 * float(row["omega_nu"]))
        report.add("relay identification", f"{plant_id}:m_nu",
                   row["m_nu"], result.point.m_nu, 0.07 * float(row["m_nu"]))
        report.add("relay identification", f"{plant_id}:gamma",
                   row["gamma"], result.config.gamma_deg, 1e-12)
    return report


def metric_sim_duration(scenario: Scenario, omega_nu: float) -> float:
    """Expected settling plus five reference periods, with slack."""
    period = 2.0 * math.pi / scenario.omega_r(omega_nu)
    return 1.2 * float(scenario.t_s) + 5.0 * period


def reproduce_scenario_metrics(scenario: Scenario, step: float = 1e-3,
                               point: Optional[FrequencyPoint] = None
                               ) -> tuple[DiffReport, float]:
    """Simulate one scenario and diff t_s / n_s / M_o.

    Tolerances: 10% relative on the settling time, 1.5 percentage points on
    the overshoot; n_s follows t_s through the exact identity
    n_s = omega_r * t_s / (2 pi).  Returns the report and the measured M_o.
    """
    if point is None:
        point = pinned_point(scenario.plant_id)
    plant = BENCHMARK_PLANTS[scenario.plant_id]
    omega_r = scenario.omega_r(point.omega_nu)
    spec = TuningSpec(point, omega_r, scenario.harmonics)
    controller = tune(spec, eta_overrides=scenario.eta_overrides or None)
    ref = make_reference(scenario.reference_kind(), omega_r,
                         scenario.harmonics.modes)
    duration = metric_sim_duration(scenario, point.omega_nu)
    result = simulate_closed_loop(plant, controller, ref, duration, step)

    report = DiffReport(f"metrics {scenario.scenario_id}")
    report.add("metrics", f"{scenario.scenario_id}:t_s", scenario.t_s,
               result.t_s, 0.10 * float(scenario.t_s))
    report.add("metrics", f"{scenario.scenario_id}:M_o", scenario.m_o,
               result.m_o, 1.5)
    n_s_identity = omega_r * result.t_s / (2.0 * math.pi)
    report.add("metrics", f"{scenario.scenario_id}:n_s_identity",
               repr(n_s_identity), result.n_s, 0.0,
               note="n_s = omega_r t_s / (2 pi), exact")
    return report, result.m_o


def reproduce_example(plant_id: str, scenario_id: str, pinned: bool = True,
                      step: float = 1e-3, sim_duration: float = 200.0
                      ) -> DiffReport:
    """Full pipeline for one scenario: identify, tune, simulate, diff.

    Pinned mode isolates the formulas by fixing the identification to the
    printed values; end-to-end mode runs the relay experiment first and
    accepts 7% relative deviations on the gains.
    """
    scenario = SCENARIOS_BY_ID[scenario_id]
    if scenario.plant_id != plant_id:
        raise ValueError(f"scenario {scenario_id} is not for plant {plant_id}")
    report = DiffReport(f"example {scenario_id}"
                        + (" (pinned)" if pinned else " (end-to-end)"))
    if pinned:
        point = pinned_point(plant_id)
        report.extend(reproduce_scenario_gains(scenario))
    else:
        row = RAP_REFERENCE[plant_id]
        result = rap_auto(BENCHMARK_PLANTS[plant_id], float(row["d"]),
                          sim_duration=sim_duration, step=step)
        point = result.point
        report.add("relay identification", f"{plant_id}:omega_nu",
                   row["omega_nu"], point.omega_nu,
                   0.03 * float(row["omega_nu"]))
        report.add("relay identification", f"{plant_id}:m_nu", row["m_nu"],
                   point.m_nu, 0.07 * float(row["m_nu"]))
        report.extend(reproduce_scenario_gains(scenario, point=point,
                                               relative_tolerance=0.07))
    metrics, _ = reproduce_scenario_metrics(scenario, step=step, point=point)
    report.extend(metrics)
    return report


def reproduce_all(metric_scenarios: Optional[Iterable[str]] = None,
                  step: float = 1e-3) -> dict[str, DiffReport]:
    """The complete reproduction: tables, relay runs, gains, metrics.

    ``metric_scenarios`` defaults to every reference column; pass
    ``METRIC_ACCEPTANCE_IDS`` for the smaller timed subset.
    """
    reports = {
        "coefficient_tables": reproduce_coefficient_tables(),
        "relay_identification": reproduce_rap(step=step),
        "gains_pinned": reproduce_gains_pinned(),
    }
    ids = (tuple(metric_scenarios) if metric_scenarios is not None
           else tuple(sc.scenario_id for sc in SCENARIOS))
    metrics = DiffReport("closed-loop metrics (pinned identification)")
    overshoots = DiffReport("overshoot bound")
    for scenario_id in ids:
        scenario = SCENARIOS_BY_ID[scenario_id]
        rep, m_o = reproduce_scenario_metrics(scenario, step=step)
        metrics.extend(rep)
        overshoots.add("overshoot bound", f"{scenario_id}:M_o_max", "15",
                       m_o, 0.0, note="bound: M_o <= 15%")
    # the bound rows pass when computed <= 15, not within a band
    overshoots.cells = [
        replace(c, passed=c.computed <= 15.0) for c in overshoots.cells]
    reports["metrics"] = metrics
    reports["overshoot_bound"] = overshoots
    return reports


def report_to_markdown(reports: dict[str, DiffReport]) -> str:
    parts = ["# Benchmark reproduction report", ""]
    for rep in reports.values():
        parts.append(rep.to_markdown(only_failures=len(rep.cells) > 80))
        parts.append("")
    return "\n".join(parts)


def report_to_json(reports: dict[str, DiffReport]) -> str:
    return json.dumps({k: r.to_json_dict() for k, r in reports.items()},
                      indent=2, sort_keys=False) + "\n"
