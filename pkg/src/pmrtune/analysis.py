"""Closed-loop evaluation: tracking simulation, metrics, and margins.

The loop is the unity-feedback arrangement e = r - y, u = C(e), y = G(u).
Time-domain runs use the fixed-step RK4 kernels; frequency-domain analysis
evaluates L(s) = C(s) G(s) exactly, with the phase computed from the loop's
pole/zero decomposition so that multi-resonant loops unwrap correctly.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .ident import FrequencyPoint
from .lti import (
    StateSpaceModel,
    TransferFunction,
    freq_response_array,
    phase_response_deg,
    series,
    to_state_space,
)
from .tuning import PmrController


class ClosedLoopUnstableError(RuntimeError):
    """The simulated closed loop diverged."""

    def __init__(self, message: str, time: float):
        super().__init__(message)
        self.time = time


# ---------------------------------------------------------------------------
# Periodic references
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ReferenceSignal:
    """Truncated Fourier reference: r(t) = sum_k amps[k] sin(modes[k] w_r t)."""

    kind: str  # "sine" | "sawtooth_trunc" | "square_trunc"
    omega_r: float
    modes: tuple[int, ...]
    amplitudes: tuple[float, ...]

    @property
    def period(self) -> float:
        return 2.0 * math.pi / self.omega_r

    def sample(self, t: np.ndarray) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        r = np.zeros_like(t)
        for n, a in zip(self.modes, self.amplitudes):
            r += a * np.sin(n * self.omega_r * t)
        return r

    @property
    def r_max(self) -> float:
        """Peak absolute value over one period (dense numeric maximum)."""
        t = np.linspace(0.0, self.period, 20001)
        return float(np.max(np.abs(self.sample(t))))

    def scaled(self, c: float) -> "ReferenceSignal":
        return ReferenceSignal(self.kind, self.omega_r, self.modes,
                               tuple(c * a for a in self.amplitudes))


def make_reference(kind: str, omega_r: float, modes: Sequence[int]
                   ) -> ReferenceSignal:
    """Build a sine, truncated-sawtooth or truncated-square reference.

    Sawtooth truncations use consecutive harmonics with alternating-sign 1/n
    weights; square truncations use odd harmonics with 4/(pi n) weights.
    """
    if omega_r <= 0.0:
        raise ValueError("omega_r must be positive")
    modes = tuple(int(n) for n in modes)
    if not modes or modes[0] != 1 or list(modes) != sorted(set(modes)):
        raise ValueError("modes must be strictly increasing and start at 1")
    if kind == "sine":
        if modes != (1,):
            raise ValueError("a sine reference has the single mode 1")
        return ReferenceSignal(kind, omega_r, (1,), (1.0,))
    if kind == "sawtooth_trunc":
        if any(b - a != 1 for a, b in zip(modes, modes[1:])):
            raise ValueError("sawtooth truncation needs consecutive modes")
        amps = tuple((2.0 / math.pi) * ((-1.0) ** (n + 1)) / n for n in modes)
        return ReferenceSignal(kind, omega_r, modes, amps)
    if kind == "square_trunc":
        if any(n % 2 == 0 for n in modes):
            raise ValueError("square truncation needs odd modes")
        if any(b - a != 2 for a, b in zip(modes, modes[1:])):
            raise ValueError("square truncation needs consecutive odd modes")
        amps = tuple((4.0 / math.pi) / n for n in modes)
        return ReferenceSignal(kind, omega_r, modes, amps)
    raise ValueError(f"unknown reference kind {kind!r}")


# ---------------------------------------------------------------------------
# Closed-loop simulation and metrics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SimulationResult:
    """Sampled loop signals plus the tracking metrics."""

    time: np.ndarray
    r: np.ndarray
    y: np.ndarray
    u: np.ndarray
    e: np.ndarray
    step: float
    omega_r: float
    t_s: float               # settling time of |e| into the 2% band
    n_s: float               # t_s in reference periods: omega_r*t_s/(2 pi)
    m_o: float               # overshoot percent, >= 0
    r_max: float
    y_max: float
    settled: bool

    def metrics_dict(self) -> dict:
        return {"t_s": self.t_s, "n_s": self.n_s, "M_o": self.m_o,
                "r_max": self.r_max, "y_max": self.y_max,
                "settled": self.settled}


SETTLING_BAND = 0.02  # fraction of r_max the error must stay within


def _loop_realizations(plant: TransferFunction, controller: PmrController
                       ) -> tuple[StateSpaceModel, StateSpaceModel]:
    if not plant.is_strictly_proper:
        raise ValueError("plant must be strictly proper")
    return to_state_space(plant), controller.realization()


def simulate_closed_loop(plant: TransferFunction, controller: PmrController,
                         ref: ReferenceSignal, duration: float,
                         step: float = 1e-3) -> SimulationResult:
    """Track ``ref`` from zero initial state and measure t_s, n_s, M_o.

    The settling time is the earliest instant after which |e(t)| stays
    within 2% of the reference peak; the overshoot compares the largest
    |y(t)| against that peak.  Divergence raises
    :class:`ClosedLoopUnstableError` with the blow-up time.
    """
    if step <= 0.0 or duration <= step:
        raise ValueError("need step > 0 and duration > step")
    plant_ss, ctrl_ss = _loop_realizations(plant, controller)
    if plant.delay > 0.0 and step > plant.delay:
        raise ValueError("step must not exceed the plant dead time")
    delay_steps = int(round(plant.delay / step))
    nsteps = int(round(duration / step))
    wts = np.array([n * ref.omega_r for n in ref.modes], dtype=float)
    amps = np.array(ref.amplitudes, dtype=float)

    from ._kernels import rk4_closed_loop

    y, u, r = rk4_closed_loop(
        plant_ss.A, plant_ss.B[:, 0].copy(), plant_ss.C[0, :].copy(),
        ctrl_ss.A, ctrl_ss.B[:, 0].copy(), ctrl_ss.C[0, :].copy(),
        float(ctrl_ss.D[0, 0]), wts, amps, float(step), nsteps, delay_steps)
    if len(y) != nsteps + 1 or not np.isfinite(y[-1]):
        t_bad = (len(y) - 1) * step
        raise ClosedLoopUnstableError(
            f"closed loop unstable: diverged at t={t_bad:.6g}", t_bad)

    t = np.arange(nsteps + 1) * step
    e = r - y
    r_max = float(np.max(np.abs(r)))
    y_max = float(np.max(np.abs(y)))
    m_o = max((y_max - r_max) / r_max, 0.0) * 100.0

    violations = np.abs(e) > SETTLING_BAND * r_max
    if violations[-1]:
        t_s, settled = math.inf, False
    elif not violations.any():
        t_s, settled = 0.0, True
    else:
        last = int(np.where(violations)[0][-1])
        t_s, settled = float(t[last + 1]), True
    n_s = ref.omega_r * t_s / (2.0 * math.pi)
    return SimulationResult(t, r, y, u, e, step, ref.omega_r,
                            t_s, n_s, m_o, r_max, y_max, settled)


# ---------------------------------------------------------------------------
# Frequency-domain margins
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Crossing:
    omega: float
    magnitude: float
    phase_deg: float


@dataclass(frozen=True)
class MarginReport:
    """Margins of L = C*G with the controller's damping as tuned.

    Multi-resonant loops cross unit gain several times, so the phase margin
    is reported both at the crossing nearest the identified frequency and as
    the global worst case (smallest angular distance to -180 degrees over
    all unit-gain crossings).
    """

    gain_margin: float
    gain_margin_omega: float
    phase_margin_deg: float                # worst case
    phase_margin_omega: float
    phase_margin_at_nu_deg: float          # crossing nearest omega_nu
    phase_margin_at_nu_omega: float
    unit_gain_crossings: tuple[Crossing, ...]
    phase_crossings: tuple[Crossing, ...]
    omega_nu: Optional[float]

    def to_dict(self) -> dict:
        return {
            "gain_margin": self.gain_margin,
            "gain_margin_omega": self.gain_margin_omega,
            "phase_margin_deg": self.phase_margin_deg,
            "phase_margin_omega": self.phase_margin_omega,
            "phase_margin_at_nu_deg": self.phase_margin_at_nu_deg,
            "phase_margin_at_nu_omega": self.phase_margin_at_nu_omega,
            "omega_nu": self.omega_nu,
        }


def loop_transfer_function(plant: TransferFunction,
                           controller: PmrController) -> TransferFunction:
    return series(controller.transfer_function(), plant)


def _resonance_frequencies(controller: PmrController) -> list[float]:
    return [m.omega_rn for m in controller.modes if m.xi_n == 0.0]


def _phase_distance_to_minus_180(phase_deg: float) -> float:
    """Angular distance (0, 180] from the -1 direction, mod 360."""
    d = (phase_deg + 180.0) % 360.0
    if d > 180.0:
        d = 360.0 - d
    return abs(d)


def margins(plant: TransferFunction, controller: PmrController,
            sweep_decades: tuple[float, float] = (-3.0, 3.0),
            points_per_decade: int = 400) -> MarginReport:
    """Locate unit-gain and -180-degree crossings of the loop.

    Dense log sweep plus bisection refinement; undamped resonances are
    excluded (the magnitude diverges and the phase drops 180 degrees there,
    which is not a true crossing).  No crossover of a kind means that margin
    is reported as infinite.
    """
    L = loop_transfer_function(plant, controller)
    omega_nu = (controller.design_point.omega_nu
                if controller.design_point else None)
    poles = _resonance_frequencies(controller)

    # factor the loop once; bisection then evaluates magnitude and phase
    # from the roots directly
    zs = L.zeros()
    ps = L.poles()
    sign_offset = 180.0 if (L.num[0] / L.den[0]) < 0 else 0.0

    def mag_at(w: float) -> float:
        val = abs(L.num[0] / L.den[0])
        for z in zs:
            val *= abs(1j * w - z)
        for p in ps:
            val /= abs(1j * w - p)
        return val

    def phase_at(w: float) -> float:
        ph_v = sign_offset
        for z in zs:
            ph_v += math.degrees(math.atan2(w - z.imag, -z.real))
        for p in ps:
            ph_v -= math.degrees(math.atan2(w - p.imag, -p.real))
        return ph_v - math.degrees(w * L.delay)

    n_pts = int((sweep_decades[1] - sweep_decades[0]) * points_per_decade)
    grid = np.logspace(sweep_decades[0], sweep_decades[1], n_pts)
    # keep a guard gap around each undamped resonance
    for wp in poles:
        grid = grid[np.abs(np.log(grid / wp)) > 1e-7]
    mag = np.abs(freq_response_array(L, grid))
    ph = phase_response_deg(L, grid)

    def refine(lo: float, hi: float, f) -> float:
        f_lo = f(lo)
        for _ in range(200):
            mid = math.sqrt(lo * hi)
            f_mid = f(mid)
            if f_mid * f_lo > 0:
                lo, f_lo = mid, f_mid
            else:
                hi = mid
            if hi - lo <= 1e-12 * mid:
                break
        return math.sqrt(lo * hi)

    def is_pole_gap(i: int) -> bool:
        lo, hi = grid[i], grid[i + 1]
        return any(lo < wp < hi for wp in poles)

    unit_crossings: list[Crossing] = []
    for i in np.where((mag[:-1] - 1.0) * (mag[1:] - 1.0) < 0.0)[0]:
        if is_pole_gap(int(i)):
            continue
        wc = refine(grid[i], grid[i + 1], lambda w: mag_at(w) - 1.0)
        unit_crossings.append(Crossing(wc, 1.0, phase_at(wc)))

    phase_crossings: list[Crossing] = []
    # the unwrapped phase may fall through several -180 - k*360 levels;
    # crossings with negligible magnitude cannot set the gain margin
    levels = np.arange(math.floor(ph.min() / 360.0) * 360.0 - 180.0,
                       ph.max() + 360.0, 360.0)
    for level in levels:
        for i in np.where((ph[:-1] - level) * (ph[1:] - level) < 0.0)[0]:
            if is_pole_gap(int(i)):
                continue
            if max(mag[i], mag[i + 1]) < 1e-4:
                continue
            wc = refine(grid[i], grid[i + 1],
                        lambda w: phase_at(w) - float(level))
            phase_crossings.append(Crossing(wc, mag_at(wc), float(level)))
    phase_crossings.sort(key=lambda c: c.omega)

    if phase_crossings:
        worst = min(phase_crossings, key=lambda c: 1.0 / c.magnitude)
        gm = 1.0 / worst.magnitude
        gm_omega = worst.omega
    else:
        gm, gm_omega = math.inf, math.nan

    if unit_crossings:
        worst_pm = min(unit_crossings,
                       key=lambda c: _phase_distance_to_minus_180(c.phase_deg))
        pm = _phase_distance_to_minus_180(worst_pm.phase_deg)
        pm_omega = worst_pm.omega
        if omega_nu is not None:
            near = min(unit_crossings, key=lambda c: abs(c.omega - omega_nu))
        else:
            near = worst_pm
        pm_nu = _phase_distance_to_minus_180(near.phase_deg)
        pm_nu_omega = near.omega
    else:
        pm, pm_omega = math.inf, math.nan
        pm_nu, pm_nu_omega = math.inf, math.nan

    return MarginReport(gm, gm_omega, pm, pm_omega, pm_nu, pm_nu_omega,
                        tuple(unit_crossings), tuple(phase_crossings),
                        omega_nu)


# ---------------------------------------------------------------------------
# Nyquist data and stability verdicts
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NyquistData:
    omega: np.ndarray
    values: np.ndarray
    skipped_omegas: tuple[float, ...]
    marked_omega: Optional[float]
    marked_value: Optional[complex]


def nyquist_data(plant: TransferFunction, controller: PmrController,
                 omega_grid: np.ndarray) -> NyquistData:
    """Loop locus samples for export; resonance poles are skipped."""
    L = loop_transfer_function(plant, controller)
    poles = _resonance_frequencies(controller)
    grid = np.asarray(omega_grid, dtype=float)
    keep = np.ones(len(grid), dtype=bool)
    skipped = []
    for wp in poles:
        hit = np.isclose(grid, wp, rtol=1e-9, atol=0.0)
        skipped.extend(grid[hit].tolist())
        keep &= ~hit
    grid = grid[keep]
    values = freq_response_array(L, grid)
    marked_omega = (controller.design_point.omega_nu
                    if controller.design_point else None)
    marked_value = None
    if marked_omega is not None:
        marked_value = complex(freq_response_array(
            L, np.array([marked_omega]))[0])
    return NyquistData(grid, values, tuple(skipped), marked_omega,
                       marked_value)


def _closed_loop_matrix(plant_ss: StateSpaceModel,
                        ctrl_ss: StateSpaceModel) -> np.ndarray:
    """State matrix of the r->y loop (delay-free plants only)."""
    Ag, Bg, Cg = plant_ss.A, plant_ss.B, plant_ss.C
    Ac, Bc, Cc, Dc = ctrl_ss.A, ctrl_ss.B, ctrl_ss.C, ctrl_ss.D
    ng, nc = Ag.shape[0], Ac.shape[0]
    A = np.zeros((ng + nc, ng + nc))
    A[:ng, :ng] = Ag - Bg @ Dc @ Cg
    A[:ng, ng:] = Bg @ Cc
    A[ng:, :ng] = -Bc @ Cg
    A[ng:, ng:] = Ac
    return A


STABILITY_EIG_TOL = -1e-9


def stability_check(plant: TransferFunction, controller: PmrController,
                    reference: Optional[ReferenceSignal] = None,
                    step: float = 1e-3) -> dict:
    """Stable / unstable / inconclusive verdict for the closed loop.

    Delay-free plants use the closed-loop eigenvalues (strictly negative
    real parts required).  Dead-time plants fall back to simulation: track
    the design reference long enough to see either settling or a growing
    error envelope.
    """
    if plant.delay == 0.0:
        plant_ss, ctrl_ss = _loop_realizations(plant, controller)
        eigs = np.linalg.eigvals(_closed_loop_matrix(plant_ss, ctrl_ss))
        worst = float(np.max(eigs.real))
        verdict = "stable" if worst < STABILITY_EIG_TOL else "unstable"
        return {"verdict": verdict, "method": "eigenvalues",
                "max_real_part": worst}

    if reference is None:
        omega_r = controller.omega_r or (controller.modes[0].omega_rn
                                         if controller.modes else 1.0)
        reference = make_reference("sine", omega_r, [1])
    period = reference.period

    # first pass to estimate the settling time, then confirm over >= 20x it
    try:
        probe = simulate_closed_loop(plant, controller, reference,
                                     duration=40.0 * period, step=step)
    except ClosedLoopUnstableError as exc:
        return {"verdict": "unstable", "method": "simulation",
                "diverged_at": exc.time}
    t_s_est = probe.t_s if probe.settled else 40.0 * period
    duration = max(20.0 * t_s_est, 40.0 * period)
    try:
        run = simulate_closed_loop(plant, controller, reference,
                                   duration=duration, step=step)
    except ClosedLoopUnstableError as exc:
        return {"verdict": "unstable", "method": "simulation",
                "diverged_at": exc.time}

    samples_per_period = max(int(round(period / step)), 1)
    n_periods = len(run.e) // samples_per_period
    envelope = np.array([
        np.max(np.abs(run.e[k * samples_per_period:
                            (k + 1) * samples_per_period]))
        for k in range(n_periods)])
    detail = {"method": "simulation", "duration": duration,
              "envelope_periods": n_periods}
    tail = envelope[-max(2, n_periods // 10):]
    if np.all(tail <= SETTLING_BAND * run.r_max):
        return {"verdict": "stable", **detail}
    head_max = float(np.max(envelope[: max(1, n_periods // 2)]))
    tail_max = float(np.max(tail))
    if tail_max > 1.5 * head_max:
        return {"verdict": "unstable", **detail}
    if tail_max <= 1.001 * head_max:
        return {"verdict": "stable", **detail}
    return {"verdict": "inconclusive", **detail}


# ---------------------------------------------------------------------------
# File exports
# ---------------------------------------------------------------------------

def write_timeseries_csv(path, result: SimulationResult) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "r", "y", "u", "e"])
        for row in zip(result.time, result.r, result.y, result.u, result.e):
            writer.writerow([repr(float(v)) for v in row])


def write_bode_csv(path, tf: TransferFunction, omega: np.ndarray) -> None:
    values = freq_response_array(tf, omega)
    phases = phase_response_deg(tf, omega)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["omega", "mag_dB", "phase_deg"])
        for w, v, p in zip(omega, values, phases):
            mag_db = 20.0 * math.log10(abs(v)) if abs(v) > 0 else -math.inf
            writer.writerow([repr(float(w)), repr(mag_db), repr(float(p))])


def write_nyquist_csv(path, data: NyquistData) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["omega", "re", "im"])
        for w, v in zip(data.omega, data.values):
            writer.writerow([repr(float(w)), repr(float(v.real)),
                             repr(float(v.imag))])
