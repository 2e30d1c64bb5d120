"""Rational LTI models with optional input dead time.

Transfer functions are stored as real coefficient tuples in descending
powers of s plus a nonnegative transport delay.  Frequency responses are
evaluated exactly (the delay contributes e^(-j*omega*tau)); time simulation
uses a fixed-step RK4 integrator with the delay realized as an integer-step
shift of the input history.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


class PoleAtFrequencyError(ValueError):
    """Frequency response requested exactly at a pole on the imaginary axis."""


class ImproperSystemError(ValueError):
    """State-space realization requested for an improper transfer function."""


class SimulationDivergedError(RuntimeError):
    """Fixed-step simulation produced a non-finite state."""

    def __init__(self, message: str, time: float):
        super().__init__(message)
        self.time = time


def _trim_leading_zeros(coeffs: Sequence[float]) -> tuple[float, ...]:
    c = [float(v) for v in coeffs]
    while len(c) > 1 and c[0] == 0.0:
        c.pop(0)
    return tuple(c)


@dataclass(frozen=True)
class TransferFunction:
    """Rational transfer function num(s)/den(s) * e^(-s*delay).

    Coefficients are in descending powers of s.  Immutable; composition via
    :func:`series` (also available as the ``*`` operator).
    """

    num: tuple[float, ...]
    den: tuple[float, ...]
    delay: float = 0.0

    def __init__(self, num: Sequence[float], den: Sequence[float],
                 delay: float = 0.0):
        num_t = _trim_leading_zeros(num)
        den_t = _trim_leading_zeros(den)
        if not den_t or den_t[0] == 0.0:
            raise ValueError("denominator leading coefficient must be nonzero")
        if not all(math.isfinite(v) for v in num_t + den_t):
            raise ValueError("coefficients must be finite")
        if delay < 0.0:
            raise ValueError("delay must be nonnegative")
        if num_t == (0.0,):
            den_t = (1.0,)  # canonical zero system, no spurious states
        object.__setattr__(self, "num", num_t)
        object.__setattr__(self, "den", den_t)
        object.__setattr__(self, "delay", float(delay))

    @property
    def order(self) -> int:
        return len(self.den) - 1

    @property
    def relative_degree(self) -> int:
        return (len(self.den) - 1) - (len(self.num) - 1)

    @property
    def is_proper(self) -> bool:
        return self.relative_degree >= 0

    @property
    def is_strictly_proper(self) -> bool:
        return self.relative_degree >= 1

    def __mul__(self, other: "TransferFunction") -> "TransferFunction":
        return series(self, other)

    def response(self, omega: float) -> complex:
        return freq_response(self, omega).value

    def poles(self) -> np.ndarray:
        return np.roots(self.den)

    def zeros(self) -> np.ndarray:
        if len(self.num) < 2:
            return np.array([], dtype=complex)
        return np.roots(self.num)

    def to_text(self) -> str:
        num = "[" + ", ".join(repr(v) for v in self.num) + "]"
        den = "[" + ", ".join(repr(v) for v in self.den) + "]"
        return f"num={num}; den={den}; delay={self.delay!r}"


_TEXT_RE = re.compile(
    r"num\s*=\s*\[(?P<num>[^\]]*)\]\s*;\s*den\s*=\s*\[(?P<den>[^\]]*)\]"
    r"(?:\s*;\s*delay\s*=\s*(?P<delay>[-+0-9.eE]+))?\s*$"
)


def parse_transfer_function(text: str) -> TransferFunction:
    """Parse ``num=[1]; den=[1, 2, 1]; delay=1.0`` into a TransferFunction."""
    m = _TEXT_RE.match(text.strip())
    if not m:
        raise ValueError(f"cannot parse transfer function from {text!r}")
    num = [float(v) for v in m.group("num").split(",") if v.strip()]
    den = [float(v) for v in m.group("den").split(",") if v.strip()]
    delay = float(m.group("delay")) if m.group("delay") else 0.0
    return TransferFunction(num, den, delay)


@dataclass(frozen=True)
class ComplexResponse:
    """One frequency-response sample G(j*omega)."""

    omega: float
    value: complex

    @property
    def magnitude(self) -> float:
        return abs(self.value)

    @property
    def phase_deg(self) -> float:
        return math.degrees(math.atan2(self.value.imag, self.value.real))


def freq_response(tf: TransferFunction, omega: float) -> ComplexResponse:
    """Evaluate G(j*omega) exactly, including the dead-time factor."""
    if omega < 0.0:
        raise ValueError("omega must be nonnegative")
    s = 1j * omega
    den_v = np.polyval(tf.den, s)
    if den_v == 0:
        raise PoleAtFrequencyError(
            f"pole at evaluation frequency omega={omega!r}")
    val = np.polyval(tf.num, s) / den_v
    if tf.delay:
        val *= np.exp(-s * tf.delay)
    return ComplexResponse(float(omega), complex(val))


def freq_response_array(tf: TransferFunction, omega: np.ndarray) -> np.ndarray:
    """Vectorized G(j*omega); poles on the grid yield inf, not an error."""
    s = 1j * np.asarray(omega, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        val = np.polyval(tf.num, s) / np.polyval(tf.den, s)
    if tf.delay:
        val = val * np.exp(-s * tf.delay)
    return val


def phase_response_deg(tf: TransferFunction, omega: np.ndarray) -> np.ndarray:
    """Exact unwrapped phase in degrees over a frequency grid.

    Computed from the pole/zero decomposition so it is continuous by
    construction (except for the 180-degree jumps at imaginary-axis poles or
    zeros) and starts from the DC asymptote.  This is what plant
    classification relies on; no heuristic unwrapping is involved.
    """
    w = np.asarray(omega, dtype=float)
    ph = np.zeros_like(w)
    gain = tf.num[0] / tf.den[0]
    if gain < 0:
        ph = ph + 180.0
    for z in tf.zeros():
        ph = ph + np.degrees(np.arctan2(w - z.imag, -z.real))
    for p in tf.poles():
        ph = ph - np.degrees(np.arctan2(w - p.imag, -p.real))
    if tf.delay:
        ph = ph - np.degrees(w * tf.delay)
    return ph


def series(a: TransferFunction, b: TransferFunction) -> TransferFunction:
    """Series composition: polynomial convolution, delays add."""
    num = np.convolve(a.num, b.num)
    den = np.convolve(a.den, b.den)
    return TransferFunction(num, den, a.delay + b.delay)


def identity_tf() -> TransferFunction:
    return TransferFunction([1.0], [1.0])


@dataclass(frozen=True)
class StateSpaceModel:
    """Realization x' = Ax + Bu(t - input_delay), y = Cx + Du(t - input_delay)."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    input_delay: float = 0.0

    def __post_init__(self):
        for name in ("A", "B", "C", "D"):
            arr = np.ascontiguousarray(np.atleast_2d(getattr(self, name)),
                                       dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        n = self.A.shape[0]
        if self.A.shape != (n, n) or self.B.shape != (n, 1) \
                or self.C.shape != (1, n) or self.D.shape != (1, 1):
            raise ValueError("inconsistent state-space dimensions")

    @property
    def order(self) -> int:
        return self.A.shape[0]

    def response(self, omega: float) -> complex:
        """C (jwI - A)^-1 B + D, including the delay factor."""
        s = 1j * omega
        n = self.order
        if n == 0:
            val = complex(self.D[0, 0])
        else:
            val = complex(
                (self.C @ np.linalg.solve(s * np.eye(n) - self.A, self.B)
                 + self.D)[0, 0])
        if self.input_delay:
            val *= np.exp(-s * self.input_delay)
        return val


def to_state_space(tf: TransferFunction) -> StateSpaceModel:
    """Controllable canonical realization of a proper transfer function."""
    if not tf.is_proper:
        raise ImproperSystemError(
            "state-space realization requires a proper transfer function")
    den = np.asarray(tf.den, dtype=float)
    num = np.asarray(tf.num, dtype=float)
    den0 = den[0]
    den = den / den0
    num = num / den0
    n = len(den) - 1
    if len(num) < len(den):
        num = np.concatenate([np.zeros(len(den) - len(num)), num])
    d = num[0]
    if n == 0:
        return StateSpaceModel(np.zeros((0, 0)), np.zeros((0, 1)),
                               np.zeros((1, 0)), np.array([[d]]), tf.delay)
    num_r = num[1:] - d * den[1:]
    A = np.zeros((n, n))
    if n > 1:
        A[:-1, 1:] = np.eye(n - 1)
    A[-1, :] = -den[1:][::-1]
    B = np.zeros((n, 1))
    B[-1, 0] = 1.0
    C = num_r[::-1].reshape(1, n)
    return StateSpaceModel(A, B, C, np.array([[d]]), tf.delay)


def series_state_space(first: StateSpaceModel,
                       second: StateSpaceModel) -> StateSpaceModel:
    """Cascade u -> first -> second -> y.

    Used to realize factored products (controller blocks, relay chains)
    without forming the ill-conditioned high-order polynomial.
    """
    A1, B1, C1, D1 = first.A, first.B, first.C, first.D
    A2, B2, C2, D2 = second.A, second.B, second.C, second.D
    n1, n2 = A1.shape[0], A2.shape[0]
    A = np.zeros((n1 + n2, n1 + n2))
    A[:n1, :n1] = A1
    A[n1:, n1:] = A2
    A[n1:, :n1] = B2 @ C1
    B = np.vstack([B1, B2 @ D1])
    C = np.hstack([D2 @ C1, C2])
    D = D2 @ D1
    return StateSpaceModel(A, B, C, D, first.input_delay + second.input_delay)


def cascade_realization(blocks: Sequence[TransferFunction]) -> StateSpaceModel:
    """Realize a series product block by block (well conditioned)."""
    if not blocks:
        return to_state_space(identity_tf())
    ss = to_state_space(blocks[0])
    for block in blocks[1:]:
        ss = series_state_space(ss, to_state_space(block))
    return ss


def simulate(ss: StateSpaceModel, input_samples: np.ndarray,
             step: float) -> np.ndarray:
    """Fixed-step RK4 simulation from zero initial state.

    ``input_samples`` is u(t) on the grid t = k*step.  The dead time is
    rounded to the nearest integer number of steps (error <= step/2), which
    requires step <= delay for delayed systems.  Divergence raises
    :class:`SimulationDivergedError` carrying the blow-up time.
    """
    if step <= 0.0:
        raise ValueError("step must be positive")
    if ss.input_delay > 0.0 and step > ss.input_delay:
        raise ValueError("step must not exceed the dead time")
    from ._kernels import rk4_lti

    u = np.ascontiguousarray(input_samples, dtype=float)
    delay_steps = int(round(ss.input_delay / step))
    y = rk4_lti(ss.A, ss.B[:, 0].copy(), ss.C[0, :].copy(),
                float(ss.D[0, 0]), u, float(step), delay_steps)
    if not np.all(np.isfinite(y)):
        bad = int(np.argmax(~np.isfinite(y)))
        raise SimulationDivergedError(
            f"state diverged at t={bad * step:.6g}", bad * step)
    return y
