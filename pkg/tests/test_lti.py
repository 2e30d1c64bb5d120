import math

import numpy as np
import pytest

from pmrtune.lti import (
    ImproperSystemError,
    PoleAtFrequencyError,
    SimulationDivergedError,
    TransferFunction,
    cascade_realization,
    freq_response,
    parse_transfer_function,
    phase_response_deg,
    series,
    simulate,
    to_state_space,
)

from conftest import random_stable_tf


GA = TransferFunction([1.0], [1.0, 2.0, 1.0], 1.0)
GB = TransferFunction([1.0], [1.0, 2.0, 1.0])
GC = TransferFunction([1.0], [1.0, 1.0])


def ultimate_frequency_oracle() -> float:
    """Independent root-find of w + 2*atan(w) = pi by plain bisection."""
    f = lambda w: w + 2.0 * math.atan(w) - math.pi
    lo, hi = 1.0, 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if f(mid) > 0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


class TestFreqResponse:
    def test_first_order_dc_gain(self):
        r = freq_response(GC, 0.0)
        assert r.magnitude == pytest.approx(1.0)
        assert r.phase_deg == pytest.approx(0.0)

    def test_first_order_corner(self):
        r = freq_response(GC, 1.0)
        assert r.magnitude == pytest.approx(1.0 / math.sqrt(2.0), rel=1e-12)
        assert r.phase_deg == pytest.approx(-45.0, abs=1e-12)

    def test_dead_time_plant_at_ultimate_frequency(self):
        w_u = ultimate_frequency_oracle()
        r = freq_response(GA, w_u)
        # |G| = 1/(1+w^2) in closed form; 0.3695 at display precision
        assert r.magnitude == pytest.approx(1.0 / (1.0 + w_u * w_u),
                                            rel=1e-12)
        assert r.magnitude == pytest.approx(0.3695, abs=1.5e-4)
        unwrapped = phase_response_deg(GA, np.array([w_u]))[0]
        assert unwrapped == pytest.approx(-180.0, abs=1e-6)

    def test_pole_on_axis_raises(self):
        resonator = TransferFunction([1.0], [1.0, 0.0, 4.0])
        with pytest.raises(PoleAtFrequencyError):
            freq_response(resonator, 2.0)

    def test_negative_frequency_rejected(self):
        with pytest.raises(ValueError):
            freq_response(GC, -1.0)


class TestSeries:
    def test_repeated_pole(self):
        prod = series(GC, GC)
        assert prod.num == (1.0,)
        assert prod.den == (1.0, 2.0, 1.0)

    def test_identity_element(self):
        ident = TransferFunction([1.0], [1.0])
        prod = series(GA, ident)
        assert prod.num == GA.num
        assert prod.den == GA.den
        assert prod.delay == GA.delay

    def test_delays_add(self):
        prod = series(GA, TransferFunction([1.0], [1.0, 1.0], 0.5))
        assert prod.delay == pytest.approx(1.5)

    def test_response_multiplies(self):
        rng = np.random.default_rng(42)
        for _ in range(25):
            a = random_stable_tf(rng, with_delay=True)
            b = random_stable_tf(rng)
            w = float(rng.uniform(0.01, 20.0))
            lhs = freq_response(series(a, b), w).value
            rhs = freq_response(a, w).value * freq_response(b, w).value
            assert abs(lhs - rhs) <= 1e-10 * max(abs(rhs), 1e-30)


class TestStateSpace:
    def test_first_order_canonical(self):
        ss = to_state_space(GC)
        assert ss.A == pytest.approx(np.array([[-1.0]]))
        assert ss.B == pytest.approx(np.array([[1.0]]))
        assert ss.C == pytest.approx(np.array([[1.0]]))
        assert ss.D == pytest.approx(np.array([[0.0]]))

    def test_biproper_feedthrough(self):
        ss = to_state_space(TransferFunction([1.0, 2.0], [1.0, 1.0]))
        assert ss.D[0, 0] == pytest.approx(1.0)
        # residual is 1/(s+1)
        assert ss.A[0, 0] == pytest.approx(-1.0)
        assert ss.C[0, 0] == pytest.approx(1.0)

    def test_improper_rejected(self):
        with pytest.raises(ImproperSystemError):
            to_state_space(TransferFunction([1.0, 0.0, 0.0], [1.0, 1.0]))

    def test_matches_rational_response(self):
        rng = np.random.default_rng(7)
        omegas = np.logspace(-2, 2, 100)
        for _ in range(10):
            tf = random_stable_tf(rng)
            ss = to_state_space(tf)
            for w in omegas:
                expected = freq_response(tf, float(w)).value
                assert abs(ss.response(float(w)) - expected) \
                    <= 1e-9 * abs(expected)

    def test_cascade_matches_product(self):
        blocks = [TransferFunction([2.0, 1.0], [1.0, 3.0]),
                  TransferFunction([1.0], [1.0, 0.4, 4.0]),
                  TransferFunction([1.0, 0.2], [1.0, 5.0])]
        prod = blocks[0]
        for b in blocks[1:]:
            prod = series(prod, b)
        ss = cascade_realization(blocks)
        assert ss.order == 4
        for w in np.logspace(-2, 2, 50):
            expected = freq_response(prod, float(w)).value
            assert abs(ss.response(float(w)) - expected) \
                <= 1e-10 * abs(expected)


class TestSimulate:
    def test_first_order_step(self):
        h = 1e-3
        n = int(1.0 / h) + 1
        y = simulate(to_state_space(GC), np.ones(n), h)
        assert y[-1] == pytest.approx(1.0 - math.exp(-1.0), abs=1e-4)

    def test_pure_transport_delay(self):
        h = 1e-3
        delayed = TransferFunction([1.0], [1.0, 1.0], 1.0)
        n = int(2.0 / h) + 1
        y = simulate(to_state_space(delayed), np.ones(n), h)
        t = np.arange(n) * h
        assert np.all(y[t < 1.0] == 0.0)
        assert y[-1] > 0.5

    def test_double_pole_step_closed_form(self):
        h = 1e-3
        n = int(6.0 / h) + 1
        y = simulate(to_state_space(GB), np.ones(n), h)
        t = np.arange(n) * h
        exact = 1.0 - (1.0 + t) * np.exp(-t)
        assert np.max(np.abs(y - exact)) < 1e-6

    def test_step_larger_than_delay_rejected(self):
        delayed = TransferFunction([1.0], [1.0, 1.0], 1e-4)
        with pytest.raises(ValueError):
            simulate(to_state_space(delayed), np.ones(10), 1e-3)

    def test_divergence_is_signaled(self):
        unstable = TransferFunction([1.0], [1.0, -10.0])
        with pytest.raises(SimulationDivergedError):
            simulate(to_state_space(unstable), np.ones(100001), 1e-3)

    @pytest.mark.parametrize("omega", [0.3, 1.0, 4.0])
    def test_sinusoid_steady_state_matches_response(self, omega):
        self._check_steady_state(GB, omega)

    def test_sinusoid_steady_state_random_plants(self):
        rng = np.random.default_rng(11)
        for _ in range(5):
            tf = random_stable_tf(rng, max_order=3)
            omega = float(rng.uniform(0.2, 5.0))
            self._check_steady_state(tf, omega)

    @staticmethod
    def _check_steady_state(tf, omega):
        h = min(1e-3, 2.0 * math.pi / (1000.0 * omega))
        slowest = max(-1.0 / p.real for p in tf.poles() if p.real < 0)
        period = 2.0 * math.pi / omega
        duration = 12.0 * slowest + 6.0 * period
        n = int(duration / h) + 1
        t = np.arange(n) * h
        y = simulate(to_state_space(tf), np.sin(omega * t), h)
        # project the final full cycle onto sin/cos to get amplitude/phase
        n_cycle = int(round(period / h))
        ys, ts = y[-n_cycle:], t[-n_cycle:]
        a = 2.0 * np.mean(ys * np.sin(omega * ts))
        b = 2.0 * np.mean(ys * np.cos(omega * ts))
        amp = math.hypot(a, b)
        phase = math.degrees(math.atan2(b, a))
        expected = freq_response(tf, omega)
        assert amp == pytest.approx(expected.magnitude, rel=5e-3)
        err = (phase - expected.phase_deg + 180.0) % 360.0 - 180.0
        assert abs(err) < 0.5


class TestPhaseResponse:
    def test_starts_at_dc_asymptote(self):
        ph = phase_response_deg(GB, np.array([1e-9]))
        assert ph[0] == pytest.approx(0.0, abs=1e-5)

    def test_type_one_starts_at_minus_ninety(self):
        type1 = TransferFunction([1.0], [1.0, 1.0, 0.0])
        ph = phase_response_deg(type1, np.array([1e-9]))
        assert ph[0] == pytest.approx(-90.0, abs=1e-5)

    def test_continuous_without_dead_time(self):
        w = np.logspace(-3, 3, 2000)
        ph = phase_response_deg(GB, w)
        assert np.all(np.abs(np.diff(ph)) < 1.0)
        assert ph[-1] == pytest.approx(-180.0, abs=0.5)

    def test_exact_for_dead_time_plant(self):
        w = np.logspace(-3, 3, 500)
        ph = phase_response_deg(GA, w)
        exact = -2.0 * np.degrees(np.arctan(w)) - np.degrees(w)
        assert np.max(np.abs(ph - exact)) < 1e-9


class TestParsing:
    def test_round_trip(self):
        text = GA.to_text()
        back = parse_transfer_function(text)
        assert back.num == GA.num
        assert back.den == GA.den
        assert back.delay == GA.delay

    def test_parse_without_delay(self):
        tf = parse_transfer_function("num=[1]; den=[1, 2, 1]")
        assert tf.delay == 0.0
        assert tf.den == (1.0, 2.0, 1.0)

    def test_reject_garbage(self):
        with pytest.raises(ValueError):
            parse_transfer_function("nonsense")

    def test_zero_numerator_normalizes(self):
        tf = TransferFunction([0.0, 0.0], [1.0, 0.0, 4.0])
        assert tf.num == (0.0,)
        assert tf.den == (1.0,)


class TestInvariants:
    def test_leading_zero_normalization(self):
        tf = TransferFunction([0.0, 1.0], [0.0, 1.0, 1.0])
        assert tf.num == (1.0,)
        assert tf.den == (1.0, 1.0)

    def test_negative_delay_rejected(self):
        with pytest.raises(ValueError):
            TransferFunction([1.0], [1.0, 1.0], -0.1)

    def test_zero_denominator_rejected(self):
        with pytest.raises(ValueError):
            TransferFunction([1.0], [0.0])
