import csv
import io
import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import BATTERY
from fadingkf import LtiSystem, NumericError, catalog
from fadingkf.bounds import compute_M, trace_lower_bound_constant
from fadingkf.channels import ArrivalPath, GilbertElliott, Iid, PowerDecay, TimeVarying
from fadingkf.kfilter import filter_step, initial_state, path_statistics, run_path
from fadingkf.riccati import iterate, op_g, op_h

P_BAR_SCALAR = 2 + math.sqrt(5)


def _arrivals(bits, model=Iid(0.5)):
    return ArrivalPath(np.asarray(bits, dtype=np.int8), seed=0, model=model)


def _mp_traces(s, bits, dps=80):
    """Prediction-covariance traces from a high-precision recursion."""
    out = []
    with mpmath.workdps(dps):
        A, C, Q, R, P0 = (mpmath.matrix(M.tolist()) for M in (s.A, s.C, s.Q, s.R, s.P0))
        P = A * P0 * A.T + Q
        for b in bits:
            out.append(float(sum(P[i, i] for i in range(s.n))))
            if b:
                P = P - P * C.T * mpmath.inverse(C * P * C.T + R) * C * P
            P = A * P * A.T + Q
    return np.array(out)


class TestFilterStep:
    def test_drop_and_arrival(self, double_integrator):
        s = double_integrator
        st0 = initial_state(s)
        st0.P_pred = np.array([[2.0, 0.5], [0.5, 1.0]])
        dropped = filter_step(s, st0, 0)
        np.testing.assert_allclose(dropped.P_pred, op_h(s, st0.P_pred))
        assert dropped.P_filt is st0.P_pred
        arrived = filter_step(s, st0, 1, [0.3])
        np.testing.assert_allclose(arrived.P_pred, op_g(s, st0.P_pred), rtol=1e-12)
        assert arrived.k == 2

    def test_scalar_example(self, scalar):
        st0 = initial_state(scalar)
        st0.P_pred = np.array([[1.0]])
        assert filter_step(scalar, st0, 1, [0.0]).P_pred[0, 0] == pytest.approx(3.0)

    def test_estimate_update(self, scalar):
        st0 = initial_state(scalar, x_pred=[1.0])
        st0.P_pred = np.array([[1.0]])
        nxt = filter_step(scalar, st0, 1, [3.0])
        # K = 1/2, x_filt = 1 + (3 - 1)/2 = 2, x_pred = 4
        assert nxt.x_filt[0] == pytest.approx(2.0)
        assert nxt.x_pred[0] == pytest.approx(4.0)

    def test_measurement_presence_must_match(self, scalar):
        st0 = initial_state(scalar)
        with pytest.raises(ValueError):
            filter_step(scalar, st0, 1)
        with pytest.raises(ValueError):
            filter_step(scalar, st0, 0, [1.0])


class TestRunPath:
    def test_all_arrivals_converge(self, scalar):
        tr = run_path(scalar, Iid(1.0), 400, seed=0)
        assert np.all(np.abs(tr.trace[199:] - P_BAR_SCALAR) <= 1e-6)

    def test_all_drops_follow_h(self, double_integrator):
        s = double_integrator
        tr = run_path(s, Iid(0.0), 30, seed=0)
        X = s.P0
        for k in range(1, 31):
            X = op_h(s, X)
            assert tr.trace[k - 1] == pytest.approx(np.trace(X), rel=1e-12)

    def test_matches_high_precision_recursion(self, battery_system):
        s = battery_system
        tr = run_path(s, GilbertElliott(0.3, 0.4, 0.9, 0.1), 60, seed=3)
        np.testing.assert_allclose(tr.trace, _mp_traces(s, tr.bits), rtol=1e-8)

    def test_scalar_state_with_vector_output(self):
        s = LtiSystem([[1.5]], [[1.0], [2.0]], [[0.5]], [[1.0, 0.3], [0.3, 2.0]], P0=[[2.0]])
        tr = run_path(s, Iid(0.4), 120, seed=8)
        np.testing.assert_allclose(tr.trace, _mp_traces(s, tr.bits), rtol=1e-12)

    def test_matches_iterate_when_well_conditioned(self, double_integrator):
        s = double_integrator
        tr = run_path(s, Iid(0.5), 80, seed=3)
        X = op_h(s, s.P0)
        for k in range(1, 81):
            assert tr.trace[k - 1] == pytest.approx(np.trace(X), rel=1e-9)
            X = iterate(s, X, 1, [int(tr.bits[k - 1])])

    @pytest.mark.parametrize("repeats", [10, 14, 16])
    def test_degenerate_outages_stay_accurate(self, repeats):
        # even-gap arrival runs leave A = diag(2, -2), C = [1, 1] unobservable along
        # one direction; the covariance condition number reaches 1e19
        s = catalog.degenerate_pair()
        bits = np.array([0, 1] * repeats + [1, 1, 0, 0], dtype=np.int8)
        tr = run_path(s, Iid(0.5), len(bits), seed=0, arrivals=_arrivals(bits))
        exact = _mp_traces(s, bits)
        err = np.max(np.abs(tr.trace - exact) / exact)
        assert err <= max(tr.max_rounding, 1e-12)

    def test_hopeless_conditioning_is_reported(self):
        s = catalog.degenerate_pair()
        bits = np.array([0, 1] * 30 + [1, 1], dtype=np.int8)
        with pytest.raises(NumericError, match="ill-conditioned"):
            run_path(s, Iid(0.5), len(bits), seed=0, arrivals=_arrivals(bits))

    def test_degenerate_long_run(self):
        s = catalog.degenerate_pair()
        tr = run_path(s, Iid(0.5), 3000, seed=2)
        assert tr.min_psd_margin >= -1e-8

    @pytest.mark.parametrize("name", sorted(BATTERY))
    def test_covariance_only_equivalence(self, name):
        s = BATTERY[name]
        a = run_path(s, Iid(0.6), 200, seed=9, path_index=2)
        b = run_path(s, Iid(0.6), 200, seed=9, path_index=2, covariance_only=False)
        np.testing.assert_array_equal(a.trace, b.trace)
        np.testing.assert_array_equal(a.bits, b.bits)
        assert a.sq_errors is None and b.sq_errors is not None

    def test_error_matches_covariance_on_average(self, scalar):
        ratios = []
        for i in range(300):
            tr = run_path(scalar, Iid(0.7), 60, seed=4, path_index=i, covariance_only=False)
            ratios.append(tr.sq_errors / tr.trace)
        mean = np.mean(ratios, axis=0)
        # E[e_k^2] = P_k; averaged over k and 300 paths the ratio is close to 1
        assert abs(mean.mean() - 1.0) < 0.05

    def test_m_bound_scalar(self, scalar):
        for i in range(20):
            tr = run_path(scalar, Iid(0.5), 500, seed=1, path_index=i)
            assert tr.m_violations == 0
            for k, ok in tr.m_bound_checks:
                assert tr.bits[k - 2] == 1 and ok
                assert tr.trace[k - 1] <= 5.0 + 1e-6

    def test_m_bound_detects_violations(self, scalar):
        tr = run_path(scalar, Iid(0.5), 200, seed=1, trace_M=4.0)
        assert tr.m_violations > 0

    def test_saturation_keeps_exact_log_trace(self, scalar):
        tr = run_path(scalar, Iid(0.0), 600, seed=0)
        assert tr.saturated_at is not None
        assert np.all(np.isfinite(tr.log2_trace))
        # Tr h^k(0) = (4^k - 1)/3, so log2 = 2k - log2(3) up to a vanishing term
        k = np.arange(1, 601)
        big = k > 60
        np.testing.assert_allclose(tr.log2_trace[big], 2 * k[big] - math.log2(3), rtol=1e-12)
        assert np.all(np.isinf(tr.trace[tr.saturated_at - 1:]))

    def test_desaturation_after_arrival(self, scalar):
        bits = [0] * 400 + [1] * 50
        tr = run_path(scalar, Iid(0.5), 450, seed=0, arrivals=_arrivals(bits))
        assert tr.saturated_at is not None
        assert np.isfinite(tr.trace[-1]) and tr.trace[-1] == pytest.approx(P_BAR_SCALAR, rel=1e-6)

    def test_threshold_crossings(self, scalar):
        tr = run_path(scalar, Iid(0.0), 20, seed=0, thresholds=[20.0, 1e300])
        # P_1 = 1, P_2 = 5, P_3 = 21
        assert tr.crossings[20.0] == 3
        assert tr.crossings[1e300] is None

    def test_psd_margin(self, battery_system):
        tr = run_path(battery_system, Iid(0.5), 300, seed=2)
        assert tr.min_psd_margin >= -1e-8

    def test_arrival_length_check(self, scalar):
        with pytest.raises(ValueError):
            run_path(scalar, Iid(0.5), 10, seed=0, arrivals=_arrivals([1] * 9))

    @given(st.integers(0, 2**32 - 1), st.integers(1, 40))
    def test_drop_segment_growth_floor(self, seed, length):
        s = catalog.double_integrator()
        a = trace_lower_bound_constant(s)
        rho2 = np.max(np.abs(np.linalg.eigvals(s.A))) ** 2
        rng = np.random.default_rng(seed)
        prefix = rng.integers(0, 2, 30).tolist()
        tr = run_path(s, Iid(0.5), 30 + length, seed=0, arrivals=_arrivals(prefix + [0] * length))
        end = tr.log2_trace[-1]
        assert end >= math.log2(a) + length * math.log2(rho2) - 1e-9


class TestTraceViews:
    def test_gaps(self):
        tr = run_path(catalog.scalar(), Iid(0.5), 10, seed=0,
                      arrivals=_arrivals([0, 1, 0, 0, 1, 1, 0, 0, 0, 1]))
        np.testing.assert_array_equal(tr.arrival_times, [2, 5, 6, 10])
        assert tr.gaps(9, 3) == (3, 1, 3)
        assert tr.gaps(4, 2) is None

    def test_csv_export(self, scalar):
        tr = run_path(scalar, Iid(0.5), 30, seed=5)
        rows = list(csv.reader(io.StringIO(tr.to_csv())))
        assert rows[0] == ["k", "gamma", "trace_P", "log2_trace_P", "arrivals_so_far",
                           "longest_outage_so_far"]
        assert len(rows) == 31
        body = np.array(rows[1:], dtype=float)
        np.testing.assert_array_equal(body[:, 0], np.arange(1, 31))
        np.testing.assert_array_equal(body[:, 2], tr.trace)
        np.testing.assert_array_equal(body[:, 4], np.cumsum(tr.bits))
        assert np.all(np.diff(body[:, 5]) >= 0)

    def test_exceeds_uses_log_domain(self, scalar):
        tr = run_path(scalar, Iid(0.0), 600, seed=0)
        over = tr.exceeds(1e250)
        first = int(np.argmax(over)) + 1
        # (4^k - 1)/3 > 1e250 first at k = ceil(log4(3e250))
        assert first == math.ceil(math.log(3e250, 4))


class TestPathStatistics:
    def test_all_arrivals(self, scalar):
        tr = run_path(scalar, Iid(1.0), 300, seed=0)
        stats = path_statistics(tr, [P_BAR_SCALAR + 0.5], k_start=50)
        assert stats.exceeded == {P_BAR_SCALAR + 0.5: False}
        assert stats.longest_outage == 0 and stats.arrival_count == 300

    def test_all_drops(self, scalar):
        tr = run_path(scalar, Iid(0.0), 300, seed=0)
        stats = path_statistics(tr, [1e50])
        assert stats.exceeded[1e50] and not stats.tail_min_le[1e50]
        assert stats.longest_outage == 300 and stats.k0 == 150

    def test_tail_min_below_m(self, scalar):
        trM = float(np.trace(compute_M(scalar)))
        for i in range(30):
            tr = run_path(scalar, Iid(0.5), 400, seed=6, path_index=i)
            stats = path_statistics(tr, [trM])
            if tr.bits[stats.k0 - 1:-1].any():
                assert stats.tail_min_le[trM]

    def test_finitely_many_arrivals(self, scalar):
        tr = run_path(scalar, TimeVarying(PowerDecay(2.0)), 400, seed=0)
        stats = path_statistics(tr, [1e6])
        assert not stats.tail_min_le[1e6]
        d = stats.to_dict()
        assert d["exceeded"] == [[1e6, True]] and "proxies" in d["note"]
