import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fadingkf.channels import (
    ChannelError,
    Constant,
    GilbertElliott,
    Iid,
    PowerApproach,
    PowerDecay,
    TimeVarying,
    arrival_rate,
    empirical_mixing,
    model_from_dict,
    model_id,
    sample_path,
)
from fadingkf.seeding import Stream, generator

MODELS = [
    Iid(0.3),
    TimeVarying(PowerApproach(1.5)),
    TimeVarying(PowerDecay(0.5, 0.8)),
    TimeVarying(Constant(0.6)),
    GilbertElliott(0.3, 0.4, 0.9, 0.1),
    GilbertElliott(0.2, 0.1, 1.0, 0.0, initial="bad"),
]


class TestSampling:
    @pytest.mark.parametrize("p, value", [(1.0, 1), (0.0, 0)])
    def test_degenerate_iid(self, p, value):
        path = sample_path(Iid(p), 500, seed=3)
        assert path.bits.dtype == np.int8
        assert np.all(path.bits == value)

    @pytest.mark.parametrize("model", MODELS, ids=repr)
    def test_reproducible(self, model):
        a = sample_path(model, 300, seed=11, path_index=4)
        b = sample_path(model, 300, seed=11, path_index=4)
        c = sample_path(model, 300, seed=11, path_index=5)
        np.testing.assert_array_equal(a.bits, b.bits)
        assert not np.array_equal(a.bits, c.bits)

    def test_frozen_bits(self):
        # Philox keyed by (seed, path_index, stream): fixed across platforms
        bits = sample_path(Iid(0.5), 24, seed=2024).bits
        expected = (generator(2024, 0, Stream.CHANNEL).random(24) < 0.5).astype(np.int8)
        np.testing.assert_array_equal(bits, expected)
        assert "".join(map(str, bits)) == FROZEN_IID_BITS
        ge = sample_path(GilbertElliott(0.3, 0.4, 0.9, 0.1), 24, seed=2024).bits
        assert "".join(map(str, ge)) == FROZEN_GE_BITS

    def test_horizon_check(self):
        with pytest.raises(ValueError):
            sample_path(Iid(0.5), 0, seed=0)

    @pytest.mark.parametrize("p", [0.1, 0.5, 0.93])
    def test_iid_frequency(self, p):
        bits = sample_path(Iid(p), 100_000, seed=1).bits
        assert abs(bits.mean() - p) <= 4 * math.sqrt(p * (1 - p) / 100_000)

    def test_gilbert_elliott_reduces_to_iid(self):
        p = 0.37
        bits = sample_path(GilbertElliott(0.5, 0.5, p, p), 100_000, seed=5).bits
        assert abs(bits.mean() - p) <= 3 * math.sqrt(p * (1 - p) / 100_000)

    def test_gilbert_elliott_stationary_frequency(self):
        ge = GilbertElliott(0.3, 0.4, 0.9, 0.1)
        bits = sample_path(ge, 200_000, seed=9).bits
        # correlated draws: allow a generous band
        assert abs(bits.mean() - arrival_rate(ge, 1)) < 0.01

    def test_csv(self):
        text = sample_path(Iid(1.0), 3, seed=0).to_csv()
        assert text == "gamma\n1\n1\n1\n"


FROZEN_IID_BITS = "101001001100000001001011"
FROZEN_GE_BITS = "100111010100000110010110"


class TestRates:
    def test_iid(self):
        assert arrival_rate(Iid(0.4), 7) == 0.4

    def test_power_decay(self):
        assert arrival_rate(TimeVarying(PowerDecay(1.0)), 3) == pytest.approx(1 / 3)

    def test_power_approach(self):
        assert arrival_rate(TimeVarying(PowerApproach(2.0)), 4) == pytest.approx(1 - 1 / 16)
        assert arrival_rate(TimeVarying(PowerApproach(2.0)), 1) == 0.0

    def test_stationary_gilbert_elliott(self):
        ge = GilbertElliott(0.3, 0.4, 0.9, 0.1)
        pi_g = 0.4 / 0.7
        expected = pi_g * 0.9 + (1 - pi_g) * 0.1
        np.testing.assert_allclose(arrival_rate(ge, np.arange(1, 50)), expected, rtol=1e-14)

    def test_gilbert_elliott_matches_matrix_power(self):
        ge = GilbertElliott(0.3, 0.6, 0.95, 0.2, initial="bad")
        P = np.array([[0.7, 0.3], [0.6, 0.4]])
        state = np.array([0.0, 1.0])
        for k in range(1, 15):
            assert arrival_rate(ge, k) == pytest.approx(state @ [0.95, 0.2], rel=1e-13)
            state = state @ P

    def test_index_starts_at_one(self):
        with pytest.raises(ValueError):
            arrival_rate(Iid(0.5), 0)

    def test_clamping_warns(self):
        with pytest.warns(UserWarning, match="clamped"):
            m = TimeVarying(PowerApproach(1.0, c=2.0))
        assert arrival_rate(m, 1) == 0.0
        assert arrival_rate(m, 4) == pytest.approx(0.5)

    @given(
        st.sampled_from(["power_approach", "power_decay"]),
        st.floats(0.1, 4.0),
        st.floats(0.0, 3.0),
    )
    def test_time_varying_monotone(self, family, exponent, c):
        fam = PowerApproach(exponent, c) if family == "power_approach" else PowerDecay(exponent, c)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            m = TimeVarying(fam)
        p = arrival_rate(m, np.arange(1, 400))
        d = np.diff(p)
        assert np.all(d >= -1e-15) or np.all(d <= 1e-15)
        assert np.all((0 <= p) & (p <= 1))


class TestValidation:
    @pytest.mark.parametrize(
        "build",
        [
            lambda: Iid(1.2),
            lambda: Iid(-0.1),
            lambda: GilbertElliott(0.0, 0.5, 1, 0),
            lambda: GilbertElliott(0.5, 1.0, 1, 0),
            lambda: GilbertElliott(0.5, 0.5, 1.5, 0),
            lambda: GilbertElliott(0.5, 0.5, 1, 0, initial="warm"),
            lambda: PowerDecay(0.0),
            lambda: PowerApproach(1.0, c=-1),
        ],
    )
    def test_rejects(self, build):
        with pytest.raises(ChannelError):
            build()

    def test_monotonicity_flag(self):
        assert GilbertElliott(0.3, 0.4, 0.9, 0.1, initial="good").monotone()
        # negative second eigenvalue and a non-stationary start oscillate
        assert not GilbertElliott(0.8, 0.7, 0.9, 0.1, initial="good").monotone()
        assert GilbertElliott(0.8, 0.7, 0.9, 0.1).monotone()


class TestSerialization:
    @pytest.mark.parametrize("model", MODELS, ids=repr)
    def test_round_trip(self, model):
        again = model_from_dict(model.to_dict())
        assert again == model
        assert model_id(again) == model_id(model)

    @pytest.mark.parametrize(
        "d",
        [
            {"type": "semi_markov"},
            {"type": "iid"},
            {"type": "time_varying", "family": "table"},
            {"type": "gilbert_elliott", "q_gb": 0.1},
        ],
    )
    def test_bad_dicts(self, d):
        with pytest.raises(ChannelError):
            model_from_dict(d)


class TestMixing:
    def test_iid_is_independent(self):
        diag = empirical_mixing(Iid(0.5), n_lags=6, samples=50_000, seed=2)
        for f, se in zip(diag.f_hat, diag.stderr):
            # the max over 16 cells is biased upward; 4 standard errors covers it
            assert f <= 4 * se
        assert diag.summary == "consistent with mixing"
        assert "verified" not in diag.summary

    def test_gilbert_elliott_decays(self):
        diag = empirical_mixing(GilbertElliott(0.3, 0.4, 0.9, 0.1), n_lags=10, window=1,
                                samples=200_000, seed=4)
        f = np.array(diag.f_hat)
        # second eigenvalue 0.3: dependence shrinks geometrically until it hits the noise floor
        assert f[0] > f[1] > f[2]
        assert f[-1] <= f[0] / 10
        assert np.all(np.diff(f) <= 3 * np.array(diag.stderr[1:]))

    def test_degenerate_events_reported(self):
        diag = empirical_mixing(Iid(1.0), n_lags=3, samples=2000)
        assert diag.excluded_events > 0
        assert diag.notes

    def test_all_excluded_is_low_confidence(self):
        diag = empirical_mixing(Iid(1.0), n_lags=2, window=1, samples=1000, min_prob=1.01)
        assert diag.low_confidence and diag.summary.startswith("low confidence")
        assert all(math.isnan(f) for f in diag.f_hat)

    def test_window_range(self):
        with pytest.raises(ValueError):
            empirical_mixing(Iid(0.5), window=4)
