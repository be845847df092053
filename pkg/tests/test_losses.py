import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vslab.data_gen import sample_dataset
from vslab.losses import (
    EXPONENTIAL,
    LOGISTIC,
    VsLossParams,
    grad_summary,
    grad_summary_from_margins,
    log_loss_value,
    loss_value,
    neg_derivative,
    neutral,
    tune_la,
    tune_vs_defaults,
)
from vslab.model_core import Classifier

from conftest import make_spec


class TestTuning:
    def test_vs_defaults_example(self):
        p = tune_vs_defaults(180, 20)
        assert p.delta_plus == 0.9
        assert p.delta_minus == 0.1
        assert p.iota_plus == pytest.approx(0.21072, abs=1e-5)
        assert p.iota_minus == pytest.approx(4.60517, abs=1e-5)
        assert p.omega_plus == p.omega_minus == 1.0

    def test_vs_defaults_satisfy_tuning_constraints(self):
        for n_plus, n_minus in ((180, 20), (5, 3), (196, 4), (50, 50)):
            n = n_plus + n_minus
            p = tune_vs_defaults(n_plus, n_minus)
            # delta side holds with equality
            assert p.delta_plus == n_plus / n
            assert p.delta_minus == n_minus / n
            assert 0.5 * n_plus / n <= p.delta_plus <= 2 * n_plus / n
            # weight-offset ratio identity
            lhs = p.omega_plus * np.exp(p.iota_plus) / (p.omega_minus * np.exp(p.iota_minus))
            rhs = p.delta_minus**2 / p.delta_plus**2
            assert lhs == pytest.approx(rhs, rel=1e-12)

    def test_balanced_groups_fully_symmetric(self):
        p = tune_vs_defaults(10, 10)
        assert p.delta_plus == p.delta_minus == 0.5
        assert p.iota_plus == p.iota_minus

    def test_la_examples(self):
        p0 = tune_la(180, 20, iota_scale=0.0)
        assert (p0.delta_plus, p0.delta_minus) == (1.0, 1.0)
        assert p0.iota_plus == 0.0 and p0.iota_minus == -0.0 or p0.iota_minus == 0.0
        p1 = tune_la(180, 20, iota_scale=1.0)
        assert p1.iota_plus == pytest.approx(0.10536, abs=1e-5)
        assert p1.iota_minus == pytest.approx(2.30259, abs=1e-5)
        assert p1.delta_plus == p1.delta_minus == 1.0

    def test_empty_group_rejected(self):
        with pytest.raises(ValueError):
            tune_vs_defaults(10, 0)
        with pytest.raises(ValueError):
            tune_la(0, 10)

    def test_param_validation(self):
        with pytest.raises(ValueError):
            VsLossParams(shape=EXPONENTIAL, delta_plus=0.0)
        with pytest.raises(ValueError):
            VsLossParams(shape="huber")


class TestNegDerivative:
    def test_exponential_arithmetic_example(self):
        p = VsLossParams(shape=EXPONENTIAL, delta_plus=0.5, iota_plus=2.0)
        assert neg_derivative(p, 1, 4.0) == pytest.approx(0.5, rel=1e-14)

    def test_tuned_value_at_zero_margin(self):
        p = tune_vs_defaults(196, 4)
        # iota = -2 log delta forces l'(0) = 1/delta per group
        assert neg_derivative(p, 1, 0.0) == pytest.approx(1.0 / p.delta_plus, rel=1e-12)
        assert neg_derivative(p, -1, 0.0) == pytest.approx(1.0 / p.delta_minus, rel=1e-12)

    def test_logistic_vanishes_at_large_margin(self):
        p = neutral(LOGISTIC)
        values = [neg_derivative(p, 1, m) for m in (0.0, 5.0, 50.0, 500.0)]
        assert all(a > b for a, b in zip(values, values[1:]))
        assert values[-1] < 1e-200

    @settings(max_examples=60, deadline=None)
    @given(
        st.sampled_from([EXPONENTIAL, LOGISTIC]),
        st.floats(0.05, 3.0),
        st.floats(-3.0, 3.0),
        st.floats(-20.0, 20.0),
        st.floats(1e-3, 15.0),
    )
    def test_strictly_decreasing_and_positive(self, shape, delta, iota, margin, step):
        p = VsLossParams(shape=shape, delta_plus=delta, iota_plus=iota)
        hi = neg_derivative(p, 1, margin)
        lo = neg_derivative(p, 1, margin + step)
        assert hi > 0.0
        assert lo < hi

    def test_exponential_scale_identity(self):
        # negative derivative equals delta times the loss value, exactly
        p = VsLossParams(shape=EXPONENTIAL, delta_plus=0.7, iota_plus=0.3, omega_plus=1.2)
        for margin in (-3.0, 0.0, 2.5, 40.0):
            assert neg_derivative(p, 1, margin) == pytest.approx(
                p.delta_plus * loss_value(p, 1, margin), rel=1e-13
            )

    def test_exponential_dominates_logistic_value(self):
        # (1/2) l_exp <= l_log <= l_exp wherever the adjusted margin is >= 0
        exp_p, log_p = neutral(EXPONENTIAL), neutral(LOGISTIC)
        for margin in np.linspace(0.0, 30.0, 121):
            v_exp = loss_value(exp_p, 1, float(margin))
            v_log = loss_value(log_p, 1, float(margin))
            assert 0.5 * v_exp <= v_log <= v_exp

    def test_nan_margin_rejected(self):
        with pytest.raises(ValueError):
            neg_derivative(neutral(), 1, float("nan"))


class TestGradSummary:
    def test_single_sample_neutral(self):
        summary = grad_summary_from_margins(
            neutral(), np.array([1]), np.array([0.0])
        )
        assert summary.lp_total == pytest.approx(1.0, rel=1e-15)

    def test_group_sum_is_sum_of_members(self):
        p = VsLossParams(shape=EXPONENTIAL, delta_plus=0.8, iota_plus=0.1)
        margins = np.array([0.3, -0.2])
        summary = grad_summary_from_margins(p, np.array([1, 1]), margins)
        direct = sum(neg_derivative(p, 1, m) for m in margins)
        assert summary.lp_plus == pytest.approx(direct, rel=1e-12)
        assert summary.lp_minus == 0.0

    def test_tuned_groups_contribute_equally_at_start(self):
        # at w=0 each group sums to n_b / delta_b = n
        spec = make_spec(d_core=8, d_spur=8, mu_core=(1.0,) + (0.0,) * 7,
                         mu_spur=(1.0,) + (0.0,) * 7, n_plus=196, n_minus=4)
        ds = sample_dataset(spec, 1)
        p = tune_vs_defaults(196, 4)
        summary = grad_summary(p, ds, Classifier(np.zeros(ds.d)))
        assert summary.lp_plus == pytest.approx(200.0, rel=1e-12)
        assert summary.lp_minus == pytest.approx(200.0, rel=1e-12)

    def test_total_is_sum_of_groups(self, small_dataset):
        p = tune_vs_defaults(6, 2)
        w = Classifier(np.linspace(-0.1, 0.1, small_dataset.d))
        summary = grad_summary(p, small_dataset, w)
        assert summary.lp_total == pytest.approx(
            summary.lp_plus + summary.lp_minus, rel=1e-12
        )
        assert (summary.log_lp <= summary.log_lp_total).all()

    def test_dimension_mismatch(self, small_dataset):
        with pytest.raises(ValueError, match="dimension"):
            grad_summary(neutral(), small_dataset, Classifier(np.zeros(3)))

    def test_log_domain_survives_deep_margins(self):
        # raw exponentials would underflow at margin ~ 1e5
        p = neutral()
        lv = log_loss_value(p, 1, 1e5)
        assert lv == pytest.approx(-1e5)
        assert np.isfinite(lv)
