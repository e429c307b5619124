import numpy as np
import pytest

from postscale.curves import (
    DecompositionRecord,
    SigmoidParams,
    ceiling,
    decompose,
    eval_sigmoid,
    plasticity,
    sigmoid_gradient,
)
from postscale.errors import ContractError, InputDomainError


def _finite_difference(params, x, rel_step=1e-6):
    values = [params.p_start, params.ceiling, params.c_mid, params.steepness]
    out = []
    for i in range(4):
        step = rel_step * max(abs(values[i]), 1e-3)
        hi = values.copy()
        lo = values.copy()
        hi[i] += step
        lo[i] -= step
        out.append(
            (
                eval_sigmoid(SigmoidParams(*hi, allow_decreasing=True), x)
                - eval_sigmoid(SigmoidParams(*lo, allow_decreasing=True), x)
            )
            / (2 * step)
        )
    return np.array(out)


class TestParams:
    @pytest.mark.parametrize("c_mid,steepness", [(0.0, 1.0), (-2.0, 1.0), (1.0, 0.0), (1.0, -1.0)])
    def test_positivity_enforced(self, c_mid, steepness):
        with pytest.raises(InputDomainError):
            SigmoidParams(0.0, 1.0, c_mid, steepness)

    def test_decreasing_ceiling_rejected_by_default(self):
        with pytest.raises(InputDomainError):
            SigmoidParams(2.3, 2.2, 1.0, 1.0)

    def test_decreasing_ceiling_warns_when_allowed(self):
        with pytest.warns(UserWarning, match="degrading"):
            SigmoidParams(2.3, 2.2, 1.0, 1.0, allow_decreasing=True)


class TestEval:
    def test_midpoint_is_half_headroom(self, truth_params):
        value = eval_sigmoid(truth_params, truth_params.c_mid)
        assert value == pytest.approx(truth_params.p_start + plasticity(truth_params) / 2, abs=1e-12)

    def test_zero_compute_returns_start(self, truth_params):
        assert eval_sigmoid(truth_params, 0.0) == truth_params.p_start

    def test_asymptote(self, truth_params):
        x = 1e9 * truth_params.c_mid
        bound = 10 * plasticity(truth_params) * (1e9) ** (-truth_params.steepness)
        assert abs(eval_sigmoid(truth_params, x) - truth_params.ceiling) <= bound

    def test_negative_x_rejected(self, truth_params):
        with pytest.raises(InputDomainError):
            eval_sigmoid(truth_params, -1.0)
        with pytest.raises(InputDomainError):
            eval_sigmoid(truth_params, np.array([1.0, -2.0]))

    def test_strictly_increasing(self, truth_params):
        rng = np.random.default_rng(0)
        lo = rng.uniform(0.01, 50, size=500) * truth_params.c_mid
        hi = lo * rng.uniform(1.1, 3.0, size=500)
        assert np.all(eval_sigmoid(truth_params, lo) < eval_sigmoid(truth_params, hi))

    def test_below_ceiling_for_finite_x(self, truth_params):
        xs = np.geomspace(1e-3, 1e9, 200) * truth_params.c_mid
        assert np.all(eval_sigmoid(truth_params, xs) < ceiling(truth_params))

    def test_constant_when_no_headroom(self):
        flat = SigmoidParams(70.0, 70.0, 5.0, 1.0)
        xs = np.geomspace(0.1, 100, 20)
        assert np.all(eval_sigmoid(flat, xs) == 70.0)

    def test_array_shape_preserved(self, truth_params):
        out = eval_sigmoid(truth_params, np.array([0.0, 13.0, 26.0]))
        assert out.shape == (3,)
        assert isinstance(eval_sigmoid(truth_params, 13.0), float)


class TestSummaries:
    def test_plasticity_printed_rows(self):
        assert plasticity(SigmoidParams(46.1, 71.3, 1.0, 1.3)) == pytest.approx(25.2, abs=1e-9)
        assert plasticity(SigmoidParams(70.1, 84.8, 10.0, 0.9)) == pytest.approx(14.7, abs=1e-9)

    def test_zero_plasticity(self):
        assert plasticity(SigmoidParams(50.0, 50.0, 1.0, 1.0)) == 0.0

    def test_ceiling_printed_row(self, truth_params):
        assert ceiling(truth_params) == 85.7


class TestGradient:
    def test_matches_finite_differences(self):
        rng = np.random.default_rng(42)
        for _ in range(100):
            params = SigmoidParams(
                rng.uniform(40, 75),
                rng.uniform(76, 100),
                rng.uniform(1, 80),
                rng.uniform(0.3, 3.0),
            )
            ratio = rng.uniform(0.2, 5.0)
            if abs(np.log(ratio)) < 1e-2:
                ratio = 1.5
            x = ratio * params.c_mid
            grad = sigmoid_gradient(params, x)
            fd = _finite_difference(params, x)
            denom = np.maximum(np.abs(fd), 1e-8)
            assert np.max(np.abs(grad - fd) / denom) < 1e-5

    def test_zero_compute_gradient(self, truth_params):
        assert np.array_equal(sigmoid_gradient(truth_params, 0.0), np.array([1.0, 0.0, 0.0, 0.0]))

    def test_array_shape(self, truth_params):
        grad = sigmoid_gradient(truth_params, np.array([0.0, 13.0]))
        assert grad.shape == (2, 4)


class TestDecompose:
    def test_printed_row(self):
        rl = SigmoidParams(70.1, 84.8, 10.0, 0.9)
        record = decompose(46.1, (34.9, 70.1), rl)
        assert record.delta_sft == pytest.approx(24.0, abs=1e-9)
        assert record.pl_rl == pytest.approx(14.7, abs=1e-9)
        assert record.a_post == pytest.approx(84.8, abs=1e-9)

    def test_identity_is_exact(self):
        rl = SigmoidParams(70.1, 84.8, 10.0, 0.9)
        record = decompose(46.1, (34.9, 70.1), rl)
        assert record.a_post == record.p_sft + record.pl_rl

    def test_zero_rl_headroom(self):
        rl = SigmoidParams(70.0, 70.0, 5.0, 1.0)
        record = decompose(46.1, (10.0, 70.0), rl)
        assert record.pl_rl == 0.0
        assert record.a_post == 70.0

    def test_pure_rl_reduction(self):
        rl = SigmoidParams(46.1, 71.3, 1.0, 1.3)
        record = decompose(46.1, (0.0, 46.1), rl)
        assert record.delta_sft == 0.0

    def test_start_mismatch_rejected(self):
        rl = SigmoidParams(70.0, 84.8, 10.0, 0.9)
        with pytest.raises(ContractError):
            decompose(46.1, (34.9, 70.1), rl)

    def test_rl_gain_zero_at_zero_compute(self):
        rl = SigmoidParams(70.1, 84.8, 10.0, 0.9)
        record = decompose(46.1, (34.9, 70.1), rl)
        assert record.delta_rl(0.0) == 0.0
        assert record.delta_rl(10.0) == pytest.approx(14.7 / 2, abs=1e-9)

    def test_round_trips_to_dict(self):
        rl = SigmoidParams(70.1, 84.8, 10.0, 0.9)
        record = decompose(46.1, (34.9, 70.1), rl)
        payload = record.to_dict()
        assert payload["a_post"] == record.a_post
        assert payload["rl_params"]["c_mid"] == 10.0
