import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from postscale.errors import InputDomainError
from postscale.flops import (
    Algorithm,
    FlopCount,
    ModelConfig,
    StepSpec,
    accumulate_run_flops,
    dapo_step_flops,
    forward_flops_per_token,
    grpo_step_flops,
    hybrid_step_flops,
    sft_step_flops,
    step_flops,
    train_flops_per_token,
    upt_step_flops,
)

configs = st.builds(
    ModelConfig,
    num_layers=st.integers(1, 8),
    hidden_size=st.integers(2, 64),
    ffn_intermediate=st.integers(1, 64),
    vocab_size=st.integers(1, 512),
    kv_total_dim=st.integers(1, 2),
)


class TestPerToken:
    def test_tiny_forward(self, tiny_cfg):
        assert forward_flops_per_token(tiny_cfg, 1).value == 22

    def test_two_layers(self):
        assert forward_flops_per_token(ModelConfig(2, 1, 1, 1, 1), 1).value == 40

    def test_train_is_three_forward(self, tiny_cfg):
        assert train_flops_per_token(tiny_cfg, 1).value == 66
        assert train_flops_per_token(tiny_cfg, 2).value == 78

    @given(cfg=configs, seq_len=st.integers(1, 4096))
    def test_doubling_seq_len_adds_attention_core(self, cfg, seq_len):
        base = forward_flops_per_token(cfg, seq_len).value
        doubled = forward_flops_per_token(cfg, 2 * seq_len).value
        assert doubled - base == 4 * seq_len * cfg.num_layers * cfg.hidden_size

    @given(cfg=configs, seq_len=st.integers(1, 4096))
    def test_train_forward_ratio_exact(self, cfg, seq_len):
        assert train_flops_per_token(cfg, seq_len).value == 3 * forward_flops_per_token(cfg, seq_len).value

    def test_rejects_nonpositive_seq_len(self, tiny_cfg):
        with pytest.raises(InputDomainError):
            forward_flops_per_token(tiny_cfg, 0)
        with pytest.raises(InputDomainError):
            forward_flops_per_token(tiny_cfg, -3)


class TestModelConfig:
    def test_kv_wider_than_hidden_rejected(self):
        with pytest.raises(InputDomainError):
            ModelConfig(1, 4, 1, 1, 8)

    @pytest.mark.parametrize("bad", [0, -1, 2.5, True])
    def test_fields_must_be_positive_ints(self, bad):
        with pytest.raises(InputDomainError):
            ModelConfig(bad, 4, 4, 4, 4)


class TestPerStep:
    def test_sft_hand_value(self, tiny_cfg):
        assert sft_step_flops(tiny_cfg, 2, 1).value == 132

    def test_sft_rejects_zero_batch(self, tiny_cfg):
        with pytest.raises(InputDomainError):
            sft_step_flops(tiny_cfg, 0, 1)

    def test_grpo_hand_value(self, tiny_cfg):
        assert grpo_step_flops(tiny_cfg, 1, 2, 1).value == 176

    def test_dapo_hand_values(self, tiny_cfg):
        assert dapo_step_flops(tiny_cfg, 2, 1, 1, 1, 1).value == 110
        assert dapo_step_flops(tiny_cfg, 3, 2, 4, 2, 1).value == 792

    def test_dapo_rejects_excess_updates(self, tiny_cfg):
        with pytest.raises(InputDomainError):
            dapo_step_flops(tiny_cfg, 1, 2, 3, 1, 1)

    def test_hybrid_hand_value(self, tiny_cfg):
        # F_token(1) = 22, F_token(2) = 26
        assert hybrid_step_flops(tiny_cfg, 1, 1, 1, 1, 2).value == 296

    def test_hybrid_doubling_batch_doubles(self, tiny_cfg):
        one = hybrid_step_flops(tiny_cfg, 1, 2, 1, 3, 5).value
        two = hybrid_step_flops(tiny_cfg, 2, 2, 1, 3, 5).value
        assert two == 2 * one

    def test_upt_hand_values(self, tiny_cfg):
        assert upt_step_flops(tiny_cfg, 2, 1, 1, 1, 1).value == 176
        assert upt_step_flops(tiny_cfg, 1, 0, 1, 1, 2).value == 178

    def test_upt_generation_only(self, tiny_cfg):
        assert upt_step_flops(tiny_cfg, 3, 0, 0, 2).value == 3 * 2 * 26

    @given(
        cfg=configs,
        batch=st.integers(1, 16),
        group=st.integers(1, 8),
        seq_len=st.integers(1, 2048),
    )
    @settings(max_examples=200)
    def test_dapo_reduces_to_grpo(self, cfg, batch, group, seq_len):
        dapo = dapo_step_flops(cfg, 1, batch, batch, group, seq_len).value
        grpo = grpo_step_flops(cfg, batch, group, seq_len).value
        assert dapo == grpo

    @given(
        cfg=configs,
        batch=st.integers(1, 16),
        group=st.integers(1, 8),
        seq_len=st.integers(1, 2048),
    )
    @settings(max_examples=200)
    def test_hybrid_reduces_to_grpo(self, cfg, batch, group, seq_len):
        hybrid = hybrid_step_flops(cfg, batch, group, 0, seq_len).value
        grpo = grpo_step_flops(cfg, batch, group, seq_len).value
        assert hybrid == grpo

    @given(cfg=configs, batch=st.integers(1, 16), k=st.integers(1, 8), seq_len=st.integers(1, 512))
    def test_batch_homogeneity(self, cfg, batch, k, seq_len):
        assert sft_step_flops(cfg, k * batch, seq_len).value == k * sft_step_flops(cfg, batch, seq_len).value


class TestStepSpec:
    def test_algorithm_aliases(self):
        assert Algorithm.parse("LUFFY") is Algorithm.HYBRID
        assert Algorithm.parse("srft") is Algorithm.HYBRID
        assert Algorithm.parse("SFT") is Algorithm.SFT
        with pytest.raises(InputDomainError):
            Algorithm.parse("ppo")

    def test_irrelevant_fields_rejected(self):
        with pytest.raises(InputDomainError):
            StepSpec(Algorithm.SFT, batch=2, avg_seq_len=1, group_size=4)

    def test_dapo_bound_enforced(self):
        with pytest.raises(InputDomainError):
            StepSpec(
                Algorithm.DAPO,
                batch=1,
                update_batch=3,
                sampling_rounds=2,
                group_size=1,
                avg_seq_len=1,
            )

    def test_negative_counts_rejected(self):
        with pytest.raises(InputDomainError):
            StepSpec(Algorithm.SFT, batch=-1, avg_seq_len=1)

    def test_dispatch_matches_direct_calls(self, tiny_cfg):
        spec = StepSpec(Algorithm.GRPO, batch=1, group_size=2, avg_seq_len=1)
        assert step_flops(tiny_cfg, spec).value == grpo_step_flops(tiny_cfg, 1, 2, 1).value
        spec = StepSpec(Algorithm.UPT, group_size=2, on_policy_kept=1, off_policy_kept=1, avg_on_len=1, avg_off_len=1)
        assert step_flops(tiny_cfg, spec).value == 176


class TestAccumulate:
    def test_two_sft_steps(self, tiny_cfg):
        steps = [StepSpec(Algorithm.SFT, batch=2, avg_seq_len=1)] * 2
        totals = accumulate_run_flops(tiny_cfg, steps)
        assert [t.value for t in totals] == [132, 264]

    def test_single_step_equals_per_step(self, tiny_cfg):
        spec = StepSpec(Algorithm.SFT, batch=2, avg_seq_len=1)
        totals = accumulate_run_flops(tiny_cfg, [spec])
        assert totals[0].value == step_flops(tiny_cfg, spec).value

    def test_empty_rejected(self, tiny_cfg):
        with pytest.raises(InputDomainError):
            accumulate_run_flops(tiny_cfg, [])

    @given(
        batches=st.lists(st.integers(1, 32), min_size=1, max_size=20),
    )
    def test_nondecreasing(self, batches):
        cfg = ModelConfig(1, 1, 1, 1, 1)
        steps = [StepSpec(Algorithm.SFT, batch=b, avg_seq_len=3) for b in batches]
        totals = accumulate_run_flops(cfg, steps)
        assert all(a <= b for a, b in zip(totals, totals[1:]))


class TestFlopCount:
    def test_exaflops_accessor(self):
        assert FlopCount(2.5e18).exaflops == 2.5

    def test_negative_rejected(self):
        with pytest.raises(InputDomainError):
            FlopCount(-1)

    def test_addition_stays_exact_for_ints(self):
        total = FlopCount(2**62) + FlopCount(2**62)
        assert total.value == 2**63
