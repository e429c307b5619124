"""Training-compute accounting for transformer post-training runs.

Per-token cost is split into a dense part (MLP, attention projections, and
the tied vocabulary matrices, all independent of sequence length) and the
attention-score core, which grows linearly with the average sequence length.
Per-step cost composes the per-token figure according to the training
algorithm: plain supervised steps, group-sampled policy optimization with or
without dynamic difficulty sampling, on/off-policy hybrids, and gated-update
runs with dynamic batch composition.

All functions are pure; every count is exact integer arithmetic whenever the
inputs are integers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

from .errors import InputDomainError

#: One exaFLOP.
EXA = 1e18


class Algorithm(str, Enum):
    """Training-algorithm tag carried by each logged step."""

    SFT = "sft"
    GRPO = "grpo"
    DAPO = "dapo"
    HYBRID = "hybrid"
    UPT = "upt"

    @classmethod
    def parse(cls, text: str) -> "Algorithm":
        """Case-insensitive parse; on/off-policy hybrids share one tag."""
        key = str(text).strip().lower()
        if key in ("luffy", "srft"):
            key = "hybrid"
        try:
            return cls(key)
        except ValueError:
            valid = ", ".join(a.value for a in cls)
            raise InputDomainError(
                f"unknown algorithm {text!r} (expected one of: {valid}, luffy, srft)"
            ) from None


@dataclass(frozen=True)
class ModelConfig:
    """Transformer architecture parameters entering the per-token cost.

    ``kv_total_dim`` is the total key (equivalently value) projection width
    across all KV heads; under grouped-query attention it is smaller than
    ``hidden_size``.
    """

    num_layers: int
    hidden_size: int
    ffn_intermediate: int
    vocab_size: int
    kv_total_dim: int

    def __post_init__(self):
        for name in (
            "num_layers",
            "hidden_size",
            "ffn_intermediate",
            "vocab_size",
            "kv_total_dim",
        ):
            value = getattr(self, name)
            if not isinstance(value, int) or isinstance(value, bool) or value < 1:
                raise InputDomainError(f"{name} must be a positive integer, got {value!r}")
        if self.kv_total_dim > self.hidden_size:
            raise InputDomainError(
                "kv_total_dim cannot exceed hidden_size "
                f"({self.kv_total_dim} > {self.hidden_size})"
            )


@dataclass(frozen=True, order=True)
class FlopCount:
    """A nonnegative count of floating-point operations."""

    value: float

    def __post_init__(self):
        if not math.isfinite(self.value) or self.value < 0:
            raise InputDomainError(f"FLOP count must be finite and >= 0, got {self.value!r}")

    @property
    def exaflops(self) -> float:
        return self.value / EXA

    def __add__(self, other):
        if isinstance(other, FlopCount):
            return FlopCount(self.value + other.value)
        return NotImplemented


# Fields of StepSpec that each algorithm actually consumes; anything else
# must be absent (zero) in a valid record.
_RELEVANT_FIELDS = {
    Algorithm.SFT: frozenset({"batch", "avg_seq_len"}),
    Algorithm.GRPO: frozenset({"batch", "group_size", "avg_seq_len"}),
    Algorithm.DAPO: frozenset(
        {"batch", "update_batch", "sampling_rounds", "group_size", "avg_seq_len"}
    ),
    Algorithm.HYBRID: frozenset(
        {"batch", "group_size", "expert_per_prompt", "avg_on_len", "avg_off_len"}
    ),
    Algorithm.UPT: frozenset(
        {"group_size", "on_policy_kept", "off_policy_kept", "avg_on_len", "avg_off_len"}
    ),
}

_COUNT_FIELDS = (
    "batch",
    "update_batch",
    "sampling_rounds",
    "group_size",
    "expert_per_prompt",
    "on_policy_kept",
    "off_policy_kept",
)
_LENGTH_FIELDS = ("avg_seq_len", "avg_on_len", "avg_off_len")


@dataclass(frozen=True)
class StepSpec:
    """One training step's algorithm tag plus batch/rollout/length parameters.

    For DAPO, ``batch`` is the generation batch per sampling round and
    ``update_batch`` the actor-update batch; for hybrids, ``expert_per_prompt``
    counts off-policy expert trajectories mixed in per prompt; for gated
    updates, ``on_policy_kept``/``off_policy_kept`` are the retained training
    samples. Average lengths are in tokens and may be fractional.
    """

    algorithm: Algorithm
    batch: int = 0
    update_batch: int = 0
    sampling_rounds: int = 0
    group_size: int = 0
    expert_per_prompt: int = 0
    on_policy_kept: int = 0
    off_policy_kept: int = 0
    avg_seq_len: float = 0.0
    avg_on_len: float = 0.0
    avg_off_len: float = 0.0

    def __post_init__(self):
        if not isinstance(self.algorithm, Algorithm):
            object.__setattr__(self, "algorithm", Algorithm.parse(self.algorithm))
        for name in _COUNT_FIELDS:
            value = getattr(self, name)
            if not isinstance(value, int) or isinstance(value, bool) or value < 0:
                raise InputDomainError(
                    f"{name} must be a nonnegative integer, got {value!r}"
                )
        for name in _LENGTH_FIELDS:
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                raise InputDomainError(f"{name} must be finite and >= 0, got {value!r}")
        relevant = _RELEVANT_FIELDS[self.algorithm]
        for name in _COUNT_FIELDS + _LENGTH_FIELDS:
            if name not in relevant and getattr(self, name):
                raise InputDomainError(
                    f"{name} is not used by {self.algorithm.value} steps and must be 0"
                )
        if self.algorithm is Algorithm.DAPO:
            if self.update_batch > self.sampling_rounds * self.batch:
                raise InputDomainError(
                    "update_batch cannot exceed sampling_rounds * batch "
                    f"({self.update_batch} > {self.sampling_rounds} * {self.batch})"
                )


def _check_positive_count(value, name: str) -> None:
    if value < 1:
        raise InputDomainError(f"{name} must be >= 1, got {value!r}")


def _check_seq_len(seq_len, name: str = "seq_len") -> None:
    if not math.isfinite(seq_len) or seq_len < 1:
        raise InputDomainError(f"{name} must be finite and >= 1, got {seq_len!r}")


def forward_flops_per_token(cfg: ModelConfig, seq_len) -> FlopCount:
    """Theoretical forward FLOPs per token for the given average length.

    The dense part counts, per layer, the three gated-MLP projections
    (3*H*H_ff) and the four attention projections (2*H*(H + D_KV)), plus the
    embedding/LM-head pair (2*V*H), all doubled for multiply-accumulate. The
    attention core adds 4*S*L*H, the only length-dependent term.
    """
    _check_seq_len(seq_len)
    L, H = cfg.num_layers, cfg.hidden_size
    p_mlp = 3 * H * cfg.ffn_intermediate
    p_attn_linear = 2 * H * (H + cfg.kv_total_dim)
    p_vocab = 2 * cfg.vocab_size * H
    dense = 2 * (L * (p_mlp + p_attn_linear) + p_vocab)
    attn_core = 4 * seq_len * L * H
    return FlopCount(dense + attn_core)


def train_flops_per_token(cfg: ModelConfig, seq_len) -> FlopCount:
    """Forward plus backward cost per token; backward is twice forward."""
    return FlopCount(3 * forward_flops_per_token(cfg, seq_len).value)


def sft_step_flops(cfg: ModelConfig, batch: int, avg_seq_len) -> FlopCount:
    """One supervised step over ``batch`` sequences: 3 * B * S * F_token."""
    _check_positive_count(batch, "batch")
    per_token = forward_flops_per_token(cfg, avg_seq_len).value
    return FlopCount(3 * batch * avg_seq_len * per_token)


def grpo_step_flops(cfg: ModelConfig, batch: int, group_size: int, avg_seq_len) -> FlopCount:
    """One group-sampled RL step: generate G responses per prompt, update on
    all of them, totalling (1 + 3) * B * G * S * F_token."""
    _check_positive_count(batch, "batch")
    _check_positive_count(group_size, "group_size")
    per_token = forward_flops_per_token(cfg, avg_seq_len).value
    return FlopCount(4 * batch * group_size * avg_seq_len * per_token)


def dapo_step_flops(
    cfg: ModelConfig,
    sampling_rounds: int,
    gen_batch: int,
    train_batch: int,
    group_size: int,
    avg_seq_len,
) -> FlopCount:
    """One dynamic-difficulty-sampling RL step.

    The generation phase runs ``sampling_rounds`` inference rounds of
    ``gen_batch`` prompts each; the update phase trains on the filtered
    ``train_batch``: (K * B_gen + 3 * B_train) * G * S * F_token.
    """
    _check_positive_count(sampling_rounds, "sampling_rounds")
    _check_positive_count(gen_batch, "gen_batch")
    _check_positive_count(group_size, "group_size")
    _check_positive_count(train_batch, "train_batch")
    if train_batch > sampling_rounds * gen_batch:
        raise InputDomainError(
            "train_batch cannot exceed sampling_rounds * gen_batch "
            f"({train_batch} > {sampling_rounds} * {gen_batch})"
        )
    per_token = forward_flops_per_token(cfg, avg_seq_len).value
    total = (sampling_rounds * gen_batch + 3 * train_batch) * group_size
    return FlopCount(total * avg_seq_len * per_token)


def hybrid_step_flops(
    cfg: ModelConfig,
    batch: int,
    group_size: int,
    expert_per_prompt: int,
    avg_on_len,
    avg_off_len=0.0,
) -> FlopCount:
    """One on/off-policy hybrid step.

    Both generation and update touch the G on-policy rollouts; the update
    additionally covers N expert trajectories per prompt, giving
    4 * [B*G*S_on*F_token(S_on) + B*N*S_off*F_token(S_off)]. The per-token
    cost is evaluated at each stream's own average length.
    """
    _check_positive_count(batch, "batch")
    _check_positive_count(group_size, "group_size")
    if expert_per_prompt < 0:
        raise InputDomainError(f"expert_per_prompt must be >= 0, got {expert_per_prompt!r}")
    on_tok = forward_flops_per_token(cfg, avg_on_len).value
    total = batch * group_size * avg_on_len * on_tok
    if expert_per_prompt:
        off_tok = forward_flops_per_token(cfg, avg_off_len).value
        total += batch * expert_per_prompt * avg_off_len * off_tok
    return FlopCount(4 * total)


def upt_step_flops(
    cfg: ModelConfig,
    group_size: int,
    on_kept: int,
    off_kept: int,
    avg_on_len,
    avg_off_len=0.0,
) -> FlopCount:
    """One gated-update step with dynamic batch composition.

    Generation covers the G sampled rollouts; the update trains only the
    retained samples: G*S_on*F_token(S_on) + 3*[N_on*S_on*F_token(S_on) +
    N_off*S_off*F_token(S_off)].
    """
    _check_positive_count(group_size, "group_size")
    if on_kept < 0 or off_kept < 0:
        raise InputDomainError("kept sample counts must be >= 0")
    on_tok = forward_flops_per_token(cfg, avg_on_len).value
    total = group_size * avg_on_len * on_tok
    if on_kept:
        total += 3 * on_kept * avg_on_len * on_tok
    if off_kept:
        off_tok = forward_flops_per_token(cfg, avg_off_len).value
        total += 3 * off_kept * avg_off_len * off_tok
    return FlopCount(total)


def step_flops(cfg: ModelConfig, spec: StepSpec) -> FlopCount:
    """Per-step FLOPs for a logged step, dispatched on its algorithm tag."""
    alg = spec.algorithm
    if alg is Algorithm.SFT:
        return sft_step_flops(cfg, spec.batch, spec.avg_seq_len)
    if alg is Algorithm.GRPO:
        return grpo_step_flops(cfg, spec.batch, spec.group_size, spec.avg_seq_len)
    if alg is Algorithm.DAPO:
        return dapo_step_flops(
            cfg,
            spec.sampling_rounds,
            spec.batch,
            spec.update_batch,
            spec.group_size,
            spec.avg_seq_len,
        )
    if alg is Algorithm.HYBRID:
        return hybrid_step_flops(
            cfg,
            spec.batch,
            spec.group_size,
            spec.expert_per_prompt,
            spec.avg_on_len,
            spec.avg_off_len,
        )
    if alg is Algorithm.UPT:
        return upt_step_flops(
            cfg,
            spec.group_size,
            spec.on_policy_kept,
            spec.off_policy_kept,
            spec.avg_on_len,
            spec.avg_off_len,
        )
    raise InputDomainError(f"unhandled algorithm {alg!r}")


def accumulate_run_flops(cfg: ModelConfig, steps) -> list[FlopCount]:
    """Cumulative FLOPs over an ordered sequence of StepSpec.

    Element i sums the per-step cost of steps 0..i; the result is monotone
    nondecreasing. Integer inputs accumulate exactly.
    """
    steps = list(steps)
    if not steps:
        raise InputDomainError("cannot accumulate an empty step sequence")
    out: list[FlopCount] = []
    running = 0
    for spec in steps:
        running = running + step_flops(cfg, spec).value
        out.append(FlopCount(running))
    return out
