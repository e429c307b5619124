import pytest

from postscale.curves import SigmoidParams
from postscale.flops import ModelConfig


@pytest.fixture
def tiny_cfg() -> ModelConfig:
    """All-ones architecture; per-token forward cost is 18 + 4 * seq_len."""
    return ModelConfig(1, 1, 1, 1, 1)


@pytest.fixture
def qwen_cfg() -> ModelConfig:
    return ModelConfig(28, 3584, 18944, 152064, 512)


@pytest.fixture
def truth_params() -> SigmoidParams:
    """Reference curve used across the synthetic fitting tests."""
    return SigmoidParams(70.0, 85.7, 13.0, 1.5)
