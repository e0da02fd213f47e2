import math

import pytest
import torch

from lvcvc.config import DiscriminatorConfig
from lvcvc.discriminators import Discriminators, period_reshape


@pytest.fixture(scope="module")
def D():
    torch.manual_seed(0)
    return Discriminators(DiscriminatorConfig(mrsd_channels=4, mpwd_channels=(4, 8, 8, 8)))


def test_eight_score_maps(D):
    x = torch.randn(2, 4096)
    maps = D(x)
    assert len(maps) == 8 == D.cfg.n_sub
    assert len(D.mrsd_forward(x)) == 3 and len(D.mpwd_forward(x)) == 5
    for a, b in zip(maps, D(x)):
        assert torch.equal(a, b)
        assert a.shape[0] == 2


def test_period_reshape_shape_and_padding():
    x = torch.arange(2560, dtype=torch.float32)[None]
    out = period_reshape(x, 11)
    assert out.shape == (1, 1, math.ceil(2560 / 11), 11)
    flat = out.reshape(-1)
    assert torch.equal(flat[:2560], x[0])
    # reflection of the tail: 2559 is the mirror axis
    pad = 11 - 2560 % 11
    assert flat[2560:].tolist() == [2558.0 - i for i in range(pad)]


def test_exact_multiple_is_not_padded():
    x = torch.randn(3, 22)
    assert torch.equal(period_reshape(x, 11).reshape(3, -1), x)


def test_too_short_clip(D):
    with pytest.raises(ValueError, match="shorter"):
        D(torch.randn(1, D.min_length - 1))
    D(torch.randn(1, D.min_length))


def test_unbatched_clip(D):
    assert len(D(torch.randn(4096))) == 8


def test_config_validation():
    with pytest.raises(ValueError):
        DiscriminatorConfig(resolutions=((512, 240, 240),))
    with pytest.raises(ValueError):
        DiscriminatorConfig(resolutions=((512, 50, 240), (512, 50, 240)))
    with pytest.raises(ValueError):
        DiscriminatorConfig(periods=(2, 2))
