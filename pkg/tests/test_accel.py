import os
import subprocess
import sys

import numpy as np
import pytest

from lvcvc import _accel


def _cmndf_direct(frame, tau_max, width):
    d = np.array([np.sum((frame[:width] - frame[tau : tau + width]) ** 2) for tau in range(tau_max + 1)])
    out = np.ones(tau_max + 1)
    running = np.cumsum(d[1:])
    out[1:] = np.where(running > 0, d[1:] * np.arange(1, tau_max + 1) / np.where(running > 0, running, 1), 1.0)
    return out


@pytest.mark.parametrize("impl", [_accel.cmndf_numba, _accel.cmndf_numpy], ids=["numba", "numpy"])
def test_cmndf_matches_direct_definition(impl, rng):
    frames = rng.standard_normal((3, 200))
    out = impl(frames, 60, 100)
    for f in range(3):
        np.testing.assert_allclose(out[f], _cmndf_direct(frames[f], 60, 100), rtol=1e-9, atol=1e-12)


@pytest.mark.parametrize("impl", [_accel.cmndf_numba, _accel.cmndf_numpy], ids=["numba", "numpy"])
def test_cmndf_silent_frame_is_one(impl):
    out = impl(np.zeros((1, 50)), 10, 20)
    np.testing.assert_array_equal(out, 1.0)


@pytest.mark.parametrize("impl", [_accel.lvc_loop_numba, _accel.lvc_loop_numpy], ids=["numba", "numpy"])
def test_lvc_loop_paths_agree(impl, rng):
    x = rng.standard_normal((3, 24))
    w = rng.standard_normal((4, 2, 3, 5))
    b = rng.standard_normal((4, 2))
    ref = _accel.lvc_loop_numpy(x, w, b, 3)
    np.testing.assert_allclose(impl(x, w, b, 3), ref, rtol=1e-12, atol=1e-12)


def test_env_flag_selects_numpy_path():
    code = "from lvcvc import _accel; print(_accel.USE_NUMBA, _accel.cmndf is _accel.cmndf_numpy)"
    env = {**os.environ, "LVCVC_DISABLE_NUMBA": "1"}
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.split() == ["False", "True"]


def test_default_dispatch_uses_numba_when_available():
    if os.environ.get("LVCVC_DISABLE_NUMBA"):
        pytest.skip("numba disabled in this environment")
    assert _accel.cmndf is _accel.cmndf_numba and _accel.lvc_loop is _accel.lvc_loop_numba


def test_f0_identical_on_both_paths(monkeypatch):
    from conftest import sine
    from lvcvc import features
    from lvcvc.corpus import AudioClip

    clip = AudioClip(sine(190.0, 0.5))
    monkeypatch.setattr(_accel, "cmndf", _accel.cmndf_numba)
    a = features.estimate_f0(clip)
    monkeypatch.setattr(_accel, "cmndf", _accel.cmndf_numpy)
    b = features.estimate_f0(clip)
    np.testing.assert_allclose(a, b, rtol=1e-9)
