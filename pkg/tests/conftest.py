import numpy as np
import pytest
import torch
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.function_scoped_fixture]
)
settings.load_profile("default")

torch.set_num_threads(1)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def sine(freq, seconds=1.0, sr=16000, amp=0.5):
    t = np.arange(int(sr * seconds)) / sr
    return (amp * np.sin(2 * np.pi * freq * t)).astype(np.float32)


@pytest.fixture(scope="session")
def tiny_corpus(tmp_path_factory):
    """3 speakers x 2 short utterances (train), plus one test clip per speaker and one unseen speaker."""
    from lvcvc.toy import make_toy_corpus

    root = tmp_path_factory.mktemp("tiny_corpus")
    return make_toy_corpus(root, n_speakers=3, n_train=2, n_test=1, n_unseen_speakers=1, seconds=0.6, seed=3)


@pytest.fixture(scope="session")
def tiny_config():
    from lvcvc.config import DiscriminatorConfig, GeneratorConfig, TrainConfig
    from lvcvc.speaker import EncoderConfig

    return TrainConfig.toy(
        batch=2,
        iters_phase1=3,
        iters_phase2=3,
        anneal_steps=2,
        n_ssc=1,
        crop_frames=8,
        checkpoint_every=2,
        generator=GeneratorConfig(kp_hidden=16, kp_residual=1),
        discriminator=DiscriminatorConfig(
            resolutions=((256, 32, 128), (128, 16, 64)), periods=(2, 3), mrsd_channels=4, mpwd_channels=(4, 8)
        ),
        encoder=EncoderConfig(embed_dim=32, channels=16, attention_dim=8, pretrain_steps=5, pretrain_batch=4, crop_frames=8),
    )


@pytest.fixture(scope="session")
def tiny_run(tiny_corpus, tiny_config, tmp_path_factory):
    """A complete (very short) two-phase run: ``(registry, config, run_dir, checkpoint, utterances)``."""
    from lvcvc.trainer import prepare_training_data, run_training

    run_dir = tmp_path_factory.mktemp("tiny_run")
    utts, enc, gs, med = prepare_training_data(tiny_corpus, tiny_config)
    ckpt, _ = run_training(tiny_config, utts, enc, gs, med, run_dir=run_dir)
    return tiny_corpus, tiny_config, run_dir, ckpt, utts
