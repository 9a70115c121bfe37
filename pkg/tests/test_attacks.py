import numpy as np
import pytest

from robotkit import attacks, nn
from robotkit.attacks import AttackConfig
from robotkit.errors import ConfigError

import rig


def test_fgsm_zero_gradient_is_noop():
    model = nn.MlpModel((nn.DenseLayer(np.zeros((3, 4)), [1.0, 0.0, 0.0], nn.IDENTITY),))
    x = np.full(4, 0.4, np.float32)
    np.testing.assert_array_equal(attacks.fgsm(model, x, 0, 0.3), x)


def test_fgsm_uniform_push():
    # loss of class 0 rises with every input coordinate: the gradient is positive everywhere
    w = np.vstack([-np.ones(4), np.ones(4)])
    model = nn.MlpModel((nn.DenseLayer(w, [0.0, 0.0], nn.IDENTITY),))
    x = np.array([0.1, 0.3, 0.5, 0.7], np.float32)
    np.testing.assert_allclose(attacks.fgsm(model, x, 0, 0.2), x + 0.2, atol=1e-7)


def test_pgd_single_step_equals_projected_fgsm(blob_model, blobs):
    x, y = blobs.inputs[:20], blobs.labels[:20]
    cfg = AttackConfig(attacks.PGD, 0.3, 1, 0.1, attacks.LINF, 0, random_start=False)
    np.testing.assert_array_equal(attacks.pgd(blob_model, x, y, cfg), attacks.fgsm(blob_model, x, y, 0.1))


@pytest.mark.parametrize("norm", [attacks.LINF, attacks.L2])
@pytest.mark.parametrize("kind", [attacks.FGSM, attacks.PGD])
def test_ball_containment(blob_model, blobs, kind, norm):
    eps = 0.3 if norm == attacks.LINF else 1.0
    cfg = AttackConfig(kind, eps, 10, eps / 6, norm, 5)
    adv = attacks.run_attack(blob_model, blobs.inputs, blobs.labels, cfg)
    assert adv.min() >= 0.0 and adv.max() <= 1.0
    assert attacks.distance(adv, blobs.inputs, norm).max() <= eps + 1e-6


def test_pgd_deterministic(blob_model, blobs):
    cfg = AttackConfig(attacks.PGD, 0.3, 5, 0.05, attacks.LINF, 17)
    a = attacks.pgd(blob_model, blobs.inputs, blobs.labels, cfg)
    b = attacks.pgd(blob_model, blobs.inputs, blobs.labels, cfg)
    assert a.tobytes() == b.tobytes()
    c = attacks.pgd(blob_model, blobs.inputs, blobs.labels, AttackConfig(attacks.PGD, 0.3, 5, 0.05, attacks.LINF, 18))
    assert a.tobytes() != c.tobytes()


def test_pgd_streams_independent_of_batching(blob_model, blobs):
    cfg = AttackConfig(attacks.PGD, 0.3, 3, 0.05, attacks.LINF, 4)
    whole = attacks.pgd(blob_model, blobs.inputs[:10], blobs.labels[:10], cfg)
    first = attacks.pgd(blob_model, blobs.inputs[:5], blobs.labels[:5], cfg)
    second = attacks.pgd(blob_model, blobs.inputs[5:10], blobs.labels[5:10], cfg, offset=5)
    np.testing.assert_allclose(np.concatenate([first, second]), whole, atol=1e-6)


def test_l2_random_start_inside_ball():
    x = np.full((50, 8), 0.5)
    start = attacks.random_start(x, 0.2, attacks.L2, 3)
    assert np.linalg.norm(start - x, axis=1).max() <= 0.2 + 1e-12


def test_config_validation():
    with pytest.raises(ConfigError):
        AttackConfig(attacks.PGD, 0.1, 10, 0.2)
    with pytest.raises(ConfigError):
        AttackConfig(attacks.PGD, 0.0)
    with pytest.raises(ConfigError):
        AttackConfig("jsma", 0.1)
    assert AttackConfig(attacks.PGD, 0.3).step_size == pytest.approx(0.05)


def test_pgd_raises_loss(blob_model, blobs):
    x, y = blobs.inputs, blobs.labels
    adv = attacks.pgd(blob_model, x, y, AttackConfig(attacks.PGD, 0.3, 10, 0.05, rng_seed=1))
    assert np.all(nn.loss(blob_model, adv, y) >= nn.loss(blob_model, x, y) - 1e-6)


@pytest.mark.slow
def test_mnist_attacks_reduce_accuracy():
    _, test = rig.mnist_subset()
    f0 = rig.train_f0(0)
    clean = nn.accuracy(f0, test)
    fg = attacks.fgsm(f0, test.inputs, test.labels, 0.3)
    pg = attacks.pgd(f0, test.inputs, test.labels, rig.pgd_cfg(0))
    fg_acc = np.mean(nn.predict(f0, fg) == test.labels)
    pg_acc = np.mean(nn.predict(f0, pg) == test.labels)
    assert fg_acc < clean
    assert pg_acc <= fg_acc
    fg_loss = nn.loss(f0, fg, test.labels).mean()
    pg_loss = nn.loss(f0, pg, test.labels).mean()
    assert pg_loss >= fg_loss
