import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from met2net.metrics import (MetricError, acc, evaluate, linear_cka, pcc, pixel_metrics, psnr, r2, ssim,
                             write_error_heatmaps, write_metrics_csv)
from met2net.metrics.core import gaussian_window, psnr_from_mse
from met2net.metrics.report import METRICS, read_pgm, write_pgm


def rel(a, b):
    return abs(a - b) / max(abs(b), 1e-12)


# naive oracles -----------------------------------------------------------------------------------

def loop_pixel(p, t):
    s2 = s1 = 0.0
    n = 0
    for a, b in zip(p.ravel().tolist(), t.ravel().tolist()):
        s2 += (a - b) ** 2
        s1 += abs(a - b)
        n += 1
    return s2 / n, s1 / n, math.sqrt(s2 / n)


def loop_ssim(p, t, L):
    g1 = [math.exp(-((k - 5) ** 2) / (2 * 1.5 ** 2)) for k in range(11)]
    s = sum(g1)
    w = [[g1[i] * g1[j] / s / s for j in range(11)] for i in range(11)]
    c1, c2 = (0.01 * L) ** 2, (0.03 * L) ** 2
    H, W = p.shape
    vals = []
    for y in range(H - 10):
        for x in range(W - 10):
            mu1 = mu2 = e11 = e22 = e12 = 0.0
            for i in range(11):
                for j in range(11):
                    a, b, k = p[y + i, x + j], t[y + i, x + j], w[i][j]
                    mu1 += k * a
                    mu2 += k * b
                    e11 += k * a * a
                    e22 += k * b * b
                    e12 += k * a * b
            v1, v2, cov = e11 - mu1 ** 2, e22 - mu2 ** 2, e12 - mu1 * mu2
            vals.append((2 * mu1 * mu2 + c1) * (2 * cov + c2) / ((mu1 ** 2 + mu2 ** 2 + c1) * (v1 + v2 + c2)))
    return sum(vals) / len(vals)


def loop_corr(a, b):
    a, b = a.ravel().tolist(), b.ravel().tolist()
    ma, mb = sum(a) / len(a), sum(b) / len(b)
    num = sum((x - ma) * (y - mb) for x, y in zip(a, b))
    da = math.sqrt(sum((x - ma) ** 2 for x in a))
    db = math.sqrt(sum((y - mb) ** 2 for y in b))
    return num / (da * db)


def loop_r2(p, t):
    tl, pl = t.ravel().tolist(), p.ravel().tolist()
    m = sum(tl) / len(tl)
    return 1 - sum((a - b) ** 2 for a, b in zip(tl, pl)) / sum((a - m) ** 2 for a in tl)


def hsic_cka(x, y):
    n = x.shape[0]
    h = np.eye(n) - np.ones((n, n)) / n
    k, l = x @ x.T, y @ y.T
    hsic = lambda a, b: np.trace(a @ h @ b @ h) / (n - 1) ** 2
    return hsic(k, l) / math.sqrt(hsic(k, k) * hsic(l, l))


@pytest.fixture
def fields(rng):
    t = rng.random((16, 16)) * 10
    p = t + rng.standard_normal((16, 16))
    return p, t


def test_pixel_metrics_oracle(fields):
    p, t = fields
    got = pixel_metrics(p, t)
    for k, v in zip(("mse", "mae", "rmse"), loop_pixel(p, t)):
        assert rel(got[k], v) < 1e-6


def test_pixel_metrics_trivial():
    z = np.zeros((4, 4))
    assert pixel_metrics(z, z) == {"mse": 0.0, "mae": 0.0, "rmse": 0.0}
    assert pixel_metrics(z + 2, z) == {"mse": 4.0, "mae": 2.0, "rmse": 2.0}
    with pytest.raises(MetricError):
        pixel_metrics(np.zeros(3), np.zeros(4))


def test_ssim_oracle(fields):
    p, t = fields
    assert rel(ssim(p, t, 10.0), loop_ssim(p, t, 10.0)) < 1e-6


def test_ssim_identical_and_negative(rng):
    x = rng.random((16, 16))
    assert abs(ssim(x, x, 1.0) - 1.0) < 1e-12
    pattern = np.indices((16, 16)).sum(axis=0) % 2 * 0.8 + 0.1
    assert ssim(pattern, 1.0 - pattern, 1.0) < 1.0


def test_ssim_constant_closed_form():
    L, m1, m2 = 1.0, 0.3, 0.55
    c1 = (0.01 * L) ** 2
    expect = (2 * m1 * m2 + c1) / (m1 ** 2 + m2 ** 2 + c1)
    assert rel(ssim(np.full((16, 16), m1), np.full((16, 16), m2), L), expect) < 1e-6


def test_ssim_errors():
    with pytest.raises(MetricError, match="window"):
        ssim(np.zeros((8, 8)), np.zeros((8, 8)), 1.0)
    with pytest.raises(MetricError):
        ssim(np.zeros((16, 16)), np.zeros((16, 16)), 0.0)


def test_gaussian_window_normalized():
    g = gaussian_window()
    assert g.size == 11 and abs(g.sum() - 1) < 1e-15 and g.argmax() == 5


def test_psnr_values(fields):
    assert abs(psnr_from_mse(4.0, 255.0) - 42.1102) < 1e-4
    assert psnr(np.ones((3, 3)), np.ones((3, 3)), 1.0) == 100.0
    p, t = fields
    assert rel(psnr(p, t, 10.0), 10 * math.log10(100 / loop_pixel(p, t)[0])) < 1e-6


@settings(max_examples=50, deadline=None)
@given(st.floats(1e-6, 1e3), st.floats(1e-6, 1e3))
def test_psnr_decreases_with_mse(a, b):
    if a == b:
        return
    lo, hi = min(a, b), max(a, b)
    assert psnr_from_mse(lo, 1.0) > psnr_from_mse(hi, 1.0)


def test_pcc_r2_acc_oracles(fields, rng):
    p, t = fields
    clim = rng.random((16, 16)) * 5
    assert rel(pcc(p, t), loop_corr(p, t)) < 1e-6
    assert rel(r2(p, t), loop_r2(p, t)) < 1e-6
    assert rel(acc(p, t, clim), loop_corr(p - clim, t - clim)) < 1e-6


def test_pcc_is_per_frame_mean(rng):
    p, t = rng.random((3, 16, 16)), rng.random((3, 16, 16))
    assert rel(pcc(p, t), np.mean([loop_corr(p[i], t[i]) for i in range(3)])) < 1e-6


def test_identity_scores(fields):
    _, t = fields
    assert pcc(t, t) == pytest.approx(1.0, abs=1e-12)
    assert r2(t, t) == 1.0
    assert acc(t, t, np.zeros_like(t)) == pytest.approx(1.0, abs=1e-12)
    assert r2(np.full_like(t, t.mean()), t) == pytest.approx(0.0, abs=1e-12)


def test_undefined_scores_raise():
    c = np.ones((4, 4))
    x = np.arange(16.0).reshape(4, 4)
    with pytest.raises(MetricError):
        pcc(c, x)
    with pytest.raises(MetricError):
        r2(x, c)
    with pytest.raises(MetricError):
        acc(x, c, c)


# CKA ---------------------------------------------------------------------------------------------

def test_cka_hand_pair():
    x = np.array([[1.0, 2.0], [3.0, 4.0], [5.0, 7.0]])
    y = np.array([[2.0, 0.0], [1.0, 1.0], [0.0, 3.0]])
    # exact value: sqrt(373321 / 376270), from rational arithmetic on the HSIC ratio
    assert abs(linear_cka(x, y) - 0.9960735629735712) < 1e-10
    assert abs(linear_cka(x, y) - hsic_cka(x, y)) < 1e-10


def test_cka_self_rotation_scaling(rng):
    x = rng.standard_normal((40, 6))
    q, _ = np.linalg.qr(rng.standard_normal((6, 6)))
    assert abs(linear_cka(x, x) - 1) < 1e-6
    assert abs(linear_cka(x, x @ q) - 1) < 1e-6
    y = rng.standard_normal((40, 3))
    assert abs(linear_cka(x * 7.5, y) - linear_cka(x, y)) < 1e-6


def test_cka_gram_path_matches_feature_path(rng):
    x, y = rng.standard_normal((10, 50)), rng.standard_normal((10, 4))
    assert abs(linear_cka(x, y) - hsic_cka(x, y)) < 1e-10
    perm = rng.permutation(10)
    assert abs(linear_cka(x[perm], y[perm]) - linear_cka(x, y)) < 1e-12


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 12), st.integers(1, 20), st.integers(1, 20), st.integers(0, 10 ** 6))
def test_cka_in_unit_interval(n, p, q, seed):
    r = np.random.default_rng(seed)
    x, y = r.standard_normal((n, p)), r.standard_normal((n, q))
    v = linear_cka(x, y)
    assert 0.0 <= v <= 1.0


def test_cka_errors():
    with pytest.raises(MetricError):
        linear_cka(np.ones((4, 3)), np.random.default_rng(0).random((4, 2)))
    with pytest.raises(MetricError):
        linear_cka(np.ones((1, 3)), np.ones((1, 3)))
    with pytest.raises(MetricError):
        linear_cka(np.ones((4, 3)), np.ones((5, 3)))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_range_invariants(seed):
    r = np.random.default_rng(seed)
    p, t = r.standard_normal((2, 16, 16)), r.standard_normal((2, 16, 16))
    m = pixel_metrics(p, t)
    assert abs(m["rmse"] ** 2 - m["mse"]) <= 1e-6 * m["mse"]
    assert -1 <= ssim(p, t, 4.0) <= 1 and -1 <= pcc(p, t) <= 1 and r2(p, t) <= 1
    assert -1 <= acc(p, t, np.zeros((16, 16))) <= 1


# reports -----------------------------------------------------------------------------------------

def test_evaluate_perfect_and_csv(tiny_dataset, tmp_path):
    def oracle(x):
        # look the targets up by matching inputs
        return tiny_dataset.normalize(np.asarray(tiny_dataset.raw("test", "targets")[:len(x)]))

    rep = evaluate(oracle, tiny_dataset, "test", batch_size=64)
    assert rep.samples == 6
    assert np.all(rep.values[..., METRICS.index("mse")] < 1e-10)
    assert np.allclose(rep.values[..., METRICS.index("psnr")], 100.0)
    path = write_metrics_csv(rep, tmp_path / "m.csv")
    lines = path.read_text().splitlines()
    assert lines[0] == "variable,leadtime,metric,value"
    assert len(lines) - 1 == 3 * 2 * len(METRICS)
    paths = write_error_heatmaps(rep, tmp_path / "maps")
    assert len(paths) == 6
    assert all(np.all(read_pgm(p) == 0) for p in paths)


def test_evaluate_matches_pooled_metrics(tiny_dataset):
    rng = np.random.default_rng(1)
    noise = rng.standard_normal((6, 2, 3, 1, 16, 16)).astype(np.float32) * 0.3
    target = np.asarray(tiny_dataset.raw("test", "targets"), np.float64)
    pred_phys = tiny_dataset.denormalize(tiny_dataset.normalize(target.astype(np.float32)) + noise).astype(np.float64)
    calls = iter(range(0, 6, 4))

    def model(x):
        s = next(calls)
        return tiny_dataset.normalize(target[s:s + len(x)].astype(np.float32)) + noise[s:s + len(x)]

    rep = evaluate(model, tiny_dataset, "test", batch_size=4)
    for v in range(3):
        for lead in range(2):
            p, t = pred_phys[:, lead, v, 0], target[:, lead, v, 0]
            assert rel(rep.get(v, "mse", lead), pixel_metrics(p, t)["mse"]) < 1e-6
            assert rel(rep.get(v, "r2", lead), r2(p, t)) < 1e-6
            assert rel(rep.get(v, "pcc", lead), pcc(p, t)) < 1e-6


def test_pgm_round_trip(tmp_path, rng):
    img = rng.random((7, 5))
    img[0, 0] = 10 / 255  # a pixel whose byte value is a newline must survive
    path = write_pgm(tmp_path / "a.pgm", img, 1.0)
    back = read_pgm(path)
    assert back.shape == (7, 5) and back[0, 0] == 10
    assert np.array_equal(back, np.rint(img * 255).astype(np.uint8))
