from pathlib import Path

import numpy as np
import pytest

import svan

DATA = Path(__file__).resolve().parents[2] / "tests" / "data"
rng = np.random.default_rng(7)


def test_gelu_matches_exact_erf():
    from scipy.special import erf

    x = rng.normal(size=(1, 2, 5, 5)) * 3
    want = 0.5 * x * (1 + erf(x / np.sqrt(2)))
    np.testing.assert_allclose(svan.gelu(x), want, rtol=1e-13, atol=1e-15)


@pytest.mark.parametrize("groups,dilation,padding", [(1, 1, "same"), (4, 3, "same"), (2, 2, "valid")])
def test_conv2d_matches_torch(groups, dilation, padding):
    torch = pytest.importorskip("torch")
    x = rng.normal(size=(2, 4, 19, 17))
    w = rng.normal(size=(8, 4 // groups, 5, 5))
    b = rng.normal(size=8)
    pad = 0 if padding == "valid" else 2 * dilation
    want = torch.nn.functional.conv2d(
        torch.from_numpy(x), torch.from_numpy(w), torch.from_numpy(b), padding=pad, dilation=dilation, groups=groups
    ).numpy()
    got = svan.conv2d(x, w, b, dilation=dilation, groups=groups, padding=padding)
    assert got.shape == want.shape
    np.testing.assert_allclose(got, want, rtol=1e-12, atol=1e-12)


def test_pixel_shuffle_matches_torch():
    torch = pytest.importorskip("torch")
    x = rng.normal(size=(1, 12, 4, 5))
    want = torch.nn.functional.pixel_shuffle(torch.from_numpy(x), 2).numpy()
    np.testing.assert_array_equal(svan.pixel_shuffle(x, 2), want)
    np.testing.assert_array_equal(svan.pixel_unshuffle(want, 2), x)


def test_pixel_norm_standardizes_channels():
    x = rng.normal(size=(1, 6, 3, 3))
    y = svan.pixel_norm(x, np.ones(6), np.zeros(6))
    np.testing.assert_allclose(y.mean(axis=1), 0, atol=1e-12)
    np.testing.assert_allclose(y.var(axis=1), 1, rtol=1e-4)


def test_ssim_matches_skimage():
    from skimage.metrics import structural_similarity

    a = rng.uniform(size=(40, 37))
    b = np.clip(a + rng.normal(scale=0.1, size=a.shape), 0, 1)
    want = structural_similarity(a, b, gaussian_weights=True, sigma=1.5, use_sample_covariance=False, data_range=1.0)
    assert svan.ssim(a[None, None], b[None, None]) == pytest.approx(want, abs=1e-10)


def test_png_decoding_matches_pillow():
    from PIL import Image

    for name in ["palette.png", "rgba8.png", "gray8.png", "images/coffee.png"]:
        want = np.asarray(Image.open(DATA / name).convert("RGB"), dtype=np.float64) / 255
        got = svan.load_png(DATA / name)
        np.testing.assert_array_equal(got[0].transpose(1, 2, 0), want)
    with pytest.raises(svan.UnsupportedError):
        svan.load_png(DATA / "gray16.png")


def test_psnr_and_bicubic():
    hr = svan.load_png(DATA / "images" / "astronaut.png")
    lr = svan.bicubic_resize(hr, 48, 48)
    up = svan.bicubic_resize(lr, 96, 96)
    p = svan.psnr_y(up, hr, shave=2)
    assert 20 < p < 40
    assert svan.psnr_y(hr, hr) == float("inf")
    assert svan.ssim_y(hr, hr) == 1.0


def test_model_forward_and_checkpoint(tmp_path):
    params = svan.init_params(scale=2, channels=8, blocks=1, seed=3)
    x = rng.uniform(size=(1, 3, 10, 12))
    y = svan.forward(x, params)
    assert y.shape == (1, 3, 20, 24)
    path = tmp_path / "m.ckpt"
    svan.save_checkpoint(params, path)
    loaded = svan.load_checkpoint(path)
    assert loaded.scale == 2 and loaded.arrangement == "17-1-1-17"
    np.testing.assert_array_equal(svan.forward(x, loaded), y)
    with pytest.raises(svan.DimensionError):
        svan.forward(np.zeros((1, 4, 8, 8)), params)
    path.write_bytes(b"garbage")
    with pytest.raises(svan.CorruptFileError):
        svan.load_checkpoint(path)


def test_efficiency_counts():
    report = svan.count_params(scale=4)
    assert report["params"] == sum(r["params"] for r in report["rows"])
    padded = svan.count_flops(scale=4, h=64, w=64)
    assert padded["macs"] <= padded["flops"]
    rows = svan.table3()
    assert [r["rf"] for r in rows] == [5, 17, 17]
