"""Writes tests/data/ssim_corpus.txt: image pairs with reference SSIM/PSNR/MAE from scikit-image."""
import sys
import numpy as np
from skimage.metrics import structural_similarity, peak_signal_noise_ratio

rng = np.random.default_rng(20240611)


def smooth(h, w):
    y, x = np.mgrid[0:h, 0:w]
    img = 0.5 + 0.3 * np.sin(x / 3.0) * np.cos(y / 4.0) + 0.1 * rng.standard_normal((h, w))
    return np.clip(img, 0, 1)


cases = []
a = rng.random((32, 32)); b = rng.random((32, 32))
cases.append(("uniform_random", a, b))
s = smooth(32, 32)
cases.append(("smooth_vs_noisy", s, np.clip(s + 0.05 * rng.standard_normal(s.shape), 0, 1)))
half = np.zeros((32, 32)); half[:, 16:] = 1.0
cases.append(("half_vs_inverse", half, 1.0 - half))
mid = np.clip(0.3 + 0.4 * rng.random((32, 32)), 0, 1)
cases.append(("shift_0.1_clamped", mid, np.clip(mid + 0.1, 0, 1)))
r = smooth(20, 27)
cases.append(("rectangular", r, np.clip(r * 0.8 + 0.05, 0, 1)))
e = rng.random((11, 11))
cases.append(("window_sized", e, np.clip(e + 0.02 * rng.standard_normal((11, 11)), 0, 1)))
g = smooth(48, 40)
cases.append(("blurred_like", g, np.clip(0.5 * g + 0.25, 0, 1)))

out = open(sys.argv[1], "w")
out.write(f"{len(cases)}\n")
for name, x, y in cases:
    ssim = structural_similarity(x, y, gaussian_weights=True, sigma=1.5, use_sample_covariance=False,
                                 data_range=1.0, K1=0.01, K2=0.03, win_size=11)
    psnr = peak_signal_noise_ratio(x, y, data_range=1.0)
    mae = float(np.mean(np.abs(x - y)))
    out.write(f"{name} {x.shape[0]} {x.shape[1]} {float(ssim)!r} {float(psnr)!r} {mae!r}\n")
    out.write(" ".join(repr(float(v)) for v in x.ravel()) + "\n")
    out.write(" ".join(repr(float(v)) for v in y.ravel()) + "\n")
