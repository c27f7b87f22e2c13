"""Synthetic toy images and image file I/O."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image
from scipy import ndimage

KINDS = ("field_short", "field_mid", "field_long", "checkerboard", "gradient", "sinusoids")
_CORRELATION = {"field_short": 1.0, "field_mid": 2.5, "field_long": 5.0}


def _normalize(a, rng):
    a = (a - a.min()) / max(float(np.ptp(a)), 1e-12)
    lo = rng.uniform(0.0, 0.3)
    hi = rng.uniform(0.7, 1.0)
    return lo + (hi - lo) * a


def synth_image(rng, size, kind):
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    if kind in _CORRELATION:
        img = ndimage.gaussian_filter(rng.standard_normal((size, size)), _CORRELATION[kind], mode="wrap")
    elif kind == "checkerboard":
        cell = int(rng.integers(2, max(3, size // 4) + 1))
        a, b = rng.uniform(0, 1, 2)
        img = np.where(((xx // cell) + (yy // cell)) % 2 == 0, a, b)
        img = img + 0.05 * ndimage.gaussian_filter(rng.standard_normal((size, size)), 1.0)
    elif kind == "gradient":
        theta = rng.uniform(0, 2 * np.pi)
        img = np.cos(theta) * xx + np.sin(theta) * yy
        img = img + 0.1 * size * ndimage.gaussian_filter(rng.standard_normal((size, size)), 4.0)
    elif kind == "sinusoids":
        img = np.zeros((size, size))
        for _ in range(int(rng.integers(2, 5))):
            f = rng.uniform(0.05, 0.35) * 2 * np.pi
            theta = rng.uniform(0, np.pi)
            img += rng.uniform(0.3, 1.0) * np.sin(f * (np.cos(theta) * xx + np.sin(theta) * yy)
                                                  + rng.uniform(0, 2 * np.pi))
    else:
        raise ValueError(f"unknown image kind {kind!r}")
    return _normalize(img, rng)


def make_images(seed, count, size):
    """``count`` deterministic images ``[count, 1, size, size]`` in [0, 1], quantized to 8 bits."""
    out = np.empty((count, 1, size, size), np.float32)
    for i in range(count):
        rng = np.random.default_rng([seed, i])
        kind = KINDS[int(rng.integers(len(KINDS)))]
        img = synth_image(rng, size, kind)
        out[i, 0] = np.round(img * 255.0) / 255.0
    return out


def gen_dataset(directory, seed, count, size, num_downsamples=3):
    """Write ``count`` PNGs named ``img_00000.png``...; returns the file paths."""
    if size % (2 ** num_downsamples):
        raise ValueError(f"size {size} not divisible by {2 ** num_downsamples}")
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, img in enumerate(make_images(seed, count, size)):
        path = directory / f"img_{i:05d}.png"
        save_image(path, img)
        paths.append(path)
    return paths


def save_image(path, img):
    """Write a ``[C, H, W]`` float image in [0, 1] as 8-bit PNG (or PPM/PGM by suffix)."""
    arr = np.clip(np.round(np.asarray(img, np.float64) * 255.0), 0, 255).astype(np.uint8)
    if arr.shape[0] == 1:
        pil = Image.fromarray(arr[0], mode="L")
    else:
        pil = Image.fromarray(arr.transpose(1, 2, 0), mode="RGB")
    fmt = "PPM" if Path(path).suffix.lower() in (".ppm", ".pgm", ".pnm") else "PNG"
    pil.save(path, format=fmt)


def load_image(path, channels=1):
    """Read PNG or binary PPM/PGM into ``[channels, H, W]`` float32 in [0, 1]."""
    with Image.open(path) as im:
        im = im.convert("L" if channels == 1 else "RGB")
        arr = np.asarray(im, dtype=np.float32) / 255.0
    return arr[None] if channels == 1 else arr.transpose(2, 0, 1).copy()


def load_directory(directory, channels=1):
    paths = sorted(p for p in Path(directory).iterdir()
                   if p.suffix.lower() in (".png", ".ppm", ".pgm", ".pnm"))
    if not paths:
        return np.empty((0, channels, 0, 0), np.float32), []
    return np.stack([load_image(p, channels) for p in paths]), paths


def split_holdout(images, fraction=0.1):
    """Last ``fraction`` of images (by index) are held out; at least one when possible."""
    n = len(images)
    k = max(1, int(round(n * fraction))) if n > 1 else 0
    return images[:n - k], images[n - k:]
