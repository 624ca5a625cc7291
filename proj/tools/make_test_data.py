#!/usr/bin/env python3
"""Regenerates the image fixtures under tests/data from scikit-image's bundled
sample images and freezes reference PSNR/SSIM values computed by
skimage.metrics. Run from the repository root."""

import json
import os

import numpy as np
import skimage.color
import skimage.data
import skimage.metrics
import skimage.transform
from skimage.io import imsave

OUT = os.path.join("tests", "data")
CROP = 96


def gray(name):
    im = getattr(skimage.data, name)()
    if im.ndim == 3:
        im = skimage.color.rgb2gray(im[..., :3])
    else:
        im = im / 255.0
    # Half-resolution copies carry more detail per pixel than the originals.
    return skimage.transform.rescale(im, 0.5, anti_aliasing=True)


def crops(im, count):
    h, w = im.shape
    out = []
    for k in range(count):
        r = (h - CROP) * (k + 1) // (count + 1)
        c = (w - CROP) * (count - k) // (count + 1)
        out.append(im[r:r + CROP, c:c + CROP])
    return out


def save(path, im):
    os.makedirs(os.path.dirname(path), exist_ok=True)
    imsave(path, (np.clip(im, 0, 1) * 255).round().astype(np.uint8),
           check_contrast=False)


def main():
    train = ["astronaut", "camera", "coffee", "brick", "coins", "rocket",
             "page", "grass"]
    holdout = ["chelsea", "immunohistochemistry", "moon"]
    for name in train:
        for k, c in enumerate(crops(gray(name), 2)):
            save(os.path.join(OUT, "train", f"{name}_{k}.png"), c)
    for name in holdout:
        for k, c in enumerate(crops(gray(name), 2)):
            save(os.path.join(OUT, "holdout", f"{name}_{k}.png"), c)

    color = skimage.data.coffee()[100:164, 200:272]
    os.makedirs(os.path.join(OUT, "color"), exist_ok=True)
    imsave(os.path.join(OUT, "color", "coffee_crop.png"), color)

    # Metric fixtures: five distorted pairs, all 8-bit, references from
    # skimage.metrics on the /255 values with a Gaussian 11x11 window.
    rng = np.random.default_rng(7)
    base = (crops(gray("camera"), 1)[0] * 255).round() / 255
    other = (crops(gray("astronaut"), 1)[0] * 255).round() / 255
    pairs = {
        "noise": np.clip(base + rng.normal(0, 0.05, base.shape), 0, 1),
        "blur": skimage.filters.gaussian(base, 1.2),
        "shift": np.roll(base, 1, axis=1),
        "gain": np.clip(0.8 * base + 0.1, 0, 1),
        "unrelated": other,
    }
    refs = []
    save(os.path.join(OUT, "metrics", "reference.png"), base)
    for name, dist in pairs.items():
        dist = (np.clip(dist, 0, 1) * 255).round() / 255
        save(os.path.join(OUT, "metrics", f"{name}.png"), dist)
        refs.append({
            "name": name,
            "psnr": skimage.metrics.peak_signal_noise_ratio(base, dist,
                                                            data_range=1.0),
            "ssim": skimage.metrics.structural_similarity(
                base, dist, data_range=1.0, gaussian_weights=True, sigma=1.5,
                use_sample_covariance=False),
        })
    with open(os.path.join(OUT, "metrics", "reference.json"), "w") as f:
        json.dump({"generator": "skimage.metrics " + skimage.__version__,
                   "pairs": refs}, f, indent=2)


if __name__ == "__main__":
    import skimage.filters  # noqa: F401
    main()
