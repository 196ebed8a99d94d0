"""Regenerate tests/corpus/ from the sample images bundled with scikit-image
and scikit-learn. Only needed when the corpus itself changes; the outputs are
checked in so tests never depend on these packages.

    python scripts/make_corpus.py
"""

from pathlib import Path

import numpy as np
import skimage.data as skd
from scipy.ndimage import gaussian_filter
from skimage.transform import resize
from sklearn.datasets import load_sample_images

from tcam.frame import RgbFrame, write_ppm

OUT = Path(__file__).resolve().parents[1] / "tests" / "corpus"
W, H = 640, 480


def to_vga(img):
    img = np.asarray(img)
    if img.ndim == 2:
        img = np.repeat(img[..., None], 3, axis=2)
    img = img[..., :3].astype(np.float64)
    h, w = img.shape[:2]
    s = max(W / w, H / h)
    nh, nw = int(np.ceil(h * s)), int(np.ceil(w * s))
    big = resize(img, (nh, nw), order=3, anti_aliasing=True, preserve_range=True)
    y0, x0 = (nh - H) // 2, (nw - W) // 2
    return np.clip(np.rint(big[y0:y0 + H, x0:x0 + W]), 0, 255).astype(np.uint8)


def scenes():
    china, flower = load_sample_images().images
    return {
        "astronaut": skd.astronaut(),
        "camera": skd.camera(),
        "coffee": skd.coffee(),
        "chelsea": skd.chelsea(),
        "rocket": skd.rocket(),
        "brick": skd.brick(),
        "coins": skd.coins(),
        "china": china,
        "flower": flower,
        "immunohistochemistry": skd.immunohistochemistry(),
    }


def _capture(img, rng, blur=1.0, noise=1.0):
    """Blur of the mm-scale lens followed by sensor read noise."""
    img = img.astype(np.float64)
    img = np.stack([gaussian_filter(img[..., k], blur) for k in range(3)], axis=-1)
    img += rng.normal(0, noise, img.shape)
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


def person_pair(rng):
    """Reference room scene, and the same scene after a person walks in."""
    scene = to_vga(skd.coffee()).astype(np.float64)
    person = np.repeat(skd.camera()[40:460, 90:330, None], 3, axis=2)
    ph, pw = 288, 208
    person = resize(person.astype(np.float64), (ph, pw), order=3, anti_aliasing=True,
                    preserve_range=True)
    yy, xx = np.mgrid[0:ph, 0:pw]
    # head ellipse on top of a shoulders/torso ellipse
    head = ((xx - pw / 2) / (pw * 0.30)) ** 2 + ((yy - ph * 0.28) / (ph * 0.26)) ** 2 <= 1
    torso = ((xx - pw / 2) / (pw * 0.52)) ** 2 + ((yy - ph * 1.0) / (ph * 0.55)) ** 2 <= 1
    mask = (head | torso)[..., None]
    entered = scene.copy()
    y0, x0 = H - ph, 360
    region = entered[y0:y0 + ph, x0:x0 + pw]
    entered[y0:y0 + ph, x0:x0 + pw] = np.where(mask, person, region)
    return _capture(scene, rng), _capture(entered, rng)


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    for name, img in scenes().items():
        write_ppm(OUT / f"{name}.ppm.gz", RgbFrame(to_vga(img)))
    ref, cur = person_pair(np.random.default_rng(2024))
    write_ppm(OUT / "pair_reference.ppm.gz", RgbFrame(ref))
    write_ppm(OUT / "pair_current.ppm.gz", RgbFrame(cur))
    print(f"wrote corpus to {OUT}")


if __name__ == "__main__":
    main()
