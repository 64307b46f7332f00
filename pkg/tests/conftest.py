import numpy as np
import pytest

from spikespell.events import EventStream


def random_stream(rng, width=64, height=48, n=500, t_max=40_000):
    t = np.sort(rng.integers(0, t_max, n))
    x = rng.integers(0, width, n)
    y = rng.integers(0, height, n)
    p = rng.choice((-1, 1), n)
    return EventStream.from_arrays(width, height, t, x, y, p)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def draw_disk(img, cx, cy, r, value):
    yy, xx = np.mgrid[: img.shape[0], : img.shape[1]]
    img[(xx - cx) ** 2 + (yy - cy) ** 2 <= r * r] = value


def draw_ring(img, cx, cy, r, value, thickness=1.0):
    yy, xx = np.mgrid[: img.shape[0], : img.shape[1]]
    d = np.sqrt((xx - cx) ** 2 + (yy - cy) ** 2)
    img[np.abs(d - r) <= thickness] = value


def shape_image(class_id: int, rng: np.random.Generator) -> np.ndarray:
    """28x28 grayscale stand-ins for the five desk-scale letter classes.

    Each class is a distinct high-contrast silhouette with jittered
    position, size and intensity so training sees real within-class
    variance.
    """
    img = np.zeros((28, 28), np.float64)
    cx = 14 + int(rng.integers(-3, 4))
    cy = 14 + int(rng.integers(-3, 4))
    val = float(rng.uniform(150, 255))
    if class_id == 0:  # filled disk
        draw_disk(img, cx, cy, 5 + int(rng.integers(0, 3)), val)
    elif class_id == 1:  # horizontal bar
        h = 2 + int(rng.integers(0, 2))
        img[max(cy - h, 0):cy + h, max(cx - 9, 0):cx + 9] = val
    elif class_id == 2:  # vertical bar
        w = 2 + int(rng.integers(0, 2))
        img[max(cy - 9, 0):cy + 9, max(cx - w, 0):cx + w] = val
    elif class_id == 3:  # hollow ring
        draw_ring(img, cx, cy, 7 + int(rng.integers(0, 2)), val, 1.6)
    elif class_id == 4:  # two corner blocks (diagonal)
        s = 5 + int(rng.integers(0, 2))
        img[max(cy - 9, 0):max(cy - 9 + s, 0), max(cx - 9, 0):max(cx - 9 + s, 0)] = val
        img[cy + 9 - s:cy + 9, cx + 9 - s:cx + 9] = val
    else:
        raise ValueError("only 5 synthetic classes")
    noise = rng.normal(0, 5, img.shape)
    return np.clip(img + noise * (img > 0), 0, 255).astype(np.uint8)
