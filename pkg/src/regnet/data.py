"""Datasets of labelled biometric images: synthesis, splitting, cropping and disk I/O.

On-disk layout of a dataset directory::

    manifest.txt      one line per sample: "<relative_file> <identity_id> <label>"
    <relative_file>   header line "P5-like: <w> <h> <c>" then c*h*w bytes, row-major
"""

import logging
import os
from dataclasses import dataclass, field

import numpy as np

from .exceptions import DatasetFormatError, DegenerateDatasetError, DimensionError

log = logging.getLogger(__name__)

SPLIT_TAGS = ("pool", "train", "calibration", "test")
MANIFEST = "manifest.txt"


@dataclass
class LabeledSample:
    image: np.ndarray  # (c, h, w), values in [0, 1]
    label: int  # 1 = authorized
    identity_id: int


@dataclass
class Dataset:
    samples: list
    split_tag: str = "pool"
    provenance: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.samples)

    @property
    def images(self):
        if not self.samples:
            return np.zeros((0, 1, 1, 1))
        return np.stack([s.image for s in self.samples])

    @property
    def labels(self):
        return np.array([s.label for s in self.samples], dtype=int)

    @property
    def identities(self):
        return np.array([s.identity_id for s in self.samples], dtype=int)

    def subset(self, indices, split_tag=None):
        return Dataset(
            [self.samples[i] for i in indices],
            split_tag or self.split_tag,
            dict(self.provenance),
        )

    def class_indices(self):
        labels = self.labels
        return np.nonzero(labels == 1)[0], np.nonzero(labels == 0)[0]


@dataclass(frozen=True)
class SynthParams:
    height: int = 16
    width: int = 16
    n_identities: int = 11
    samples_per_identity: int = 40
    shift_max: int = 0
    illumination: tuple = (0.7, 1.3)
    noise_sigma: float = 0.05
    seed: int = 7

    def __post_init__(self):
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be non-negative")
        lo, hi = self.illumination
        if lo > hi:
            raise ValueError(f"illumination range is inverted: {self.illumination}")
        if not self.shift_max < min(self.height, self.width) / 4:
            raise ValueError("shift_max must be below a quarter of the smaller image side")


def make_template(rng, height, width, n_waves=8, max_freq=4.0):
    """A smooth random field: a sum of random 2-D sinusoids rescaled to [0, 1]."""
    yy, xx = np.mgrid[0:height, 0:width]
    field_ = np.zeros((height, width))
    for _ in range(n_waves):
        fy, fx = rng.uniform(-max_freq, max_freq, size=2)  # cycles per image
        phase = rng.uniform(0.0, 2 * np.pi)
        amp = rng.uniform(0.5, 1.0)
        field_ += amp * np.sin(2 * np.pi * (fy * yy / height + fx * xx / width) + phase)
    lo, hi = field_.min(), field_.max()
    return (field_ - lo) / (hi - lo) if hi > lo else np.zeros_like(field_)


def shift_image(image, dy, dx):
    """Translate a 2-D image by integer offsets, filling uncovered pixels with 0."""
    out = np.zeros_like(image)
    h, w = image.shape
    src = image[max(0, -dy) : h - max(0, dy), max(0, -dx) : w - max(0, dx)]
    out[max(0, dy) : max(0, dy) + src.shape[0], max(0, dx) : max(0, dx) + src.shape[1]] = src
    return out


def identity_templates(params):
    rng = np.random.default_rng(params.seed)
    return np.stack([make_template(rng, params.height, params.width) for _ in range(params.n_identities)])


def generate_synthetic(params, authorized_id=0):
    """A pool of ``n_identities * samples_per_identity`` single-channel images.

    Each sample is its identity's template shifted, scaled by an illumination
    factor, corrupted by Gaussian noise and clipped to [0, 1].
    """
    rng = np.random.default_rng(params.seed)
    templates = [make_template(rng, params.height, params.width) for _ in range(params.n_identities)]
    lo, hi = params.illumination
    s = params.shift_max
    samples = []
    for ident, template in enumerate(templates):
        for _ in range(params.samples_per_identity):
            dy, dx = rng.integers(-s, s + 1, size=2)
            img = shift_image(template, int(dy), int(dx)) * rng.uniform(lo, hi)
            img = img + rng.normal(0.0, params.noise_sigma, size=img.shape)
            img = np.clip(img, 0.0, 1.0)
            samples.append(LabeledSample(img[None], int(ident == authorized_id), ident))
    provenance = {"kind": "synthetic", "seed": params.seed, "params": repr(params)}
    return Dataset(samples, "pool", provenance)


def make_enrollment(pool, authorized_id, holdout_unauth, calib_fraction=0.2, test_fraction=0.25, seed=0):
    """Split a pool into train / calibration / test sets for one enrolled identity.

    The authorized identity's samples are split between train and test.  The
    ``holdout_unauth`` impostor identities appear only in test; with no
    held-out identities, a ``test_fraction`` of every impostor's samples is
    used instead.  ``calib_fraction`` of each training class is moved into the
    calibration split.
    """
    rng = np.random.default_rng(seed)
    ids = pool.identities
    unique = np.unique(ids)
    if authorized_id not in unique:
        raise DegenerateDatasetError(f"authorized identity {authorized_id} is not in the pool")
    impostors = unique[unique != authorized_id]
    if not 0 <= holdout_unauth < len(impostors):
        raise DegenerateDatasetError(
            f"cannot hold out {holdout_unauth} of {len(impostors)} impostor identities"
        )
    relabeled = [
        LabeledSample(s.image, int(s.identity_id == authorized_id), s.identity_id) for s in pool.samples
    ]
    pool = Dataset(relabeled, pool.split_tag, pool.provenance)

    held = set(rng.permutation(impostors)[:holdout_unauth].tolist())
    auth_idx = rng.permutation(np.nonzero(ids == authorized_id)[0])
    n_auth_test = max(1, int(round(test_fraction * len(auth_idx))))
    test_idx = list(auth_idx[:n_auth_test])
    train_auth = list(auth_idx[n_auth_test:])
    train_unauth = []
    if holdout_unauth == 0:
        log.warning("no held-out impostors: test impostors were seen during training")
    for ident in impostors:
        idx = rng.permutation(np.nonzero(ids == ident)[0])
        if ident in held:
            test_idx += list(idx)
        elif holdout_unauth == 0:
            n_test = int(round(test_fraction * len(idx)))
            test_idx += list(idx[:n_test])
            train_unauth += list(idx[n_test:])
        else:
            train_unauth += list(idx)
    if len(train_auth) < 2 or len(train_unauth) < 2:
        raise DegenerateDatasetError("training split needs at least 2 samples of each class")

    calib_idx, train_idx = [], []
    for cls_idx in (train_auth, train_unauth):
        cls_idx = list(rng.permutation(cls_idx))
        n_cal = int(round(calib_fraction * len(cls_idx)))
        calib_idx += cls_idx[:n_cal]
        train_idx += cls_idx[n_cal:]
    return (
        pool.subset(sorted(train_idx), "train"),
        pool.subset(sorted(calib_idx), "calibration"),
        pool.subset(sorted(test_idx), "test"),
    )


def crop_factor(image_hw, crop_hw):
    """Number of distinct crop positions, i.e. the augmentation factor."""
    (h, w), (ch, cw) = image_hw, crop_hw
    if ch > h or cw > w:
        raise DimensionError(f"crop {crop_hw} larger than image {image_hw}")
    return (h - ch + 1) * (w - cw + 1)


def random_crop(image, crop, rng):
    """Crop a (c, h, w) image to ``crop = (h', w')`` at a uniform random offset."""
    _, h, w = image.shape
    ch, cw = crop
    crop_factor((h, w), crop)
    top = int(rng.integers(0, h - ch + 1))
    left = int(rng.integers(0, w - cw + 1))
    return image[:, top : top + ch, left : left + cw]


def center_crop(images, crop):
    """Centre crop of a (..., h, w) array; used at test time when training crops."""
    h, w = images.shape[-2:]
    ch, cw = crop
    crop_factor((h, w), crop)
    top, left = (h - ch) // 2, (w - cw) // 2
    return images[..., top : top + ch, left : left + cw]


# disk format


def write_image(path, image):
    image = np.asarray(image)
    c, h, w = image.shape
    raw = np.clip(np.rint(255.0 * image), 0, 255).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5-like: {w} {h} {c}\n".encode("ascii"))
        fh.write(raw.tobytes(order="C"))


def read_image(path):
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except FileNotFoundError:
        raise FileNotFoundError(f"image file not found: {path}") from None
    header, sep, body = blob.partition(b"\n")
    parts = header.decode("ascii", errors="replace").split()
    if not sep or len(parts) != 4 or parts[0] != "P5-like:":
        raise DatasetFormatError(f"{path}: bad image header {header[:40]!r}")
    try:
        w, h, c = (int(p) for p in parts[1:])
    except ValueError:
        raise DatasetFormatError(f"{path}: bad image header {header[:40]!r}") from None
    if len(body) != w * h * c:
        raise DatasetFormatError(f"{path}: expected {w * h * c} pixel bytes, found {len(body)}")
    return np.frombuffer(body, dtype=np.uint8).reshape(c, h, w) / 255.0


def save_dataset(dataset, path):
    os.makedirs(path, exist_ok=True)
    width = max(5, len(str(len(dataset))))
    lines = []
    for i, s in enumerate(dataset.samples):
        name = f"img_{i:0{width}d}.raw"
        write_image(os.path.join(path, name), s.image)
        lines.append(f"{name} {s.identity_id} {s.label}\n")
    with open(os.path.join(path, MANIFEST), "w", encoding="ascii", newline="\n") as fh:
        fh.writelines(lines)


def load_dataset(path, split_tag="pool"):
    manifest = os.path.join(path, MANIFEST)
    if not os.path.exists(manifest):
        raise FileNotFoundError(f"dataset manifest not found: {manifest}")
    samples, seen = [], set()
    with open(manifest, encoding="ascii") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if len(parts) != 3:
                raise DatasetFormatError(f"{manifest}:{lineno}: expected 3 fields, got {len(parts)}")
            rel, ident, label = parts
            try:
                ident, label = int(ident), int(label)
            except ValueError:
                raise DatasetFormatError(f"{manifest}:{lineno}: identity and label must be integers") from None
            if label not in (0, 1):
                raise DatasetFormatError(f"{manifest}:{lineno}: label must be 0 or 1, got {label}")
            if rel in seen:
                raise DatasetFormatError(f"{manifest}:{lineno}: duplicate file {rel}")
            seen.add(rel)
            samples.append(LabeledSample(read_image(os.path.join(path, rel)), label, ident))
    if not samples:
        raise DegenerateDatasetError(f"{manifest} lists no samples")
    return Dataset(samples, split_tag, {"kind": "external", "path": os.fspath(path)})

