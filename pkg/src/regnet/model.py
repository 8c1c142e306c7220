"""The trained model artifact and its single-file binary format.

Layout (all integers little-endian uint32)::

    b"RGNT" | version | header length | JSON header (utf-8)
    | parameter count | per parameter: name length, name, rank, extents..., float32 values
"""

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from . import baseline, decision, encoder
from .data import center_crop
from .decision import DecisionThreshold
from .encoder import EncoderConfig
from .exceptions import DimensionError, ModelFormatError
from .objective import TargetSpec

MAGIC = b"RGNT"
FORMAT_VERSION = 1
SUPPORTED_VERSIONS = (1,)
OBJECTIVES = ("regnet_kl", "baseline_bce")


@dataclass
class ModelArtifact:
    target: TargetSpec
    encoder_config: EncoderConfig
    objective: str
    params: dict  # name -> float array
    threshold: DecisionThreshold
    fingerprint: dict = field(default_factory=dict)  # seed, steps, final_loss
    crop: tuple = None
    format_version: int = FORMAT_VERSION
    telemetry: list = field(default_factory=list, repr=False, compare=False)

    def expected_shapes(self):
        shapes = {k: s for k, (s, _) in encoder.param_shapes(self.encoder_config).items()}
        if self.objective == "baseline_bce":
            shapes[baseline.HEAD_WEIGHT] = (self.encoder_config.latent_dim, 1)
            shapes[baseline.HEAD_BIAS] = (1,)
        return shapes

    def validate(self):
        if self.objective not in OBJECTIVES:
            raise ModelFormatError(f"unknown objective {self.objective!r}")
        expected = self.expected_shapes()
        if set(expected) != set(self.params):
            missing = sorted(set(expected) - set(self.params))
            extra = sorted(set(self.params) - set(expected))
            raise ModelFormatError(f"parameter names do not match the encoder config (missing {missing}, extra {extra})")
        for name, shape in expected.items():
            if tuple(np.shape(self.params[name])) != tuple(shape):
                raise ModelFormatError(f"parameter {name} has shape {np.shape(self.params[name])}, expected {shape}")

    def prepare(self, images):
        """Check (and centre-crop, for crop-trained models) a batch of (c, h, w) images."""
        images = np.asarray(images, dtype=np.float64)
        if images.ndim == 3:
            images = images[None]
        if self.crop is not None and images.ndim == 4 and images.shape[1] == self.encoder_config.input_shape[0]:
            images = center_crop(images, self.crop)
        if images.ndim != 4 or images.shape[1:] != self.encoder_config.input_shape:
            raise DimensionError(
                f"model expects images of shape {self.encoder_config.input_shape}, got {images.shape[1:]}"
            )
        return images

    def latent(self, images):
        return encoder.encode(self.params, self.encoder_config, self.prepare(images))

    def scores(self, images):
        """Decision statistics (lower = more authorized-like) for a batch of images."""
        images = self.prepare(images)
        if self.objective == "baseline_bce":
            return baseline.complement_score(self.params, self.encoder_config, images)
        z = encoder.encode(self.params, self.encoder_config, images)
        return decision.statistic(z, self.target)

    def header(self):
        return {
            "crop": list(self.crop) if self.crop is not None else None,
            "encoder_config": self.encoder_config.to_dict(),
            "fingerprint": self.fingerprint,
            "objective": self.objective,
            "target": self.target.to_dict(),
            "threshold": self.threshold.to_dict(),
        }


def save_model(artifact, path):
    artifact.validate()
    header = json.dumps(artifact.header(), sort_keys=True).encode("utf-8")
    chunks = [MAGIC, struct.pack("<II", artifact.format_version, len(header)), header]
    chunks.append(struct.pack("<I", len(artifact.params)))
    for name in sorted(artifact.params):
        values = np.asarray(artifact.params[name], dtype="<f4")
        raw_name = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(raw_name)) + raw_name)
        chunks.append(struct.pack(f"<I{values.ndim}I", values.ndim, *values.shape))
        chunks.append(values.tobytes(order="C"))
    with open(path, "wb") as fh:
        fh.write(b"".join(chunks))


class _Reader:
    def __init__(self, blob):
        self.blob, self.pos = blob, 0

    def take(self, n):
        if self.pos + n > len(self.blob):
            raise ModelFormatError("model file is truncated")
        out = self.blob[self.pos : self.pos + n]
        self.pos += n
        return out

    def u32(self, count=1):
        vals = struct.unpack(f"<{count}I", self.take(4 * count))
        return vals if count != 1 else vals[0]


def load_model(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != MAGIC:
        raise ModelFormatError(f"{path}: not a model file")
    r = _Reader(blob)
    r.take(4)
    version = r.u32()
    if version not in SUPPORTED_VERSIONS:
        raise ModelFormatError(
            f"{path}: unsupported model format version {version} (supported versions: {list(SUPPORTED_VERSIONS)})"
        )
    try:
        header = json.loads(r.take(r.u32()).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ModelFormatError(f"{path}: corrupt header ({exc})") from None
    params = {}
    for _ in range(r.u32()):
        name = r.take(r.u32()).decode("utf-8")
        rank = r.u32()
        shape = tuple(r.u32(rank)) if rank != 1 else (r.u32(),)
        n = int(np.prod(shape)) if shape else 1
        params[name] = np.frombuffer(r.take(4 * n), dtype="<f4").reshape(shape).astype(np.float64)
    if r.pos != len(blob):
        raise ModelFormatError(f"{path}: trailing bytes after parameter records")
    try:
        artifact = ModelArtifact(
            target=TargetSpec.from_dict(header["target"]),
            encoder_config=EncoderConfig.from_dict(header["encoder_config"]),
            objective=header["objective"],
            params=params,
            threshold=DecisionThreshold.from_dict(header["threshold"]),
            fingerprint=header.get("fingerprint", {}),
            crop=tuple(header["crop"]) if header.get("crop") else None,
            format_version=version,
        )
    except (KeyError, TypeError) as exc:
        raise ModelFormatError(f"{path}: incomplete header ({exc})") from None
    artifact.validate()
    return artifact
