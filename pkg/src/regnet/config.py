"""Flat ``key = value`` run configuration files.

Lines starting with ``#`` (and anything after a ``#``) are comments.  There are
no sections; unknown keys are rejected.
"""

from .data import SynthParams
from .encoder import BlockSpec, EncoderConfig
from .exceptions import ConfigError
from .objective import TargetSpec
from .trainer import TrainConfig


def _bool(text):
    low = text.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _ints(text):
    return tuple(int(t) for t in text.replace(",", " ").split())


# key -> (parser, default); default None with no entry in REQUIRED means "optional, unset"
SCHEMA = {
    # synthetic data
    "data_seed": (int, None),
    "image_height": (int, 16),
    "image_width": (int, 16),
    "n_identities": (int, 11),
    "samples_per_identity": (int, 40),
    "shift_max": (int, 0),
    "illumination_lo": (float, 0.7),
    "illumination_hi": (float, 1.3),
    "noise_sigma": (float, 0.05),
    "authorized_id": (int, 0),
    # splits
    "holdout_unauth": (int, 3),
    "calib_fraction": (float, 0.2),
    "test_fraction": (float, 0.25),
    # encoder
    "arch": (str, "conv_residual"),
    "block_filters": (_ints, (8, 16, 32, 64)),
    "block_strides": (_ints, (2, 2, 2, 2)),
    "residual": (_bool, True),
    "mlp_widths": (_ints, ()),
    "latent_dim": (int, 3),
    # targets
    "mu_auth": (float, 0.0),
    "sigma_auth": (float, 1.0),
    "mu_unauth": (float, 40.0),
    "sigma_unauth": (float, 1.0),
    # training
    "objective": (str, "regnet_kl"),
    "seed": (int, None),
    "steps": (int, None),
    "batch_size": (int, 100),
    "learning_rate": (float, 1e-3),
    "adam_beta1": (float, 0.9),
    "adam_beta2": (float, 0.999),
    "adam_eps": (float, 1e-8),
    "mixup_alpha": (float, 0.2),
    "auth_fraction": (float, 0.5),
    "crop_height": (int, None),
    "crop_width": (int, None),
    "target_far": (float, 1e-2),
    # paths
    "test_out": (str, None),
}

REQUIRED = {
    "gen-data": ("data_seed",),
    "enroll": ("seed", "steps"),
}


def parse_config(text, source="<config>"):
    """Parse config text into a dict of typed values (defaults filled in)."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        if key not in SCHEMA:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        try:
            values[key] = SCHEMA[key][0](value)
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for {key!r}: {exc}") from None
    return RunConfig(values)


def load_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, str(path))


class RunConfig:
    """Typed view over a parsed config with builders for each component's settings."""

    def __init__(self, values):
        self.values = dict(values)

    def __getitem__(self, key):
        if key in self.values:
            return self.values[key]
        return SCHEMA[key][1]

    def require(self, subcommand):
        for key in REQUIRED.get(subcommand, ()):
            if key not in self.values:
                raise ConfigError(f"missing required key {key!r} for {subcommand}")

    def synth_params(self):
        try:
            return SynthParams(
                height=self["image_height"],
                width=self["image_width"],
                n_identities=self["n_identities"],
                samples_per_identity=self["samples_per_identity"],
                shift_max=self["shift_max"],
                illumination=(self["illumination_lo"], self["illumination_hi"]),
                noise_sigma=self["noise_sigma"],
                seed=self["data_seed"],
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def crop(self):
        h, w = self["crop_height"], self["crop_width"]
        if (h is None) != (w is None):
            raise ConfigError("crop_height and crop_width must be set together")
        return None if h is None else (h, w)

    def encoder_config(self, image_shape):
        c, h, w = image_shape
        crop = self.crop()
        if crop is not None:
            h, w = crop
        filters, strides = self["block_filters"], self["block_strides"]
        if len(filters) != len(strides):
            raise ConfigError("block_filters and block_strides must have the same length")
        try:
            return EncoderConfig(
                input_shape=(c, h, w),
                blocks=tuple(BlockSpec(f, s, self["residual"]) for f, s in zip(filters, strides)),
                latent_dim=self["latent_dim"],
                arch_kind=self["arch"],
                mlp_widths=self["mlp_widths"],
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def target(self):
        try:
            return TargetSpec(
                self["latent_dim"], self["mu_auth"], self["sigma_auth"], self["mu_unauth"], self["sigma_unauth"]
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def train_config(self):
        try:
            return TrainConfig(
                batch_size=self["batch_size"],
                steps=self["steps"],
                learning_rate=self["learning_rate"],
                adam_beta1=self["adam_beta1"],
                adam_beta2=self["adam_beta2"],
                adam_eps=self["adam_eps"],
                mixup_alpha=self["mixup_alpha"],
                auth_fraction=self["auth_fraction"],
                seed=self["seed"],
                crop_size=self.crop(),
                calib_fraction=self["calib_fraction"],
                target_far=self["target_far"],
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
