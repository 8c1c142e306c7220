"""The encoding network mapping an input trait to a d-dimensional latent vector."""

from dataclasses import asdict, dataclass, field

import numpy as np

from . import autodiff as ad
from .exceptions import ContractError, DimensionError

ARCH_KINDS = ("conv_residual", "mlp")


@dataclass(frozen=True)
class BlockSpec:
    filters: int
    stride: int = 2
    residual: bool = True


@dataclass(frozen=True)
class EncoderConfig:
    """Architecture of the encoder.

    ``input_shape`` is ``(channels, height, width)``.  For ``arch_kind="mlp"``
    the input is flattened and ``blocks`` is ignored; for ``"conv_residual"``
    ``mlp_widths`` is ignored.
    """

    input_shape: tuple
    blocks: tuple = ()
    latent_dim: int = 3
    arch_kind: str = "conv_residual"
    mlp_widths: tuple = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "input_shape", tuple(int(s) for s in self.input_shape))
        object.__setattr__(
            self,
            "blocks",
            tuple(b if isinstance(b, BlockSpec) else BlockSpec(**b) for b in self.blocks),
        )
        object.__setattr__(self, "mlp_widths", tuple(int(w) for w in self.mlp_widths))
        self.validate()

    def validate(self):
        if len(self.input_shape) != 3 or min(self.input_shape) < 1:
            raise ContractError(f"input_shape must be 3 positive extents, got {self.input_shape}")
        if self.latent_dim < 1:
            raise ContractError(f"latent_dim must be >= 1, got {self.latent_dim}")
        if self.arch_kind not in ARCH_KINDS:
            raise ContractError(f"arch_kind must be one of {ARCH_KINDS}, got {self.arch_kind!r}")
        if self.arch_kind == "mlp":
            if any(w < 1 for w in self.mlp_widths):
                raise ContractError(f"mlp widths must be positive, got {self.mlp_widths}")
            return
        if not self.blocks:
            raise ContractError("conv_residual encoder needs at least one block")
        _, h, w = self.input_shape
        for i, block in enumerate(self.blocks):
            if block.filters < 1:
                raise ContractError(f"block {i}: filters must be >= 1, got {block.filters}")
            if block.stride not in (1, 2):
                raise ContractError(f"block {i}: stride must be 1 or 2, got {block.stride}")
            h, w = _strided(h, block.stride), _strided(w, block.stride)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["blocks"] = tuple(BlockSpec(**b) for b in d.get("blocks", ()))
        return cls(**d)


def _strided(n, stride):
    return (n - 1) // stride + 1


def desk_config(input_shape=(1, 16, 16), latent_dim=3):
    """Four stride-2 residual blocks with 8, 16, 32 and 64 filters."""
    return EncoderConfig(
        input_shape=input_shape,
        blocks=tuple(BlockSpec(f, 2, True) for f in (8, 16, 32, 64)),
        latent_dim=latent_dim,
    )


def _needs_projection(in_channels, block):
    return block.residual and (in_channels != block.filters or block.stride != 1)


def param_shapes(config):
    """Ordered ``{name: (shape, fan_in)}`` for every parameter of ``config``."""
    shapes = {}
    if config.arch_kind == "mlp":
        width = int(np.prod(config.input_shape))
        for i, out in enumerate(config.mlp_widths):
            shapes[f"dense{i}.weight"] = ((width, out), width)
            shapes[f"dense{i}.bias"] = ((out,), None)
            width = out
    else:
        width = config.input_shape[0]
        for i, block in enumerate(config.blocks):
            shapes[f"block{i}.conv.weight"] = ((block.filters, width, 3, 3), width * 9)
            shapes[f"block{i}.conv.bias"] = ((block.filters,), None)
            if _needs_projection(width, block):
                shapes[f"block{i}.proj.weight"] = ((block.filters, width, 1, 1), width)
            width = block.filters
    shapes["head.weight"] = ((width, config.latent_dim), width)
    shapes["head.bias"] = ((config.latent_dim,), None)
    return dict(sorted(shapes.items()))


def init_params(config, seed):
    """He-normal weights (variance 2/fan_in) and zero biases, fixed by ``seed``."""
    rng = np.random.default_rng(seed)
    params = {}
    for name, (shape, fan_in) in param_shapes(config).items():
        if fan_in is None:
            data = np.zeros(shape)
        else:
            data = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape)
        params[name] = ad.Tensor(data, requires_grad=True)
    return params


def count_params(config):
    return int(sum(np.prod(shape) for shape, _ in param_shapes(config).values()))


def as_batch(batch, config):
    """Coerce ``batch`` to a (b, c, h, w) tensor matching ``config.input_shape``."""
    t = batch if isinstance(batch, ad.Tensor) else ad.Tensor(batch)
    if t.ndim == 2 and int(np.prod(config.input_shape)) == t.shape[1]:
        t = ad.reshape(t, (t.shape[0],) + config.input_shape)
    if t.ndim != 4 or t.shape[1:] != config.input_shape:
        raise DimensionError(f"encoder expects batches of shape (b, {config.input_shape}), got {t.shape}")
    return t


def forward(params, config, batch):
    """Encode a batch; returns a (b, latent_dim) tensor."""
    x = as_batch(batch, config)
    b = x.shape[0]
    if config.arch_kind == "mlp":
        h = ad.reshape(x, (b, -1))
        for i in range(len(config.mlp_widths)):
            h = ad.relu(h @ params[f"dense{i}.weight"] + params[f"dense{i}.bias"])
    else:
        h = x
        for i, block in enumerate(config.blocks):
            pre = ad.conv2d(h, params[f"block{i}.conv.weight"], stride=block.stride)
            pre = pre + ad.reshape(params[f"block{i}.conv.bias"], (1, block.filters, 1, 1))
            if block.residual:
                proj = params.get(f"block{i}.proj.weight")
                skip = h if proj is None else ad.conv2d(h, proj, stride=block.stride, padding=0)
                pre = pre + skip
            h = ad.relu(pre)
        h = ad.mean(h, axis=(2, 3))
    return h @ params["head.weight"] + params["head.bias"]


def encode(params, config, images, chunk=256):
    """Gradient-free forward pass over an image array, in chunks."""
    images = np.asarray(images, dtype=np.float64)
    frozen = {k: ad.Tensor(v.data if isinstance(v, ad.Tensor) else v) for k, v in params.items()}
    out = [forward(frozen, config, images[i : i + chunk]).data for i in range(0, len(images), chunk)]
    if not out:
        return np.zeros((0, config.latent_dim))
    return np.concatenate(out, axis=0)
