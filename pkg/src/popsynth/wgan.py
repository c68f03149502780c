"""Masked WGAN-GP: networks, losses, regularizers, the training loop, synthetic
population generation, and checkpoint I/O.

The training loop alternates n_d critic updates (Wasserstein loss plus a
gradient penalty on interpolated points) with one generator update (adversarial
loss plus a boundary-distance and an average-distance regularizer). The one
departure from a plain WGAN-GP is the mask step: the generator's output is
multiplied elementwise by the binary missingness mask of the paired real batch
before the critic sees it, so generated rows exhibit the same zeroed blocks as
the real encoding of missing cells.
"""

from __future__ import annotations

import hashlib
import json
import struct
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Adam, ParameterSet, Tensor
from .data import CategoricalSchema, Dataset, decode, encode
from .errors import (
    CheckpointError,
    FormatError,
    NumericError,
    TrainingDivergedError,
    ValidationError,
)

CHECKPOINT_MAGIC = b"PSYNCKPT"
CHECKPOINT_VERSION = 1


@dataclass
class TrainingConfig:
    """Hyperparameters of one training run.

    The loss weights and topology defaults follow the reference setup:
    2 hidden layers of 128 units in both networks, 128-dimensional latent,
    learning rate 0.01, lambda_gp 0.025, lambda_bd 10, lambda_ad 1.
    """

    epochs: int = 100
    batch_size: int = 256
    critic_updates: int = 5
    latent_dim: int = 128
    hidden_layers: int = 2
    hidden_units: int = 128
    learning_rate: float = 0.01
    lambda_gp: float = 0.025
    lambda_bd: float = 10.0
    lambda_ad: float = 1.0
    seed: int = 0
    reference_size: int | None = None  # None = use all training rows
    leaky_slope: float = 0.2
    beta1: float = 0.0
    beta2: float = 0.9
    epsilon: float = 1e-8

    def __post_init__(self):
        for name in ("epochs", "batch_size", "critic_updates", "latent_dim",
                     "hidden_layers", "hidden_units"):
            if getattr(self, name) < 1:
                raise ValidationError(f"{name} must be >= 1")
        for name in ("lambda_gp", "lambda_bd", "lambda_ad"):
            if getattr(self, name) < 0:
                raise ValidationError(f"{name} must be >= 0")


@dataclass
class TrainingLog:
    """One record per completed epoch."""

    epochs: list[dict] = field(default_factory=list)

    def append(self, record: dict) -> None:
        self.epochs.append(record)

    def save_jsonl(self, path) -> None:
        with open(path, "w") as fh:
            for rec in self.epochs:
                fh.write(json.dumps(rec) + "\n")


class _MLP:
    """Fully connected stack shared by both networks."""

    def __init__(self, sizes: list[int], rng: np.random.Generator, slope: float):
        self.sizes = sizes
        self.slope = slope
        params = {}
        for i, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            params[f"w{i}"] = Tensor(
                rng.standard_normal((fan_in, fan_out)) * np.sqrt(2.0 / fan_in),
                name=f"w{i}",
            )
            params[f"b{i}"] = Tensor(np.zeros(fan_out), name=f"b{i}")
        self.params = ParameterSet(params)

    def _hidden(self, x: Tensor) -> Tensor:
        n_layers = len(self.sizes) - 1
        for i in range(n_layers - 1):
            x = ad.leaky_rectifier(
                ad.add(ad.matmul(x, self.params.params[f"w{i}"]),
                       self.params.params[f"b{i}"]),
                self.slope,
            )
        i = n_layers - 1
        return ad.add(ad.matmul(x, self.params.params[f"w{i}"]),
                      self.params.params[f"b{i}"])

    def _hidden_values(self, x: np.ndarray) -> np.ndarray:
        n_layers = len(self.sizes) - 1
        for i in range(n_layers - 1):
            x = x @ self.params.params[f"w{i}"].values + self.params.params[f"b{i}"].values
            x = np.where(x >= 0, x, self.slope * x)
        i = n_layers - 1
        return x @ self.params.params[f"w{i}"].values + self.params.params[f"b{i}"].values


class GeneratorNet(_MLP):
    """Latent vectors to per-attribute probability blocks."""

    def __init__(self, schema: CategoricalSchema, latent_dim: int,
                 hidden_units: int, hidden_layers: int,
                 rng: np.random.Generator, slope: float = 0.2):
        sizes = [latent_dim] + [hidden_units] * hidden_layers + [schema.total_width]
        super().__init__(sizes, rng, slope)
        self.schema = schema
        self.latent_dim = latent_dim
        self._spread = None

    def forward(self, z: Tensor) -> Tensor:
        return ad.block_softmax(self._hidden(z), self.schema.block_slices)

    def forward_values(self, z: np.ndarray) -> np.ndarray:
        logits = self._hidden_values(z)
        width = logits.shape[1]
        if self._spread is None:
            spread = np.zeros((width, width))
            for blk in self.schema.block_slices:
                spread[blk, blk] = 1.0
            self._spread = spread
        shift = np.empty_like(logits)
        for blk in self.schema.block_slices:
            shift[:, blk] = logits[:, blk].max(axis=1, keepdims=True)
        e = np.exp(logits - shift)
        return e * (1.0 / (e @ self._spread))


class CriticNet(_MLP):
    """Encoded rows to an unbounded realness score, one scalar per row."""

    def __init__(self, input_width: int, hidden_units: int, hidden_layers: int,
                 rng: np.random.Generator, slope: float = 0.2):
        sizes = [input_width] + [hidden_units] * hidden_layers + [1]
        super().__init__(sizes, rng, slope)
        self.input_width = input_width

    def forward(self, x: Tensor) -> Tensor:
        return self._hidden(x)

    def forward_values(self, x: np.ndarray) -> np.ndarray:
        return self._hidden_values(x)


def sample_latent(n: int, latent_dim: int, rng: np.random.Generator) -> Tensor:
    """n x latent_dim standard-normal draws from the given stream."""
    return Tensor(rng.standard_normal((n, latent_dim)))


def masked_generate(g: GeneratorNet, z: Tensor, mask: np.ndarray) -> Tensor:
    """Generator output with the batch's missingness mask applied elementwise."""
    out = g.forward(z)
    if mask.shape != out.shape:
        raise ValidationError("mask shape does not match generator output")
    return ad.mul(out, Tensor(mask))


def critic_loss(d: CriticNet, real: Tensor, fake: Tensor) -> Tensor:
    """Batch mean of -D(real) + D(fake)."""
    return ad.mean(ad.sub(d.forward(fake), d.forward(real)))


def generator_loss(d: CriticNet, fake: Tensor) -> Tensor:
    """Batch mean of -D(fake)."""
    return ad.neg(ad.mean(d.forward(fake)))


def gradient_penalty(d: CriticNet, real: Tensor, fake: Tensor,
                     rng: np.random.Generator) -> Tensor:
    """Mean squared deviation of the critic's input-gradient norm from 1.

    Evaluated at per-row uniform interpolations between real and fake rows.
    The returned scalar is differentiable with respect to the critic's
    parameters (second-order path through the input gradient).
    """
    if real.shape != fake.shape:
        raise ValidationError("real and fake batches must have the same shape")
    alpha = rng.random((real.shape[0], 1))
    mixed = Tensor(alpha * real.values + (1.0 - alpha) * fake.values)
    scores = d.forward(mixed)
    # rows are independent through the MLP, so the gradient of the row sum
    # recovers each row's own input gradient
    grad_x = ad.gradient_as_node(ad.sum_(scores), mixed)
    norms = ad.row_l2_norm(grad_x)
    return ad.mean(ad.square(ad.sub(norms, Tensor(1.0))))


def pairwise_dist(a: Tensor, b: Tensor) -> Tensor:
    """Row-to-row Euclidean distance matrix."""
    return ad.pairwise_dist(a, b)


def r_bd(fake: Tensor, reference: Tensor) -> Tensor:
    """Boundary distance: mean nearest-reference distance over fake rows."""
    return ad.mean(ad.row_min(ad.pairwise_dist(fake, reference)))


def r_ad(fake: Tensor, reference: Tensor) -> Tensor:
    """Average distance, negated: -(1/NM) * sum of all pairwise distances."""
    return ad.neg(ad.mean(ad.pairwise_dist(fake, reference)))


def train(data: Dataset, config: TrainingConfig, apply_mask: bool = True,
          epoch_callback=None) -> tuple[GeneratorNet, CriticNet, TrainingLog]:
    """Run the masked WGAN-GP training loop; fully deterministic given the seed.

    apply_mask=False skips the mask multiplication (control runs on complete
    data); with an all-ones mask the two paths are bit-identical.
    epoch_callback, if given, is called as epoch_callback(epoch, gen, critic)
    after each completed epoch.
    """
    if config.batch_size > data.n_rows:
        raise ValidationError("batch_size exceeds the number of training rows")
    x_all, y_all = encode(data)
    schema = data.schema

    g_rng = np.random.default_rng([config.seed, 0])
    d_rng = np.random.default_rng([config.seed, 1])
    t_rng = np.random.default_rng([config.seed, 2])
    ref_rng = np.random.default_rng([config.seed, 3])

    gen = GeneratorNet(schema, config.latent_dim, config.hidden_units,
                       config.hidden_layers, g_rng, config.leaky_slope)
    critic = CriticNet(schema.total_width, config.hidden_units,
                       config.hidden_layers, d_rng, config.leaky_slope)
    opt_g = Adam(config.learning_rate, config.beta1, config.beta2, config.epsilon)
    opt_d = Adam(config.learning_rate, config.beta1, config.beta2, config.epsilon)

    if config.reference_size is None or config.reference_size >= data.n_rows:
        reference = Tensor(x_all)
    else:
        idx = ref_rng.choice(data.n_rows, size=config.reference_size, replace=False)
        reference = Tensor(x_all[idx])

    log = TrainingLog()
    n = data.n_rows
    for epoch in range(config.epochs):
        tic = time.perf_counter()
        order = t_rng.permutation(n)
        sums = {"critic_loss": 0.0, "generator_loss": 0.0,
                "gradient_penalty": 0.0, "r_bd": 0.0, "r_ad": 0.0}
        n_batches = 0
        for start in range(0, n - config.batch_size + 1, config.batch_size):
            batch = order[start:start + config.batch_size]
            x_real = x_all[batch]
            y_batch = y_all[batch]
            m = len(batch)
            try:
                for _ in range(config.critic_updates):
                    z = t_rng.standard_normal((m, config.latent_dim))
                    fake_vals = gen.forward_values(z)
                    if apply_mask:
                        fake_vals = fake_vals * y_batch
                    real_t = Tensor(x_real)
                    fake_t = Tensor(fake_vals)
                    l_d = critic_loss(critic, real_t, fake_t)
                    l_gp = gradient_penalty(critic, real_t, fake_t, t_rng)
                    total_d = ad.add(l_d, ad.mul(Tensor(config.lambda_gp), l_gp))
                    critic.params.set_grads(
                        ad.grad(total_d, critic.params.tensors()))
                    opt_d.step(critic.params)
            except NumericError as exc:
                raise TrainingDivergedError(epoch, "critic", str(exc)) from exc
            try:
                z = Tensor(t_rng.standard_normal((m, config.latent_dim)))
                if apply_mask:
                    fake = masked_generate(gen, z, y_batch)
                else:
                    fake = gen.forward(z)
                l_g = generator_loss(critic, fake)
                dist = ad.pairwise_dist(fake, reference)  # shared by both terms
                l_bd = ad.mean(ad.row_min(dist))
                l_ad = ad.neg(ad.mean(dist))
                total_g = ad.add(
                    l_g,
                    ad.add(ad.mul(Tensor(config.lambda_bd), l_bd),
                           ad.mul(Tensor(config.lambda_ad), l_ad)),
                )
                gen.params.set_grads(ad.grad(total_g, gen.params.tensors()))
                opt_g.step(gen.params)
            except NumericError as exc:
                raise TrainingDivergedError(epoch, "generator", str(exc)) from exc

            sums["critic_loss"] += float(l_d.values)
            sums["generator_loss"] += float(l_g.values)
            sums["gradient_penalty"] += float(l_gp.values)
            sums["r_bd"] += float(l_bd.values)
            sums["r_ad"] += float(l_ad.values)
            n_batches += 1

        record = {"epoch": epoch}
        record.update({k: v / max(n_batches, 1) for k, v in sums.items()})
        record["wall_time_s"] = time.perf_counter() - tic
        log.append(record)
        if epoch_callback is not None:
            epoch_callback(epoch, gen, critic)
    return gen, critic, log


def generate_population(g: GeneratorNet, n: int, mode: str = "sample",
                        seed: int = 0, batch: int = 8192) -> Dataset:
    """Draw n synthetic rows from a trained generator (no masking)."""
    rng = np.random.default_rng([seed, 0])
    chunks = []
    remaining = n
    while remaining > 0:
        k = min(batch, remaining)
        z = rng.standard_normal((k, g.latent_dim))
        chunks.append(g.forward_values(z))
        remaining -= k
    if not chunks:
        encoded = np.zeros((0, g.schema.total_width))
    else:
        encoded = np.concatenate(chunks, axis=0)
    return decode(encoded, g.schema, mode=mode, seed=seed + 1)


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

def save_checkpoint(g: GeneratorNet, d: CriticNet, config: TrainingConfig,
                    schema: CategoricalSchema, path) -> None:
    """Single-file binary checkpoint: magic, version, JSON header, float64
    little-endian parameter payload, sha256 trailer."""
    tensors = []
    payload = bytearray()
    for prefix, net in (("g", g), ("d", d)):
        for name, p in net.params.params.items():
            tensors.append({"name": f"{prefix}.{name}", "shape": list(p.shape)})
            payload += p.values.astype("<f8").tobytes()
    header = {
        "format": "popsynth-checkpoint",
        "version": CHECKPOINT_VERSION,
        "schema": [[n, list(c)] for n, c in schema.attributes],
        "schema_digest": schema.digest(),
        "config": asdict(config),
        "tensors": tensors,
    }
    header_bytes = json.dumps(header, sort_keys=True).encode()
    body = (
        CHECKPOINT_MAGIC
        + struct.pack("<I", CHECKPOINT_VERSION)
        + struct.pack("<Q", len(header_bytes))
        + header_bytes
        + bytes(payload)
    )
    with open(path, "wb") as fh:
        fh.write(body + hashlib.sha256(body).digest())


def load_checkpoint(path, expected_schema: CategoricalSchema | None = None
                    ) -> tuple[GeneratorNet, CriticNet, TrainingConfig, CategoricalSchema]:
    """Load a checkpoint; verifies integrity and (optionally) schema identity."""
    blob = open(path, "rb").read()
    if len(blob) < len(CHECKPOINT_MAGIC) + 12 + 32 or not blob.startswith(CHECKPOINT_MAGIC):
        raise FormatError(f"{path}: not a popsynth checkpoint")
    body, trailer = blob[:-32], blob[-32:]
    if hashlib.sha256(body).digest() != trailer:
        raise FormatError(f"{path}: checksum mismatch (corrupt or truncated)")
    off = len(CHECKPOINT_MAGIC)
    (version,) = struct.unpack_from("<I", body, off)
    off += 4
    if version != CHECKPOINT_VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version {version}")
    (header_len,) = struct.unpack_from("<Q", body, off)
    off += 8
    try:
        header = json.loads(body[off:off + header_len].decode())
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise FormatError(f"{path}: bad checkpoint header") from exc
    off += header_len

    schema = CategoricalSchema(tuple((n, tuple(c)) for n, c in header["schema"]))
    if schema.digest() != header["schema_digest"]:
        raise FormatError(f"{path}: schema digest does not match embedded schema")
    if expected_schema is not None and expected_schema.digest() != header["schema_digest"]:
        raise CheckpointError(
            f"{path}: checkpoint schema digest {header['schema_digest'][:12]} "
            f"does not match the requested schema"
        )
    config = TrainingConfig(**header["config"])

    rng = np.random.default_rng(0)  # placeholder init, overwritten below
    gen = GeneratorNet(schema, config.latent_dim, config.hidden_units,
                       config.hidden_layers, rng, config.leaky_slope)
    critic = CriticNet(schema.total_width, config.hidden_units,
                       config.hidden_layers, rng, config.leaky_slope)
    nets = {"g": gen, "d": critic}
    for spec in header["tensors"]:
        prefix, name = spec["name"].split(".", 1)
        shape = tuple(spec["shape"])
        count = int(np.prod(shape)) if shape else 1
        nbytes = count * 8
        if off + nbytes > len(body):
            raise FormatError(f"{path}: truncated parameter payload")
        arr = np.frombuffer(body, dtype="<f8", count=count, offset=off).reshape(shape)
        off += nbytes
        target = nets[prefix].params.params.get(name)
        if target is None or target.shape != shape:
            raise FormatError(f"{path}: unexpected parameter record {spec['name']!r}")
        target.values = arr.astype(np.float64)
    if off != len(body):
        raise FormatError(f"{path}: trailing bytes after parameter payload")
    return gen, critic, config, schema
