"""Conditional variational autoencoder in plain numpy.

Encoder and decoder are single-hidden-layer tanh MLPs. The encoder sees the
data point concatenated with a one-hot label and outputs the mean and log
variance of a diagonal Gaussian posterior; the decoder sees a latent sample
concatenated with the same label and outputs the reconstruction mean. The
decoder variance is fixed at 1, so the reconstruction term is a scaled
squared error. Gradients are computed by hand.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import TrainingError

LATENT_DIM = 32

# order matters: it is the on-disk block order
PARAM_NAMES = (
    "enc_w1", "enc_b1",
    "enc_w_mu", "enc_b_mu",
    "enc_w_logvar", "enc_b_logvar",
    "dec_w1", "dec_b1",
    "dec_w_out", "dec_b_out",
)

_HEADER = struct.Struct("<4sIIII")
_MAGIC = b"NGVA"


@dataclass
class VaeModel:
    # weights are (fan_in, fan_out); activations are row vectors
    enc_w1: np.ndarray
    enc_b1: np.ndarray
    enc_w_mu: np.ndarray
    enc_b_mu: np.ndarray
    enc_w_logvar: np.ndarray
    enc_b_logvar: np.ndarray
    dec_w1: np.ndarray
    dec_b1: np.ndarray
    dec_w_out: np.ndarray
    dec_b_out: np.ndarray

    def __post_init__(self):
        d_in = self.enc_w1.shape[0]
        h = self.enc_w1.shape[1]
        z = self.enc_w_mu.shape[1]
        dh = self.dec_w1.shape[1]
        n_labels = self.dec_w1.shape[0] - z
        expected = {
            "enc_w1": (d_in, h), "enc_b1": (h,),
            "enc_w_mu": (h, z), "enc_b_mu": (z,),
            "enc_w_logvar": (h, z), "enc_b_logvar": (z,),
            "dec_w1": (z + n_labels, dh), "dec_b1": (dh,),
            "dec_w_out": (dh, d_in - n_labels), "dec_b_out": (d_in - n_labels,),
        }
        for name, shape in expected.items():
            if getattr(self, name).shape != shape:
                raise ValueError(f"{name} has shape {getattr(self, name).shape}, expected {shape}")

    @property
    def latent_dim(self) -> int:
        return self.enc_w_mu.shape[1]

    @property
    def data_dim(self) -> int:
        return self.dec_w_out.shape[1]

    @property
    def n_labels(self) -> int:
        return self.enc_w1.shape[0] - self.data_dim

    @property
    def hidden(self) -> int:
        return self.enc_w1.shape[1]

    def params(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in PARAM_NAMES}

    def copy(self) -> "VaeModel":
        return VaeModel(**{k: v.copy() for k, v in self.params().items()})


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    epochs: int = 500
    batch_size: int = 32
    kl_weight: float = 1.0

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")
        if self.kl_weight < 0:
            raise ValueError("kl_weight must be non-negative")


def init_vae(
    data_dim: int = 2,
    n_labels: int = 2,
    hidden: int = 64,
    rng: np.random.Generator | None = None,
    latent: int = LATENT_DIM,
    scale: float = 0.1,
) -> VaeModel:
    rng = rng if rng is not None else np.random.default_rng()

    def w(*shape):
        return rng.standard_normal(shape) * scale

    return VaeModel(
        enc_w1=w(data_dim + n_labels, hidden), enc_b1=np.zeros(hidden),
        enc_w_mu=w(hidden, latent), enc_b_mu=np.zeros(latent),
        enc_w_logvar=w(hidden, latent), enc_b_logvar=np.zeros(latent),
        dec_w1=w(latent + n_labels, hidden), dec_b1=np.zeros(hidden),
        dec_w_out=w(hidden, data_dim), dec_b_out=np.zeros(data_dim),
    )


def _check_inputs(model: VaeModel, x, labels):
    x = np.atleast_2d(np.asarray(x, dtype=float))
    labels = np.atleast_2d(np.asarray(labels, dtype=float))
    if x.shape[1] != model.data_dim:
        raise ValueError(f"data dimension {x.shape[1]} does not match model ({model.data_dim})")
    if labels.shape[1] != model.n_labels:
        raise ValueError(f"label dimension {labels.shape[1]} does not match model ({model.n_labels})")
    if labels.shape[0] != x.shape[0]:
        raise ValueError("one label row per data row is required")
    return x, labels


def encode(model: VaeModel, x, labels):
    a = np.hstack([x, labels])
    h = np.tanh(a @ model.enc_w1 + model.enc_b1)
    return h @ model.enc_w_mu + model.enc_b_mu, h @ model.enc_w_logvar + model.enc_b_logvar


def decode(model: VaeModel, z, labels):
    h = np.tanh(np.hstack([z, labels]) @ model.dec_w1 + model.dec_b1)
    return h @ model.dec_w_out + model.dec_b_out


def _forward(model: VaeModel, x, labels, eps, kl_weight):
    a = np.hstack([x, labels])
    h = np.tanh(a @ model.enc_w1 + model.enc_b1)
    mu = h @ model.enc_w_mu + model.enc_b_mu
    lv = h @ model.enc_w_logvar + model.enc_b_logvar
    std = np.exp(0.5 * lv)
    z = mu + std * eps
    zl = np.hstack([z, labels])
    h2 = np.tanh(zl @ model.dec_w1 + model.dec_b1)
    xhat = h2 @ model.dec_w_out + model.dec_b_out
    recon = -0.5 * np.sum((x - xhat) ** 2, axis=1)
    kl = 0.5 * np.sum(mu * mu + np.exp(lv) - lv - 1.0, axis=1)
    cache = (a, h, mu, lv, std, zl, h2, xhat)
    return recon - kl_weight * kl, recon, kl, cache


def elbo_terms(model: VaeModel, x, labels, eps, kl_weight: float = 1.0):
    """Per-row ``(elbo, recon, kl)`` for explicit reparameterization noise ``eps``."""
    x, labels = _check_inputs(model, x, labels)
    elbo, recon, kl, _ = _forward(model, x, labels, np.atleast_2d(eps), kl_weight)
    return elbo, recon, kl


def vae_elbo(model: VaeModel, x, label, rng: np.random.Generator, kl_weight: float = 1.0):
    """Single-sample ELBO of one point; returns ``(elbo, recon_term, kl_term)``.

    The reconstruction term drops the Gaussian normalizing constant, so a
    perfect reconstruction scores 0.
    """
    eps = rng.standard_normal((1, model.latent_dim))
    elbo, recon, kl = elbo_terms(model, x, label, eps, kl_weight)
    return float(elbo[0]), float(recon[0]), float(kl[0])


def elbo_gradients(model: VaeModel, x, labels, eps, kl_weight: float = 1.0):
    """Mean ELBO over the batch and its gradient for every parameter block."""
    x, labels = _check_inputs(model, x, labels)
    n = x.shape[0]
    elbo, _, _, (a, h, mu, lv, std, zl, h2, xhat) = _forward(model, x, labels, eps, kl_weight)
    z_dim = model.latent_dim

    d_xhat = (x - xhat) / n
    g = {"dec_w_out": h2.T @ d_xhat, "dec_b_out": d_xhat.sum(axis=0)}
    d_a2 = (d_xhat @ model.dec_w_out.T) * (1.0 - h2 * h2)
    g["dec_w1"] = zl.T @ d_a2
    g["dec_b1"] = d_a2.sum(axis=0)
    d_z = (d_a2 @ model.dec_w1.T)[:, :z_dim]

    d_mu = d_z - kl_weight * mu / n
    d_lv = d_z * eps * 0.5 * std - kl_weight * 0.5 * (np.exp(lv) - 1.0) / n
    g["enc_w_mu"] = h.T @ d_mu
    g["enc_b_mu"] = d_mu.sum(axis=0)
    g["enc_w_logvar"] = h.T @ d_lv
    g["enc_b_logvar"] = d_lv.sum(axis=0)
    d_a1 = (d_mu @ model.enc_w_mu.T + d_lv @ model.enc_w_logvar.T) * (1.0 - h * h)
    g["enc_w1"] = a.T @ d_a1
    g["enc_b1"] = d_a1.sum(axis=0)
    return float(elbo.mean()), g


def vae_train(model: VaeModel, x, labels, cfg: TrainConfig, rng: np.random.Generator):
    """Minibatch gradient ascent on the mean ELBO.

    Returns a trained copy of ``model`` and the per-epoch mean ELBO trace
    (averaged over the minibatches of each epoch).
    """
    x, labels = _check_inputs(model, x, labels)
    if x.shape[0] == 0:
        raise ValueError("training data is empty")
    model = model.copy()
    n = x.shape[0]
    trace = []
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            eps = rng.standard_normal((idx.size, model.latent_dim))
            value, grads = elbo_gradients(model, x[idx], labels[idx], eps, cfg.kl_weight)
            if not np.isfinite(value):
                raise TrainingError(epoch)
            total += value * idx.size
            for name, gval in grads.items():
                getattr(model, name)[...] += cfg.learning_rate * gval
        trace.append(total / n)
        if not all(np.all(np.isfinite(p)) for p in model.params().values()):
            raise TrainingError(epoch, "non-finite weights")
    return model, np.array(trace)


def vae_sample(model: VaeModel, label, n: int, rng: np.random.Generator) -> np.ndarray:
    """Decode ``n`` standard-normal latent draws under one label."""
    label = np.asarray(label, dtype=float).ravel()
    if label.size != model.n_labels:
        raise ValueError("label dimension does not match model")
    if n == 0:
        return np.empty((0, model.data_dim))
    z = rng.standard_normal((n, model.latent_dim))
    return decode(model, z, np.tile(label, (n, 1)))


def one_hot(idx, k: int) -> np.ndarray:
    idx = np.asarray(idx, dtype=int)
    out = np.zeros((idx.size, k))
    out[np.arange(idx.size), idx] = 1.0
    return out


def save_vae(model: VaeModel, path) -> None:
    """Little-endian binary: magic, (data_dim, n_labels, hidden, latent), then
    each parameter block row-major as float64 in ``PARAM_NAMES`` order."""
    path = Path(path)
    with path.open("wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, model.data_dim, model.n_labels, model.hidden, model.latent_dim))
        for name in PARAM_NAMES:
            fh.write(np.ascontiguousarray(getattr(model, name), dtype="<f8").tobytes(order="C"))


def load_vae(path) -> VaeModel:
    raw = Path(path).read_bytes()
    magic, data_dim, n_labels, hidden, latent = _HEADER.unpack_from(raw, 0)
    if magic != _MAGIC:
        raise ValueError(f"{path}: not a VAE model file")
    shapes = {
        "enc_w1": (data_dim + n_labels, hidden), "enc_b1": (hidden,),
        "enc_w_mu": (hidden, latent), "enc_b_mu": (latent,),
        "enc_w_logvar": (hidden, latent), "enc_b_logvar": (latent,),
        "dec_w1": (latent + n_labels, hidden), "dec_b1": (hidden,),
        "dec_w_out": (hidden, data_dim), "dec_b_out": (data_dim,),
    }
    offset = _HEADER.size
    blocks = {}
    for name in PARAM_NAMES:
        count = int(np.prod(shapes[name]))
        blocks[name] = np.frombuffer(raw, dtype="<f8", count=count, offset=offset).reshape(shapes[name]).astype(float)
        offset += 8 * count
    if offset != len(raw):
        raise ValueError(f"{path}: trailing bytes after parameter blocks")
    return VaeModel(**blocks)

