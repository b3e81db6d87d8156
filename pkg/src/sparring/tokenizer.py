"""Stage-1 motion tokenizer.

Temporal-convolutional encoder/decoder with two stride-2 stages (total
downsample d=4) around either a 512-entry EMA-updated codebook (default)
or a plain VAE bottleneck (ablation variant; same surface, no indices).
Reconstruction is plain L2 over the flattened motion-frame features plus
a stop-gradient commitment term (weight 0.1); the codebook itself learns
through exponential moving averages rather than a loss term.
"""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import torch
from torch import nn
from tqdm import trange

from . import features
from .features import FeatureStats
from .motion import MotionFrame

CKPT_VERSION = "r2r-ckpt/1"


@dataclass
class TokenizerConfig:
    joint_count: int = 24
    downsample: int = 4
    latent_dim: int = 512
    codebook_size: int = 512
    channels: int = 512
    res_blocks: int = 2
    variant: str = "vq"  # "vq" | "vae"
    commitment_weight: float = 0.1
    kl_weight: float = 1e-3
    ema_decay: float = 0.99
    ema_epsilon: float = 1e-5
    reseed_threshold: float = 1.0
    window: int = 64
    stride: int = 8
    batch_size: int = 128
    iterations: int = 40000
    lr: float = 1e-4
    seed: int = 0

    @property
    def motion_dim(self) -> int:
        return features.motion_dim(self.joint_count)


@dataclass
class LatentSequence:
    """Latents at 1/d frame rate; indices absent for the VAE variant."""

    latents: np.ndarray  # (L, D)
    indices: np.ndarray | None
    downsample_factor: int


class Codebook(nn.Module):
    """K x D entries with EMA cluster statistics; ties break to the lowest index."""

    def __init__(self, size: int, dim: int, decay: float = 0.99, epsilon: float = 1e-5,
                 reseed_threshold: float = 1.0):
        super().__init__()
        self.size = size
        self.dim = dim
        self.decay = decay
        self.epsilon = epsilon
        self.reseed_threshold = reseed_threshold
        self.register_buffer("entries", torch.zeros(size, dim))
        self.register_buffer("ema_cluster_size", torch.ones(size))
        self.register_buffer("ema_embed_sum", torch.zeros(size, dim))
        self.register_buffer("initialized", torch.tensor(False))

    @torch.no_grad()
    def init_from_batch(self, z: torch.Tensor, generator: torch.Generator | None = None):
        n = z.shape[0]
        if n < self.size:
            reps = (self.size + n - 1) // n
            z = z.repeat(reps, 1)
            z = z + 0.01 * torch.randn(z.shape, generator=generator, dtype=z.dtype) / np.sqrt(self.dim)
        perm = torch.randperm(z.shape[0], generator=generator)
        self.entries.copy_(z[perm[: self.size]])
        self.ema_embed_sum.copy_(self.entries)
        self.ema_cluster_size.fill_(1.0)
        self.initialized.fill_(True)

    @torch.no_grad()
    def nearest(self, z: torch.Tensor, chunk: int = 256) -> torch.Tensor:
        """Lowest-index nearest entry per row of z (N, D)."""
        idx_out = torch.empty(z.shape[0], dtype=torch.long)
        arange = torch.arange(self.size)
        entries = self.entries.to(z.dtype)
        for s in range(0, z.shape[0], chunk):
            part = z[s:s + chunk]
            d2 = ((part[:, None, :] - entries[None, :, :]) ** 2).sum(-1)  # (n, K)
            mins = d2.min(dim=1, keepdim=True).values
            tie = torch.where(d2 == mins, arange, torch.full_like(arange, self.size))
            idx_out[s:s + chunk] = tie.min(dim=1).values
        return idx_out

    def quantize(self, z: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        idx = self.nearest(z)
        return self.entries.to(z.dtype)[idx], idx

    @torch.no_grad()
    def ema_update(self, z: torch.Tensor, idx: torch.Tensor,
                   generator: torch.Generator | None = None) -> None:
        onehot = torch.zeros(z.shape[0], self.size, dtype=z.dtype)
        onehot.scatter_(1, idx[:, None], 1.0)
        counts = onehot.sum(dim=0)
        sums = onehot.t() @ z
        self.ema_cluster_size.mul_(self.decay).add_((1 - self.decay) * counts)
        self.ema_embed_sum.mul_(self.decay).add_((1 - self.decay) * sums)
        n = self.ema_cluster_size.sum()
        smoothed = (self.ema_cluster_size + self.epsilon) / (n + self.size * self.epsilon) * n
        self.entries.copy_(self.ema_embed_sum / smoothed[:, None])
        dead = self.ema_cluster_size < self.reseed_threshold
        if bool(dead.any()) and z.shape[0] > 0:
            pick = torch.randint(0, z.shape[0], (int(dead.sum()),), generator=generator)
            self.entries[dead] = z[pick].to(self.entries.dtype)
            self.ema_embed_sum[dead] = self.entries[dead]
            self.ema_cluster_size[dead] = 1.0


def quantize(z: np.ndarray | torch.Tensor, codebook: Codebook) -> tuple[np.ndarray, np.ndarray]:
    """Nearest-entry lookup; returns (quantized, indices) as numpy."""
    zt = torch.as_tensor(np.asarray(z), dtype=codebook.entries.dtype) \
        if not isinstance(z, torch.Tensor) else z
    zq, idx = codebook.quantize(zt)
    return zq.detach().cpu().numpy(), idx.detach().cpu().numpy()


def ema_update(codebook: Codebook, batch_z: np.ndarray | torch.Tensor,
               assignments: np.ndarray | torch.Tensor,
               generator: torch.Generator | None = None) -> Codebook:
    zt = torch.as_tensor(np.asarray(batch_z), dtype=codebook.entries.dtype) \
        if not isinstance(batch_z, torch.Tensor) else batch_z
    it = torch.as_tensor(np.asarray(assignments), dtype=torch.long) \
        if not isinstance(assignments, torch.Tensor) else assignments
    codebook.ema_update(zt, it, generator)
    return codebook


class ResBlock(nn.Module):
    def __init__(self, channels: int):
        super().__init__()
        self.block = nn.Sequential(
            nn.ReLU(),
            nn.Conv1d(channels, channels, 3, padding=1),
            nn.ReLU(),
            nn.Conv1d(channels, channels, 1),
        )

    def forward(self, x):
        return x + self.block(x)


def _down_stage(channels: int, res_blocks: int) -> list[nn.Module]:
    mods: list[nn.Module] = [nn.Conv1d(channels, channels, 4, stride=2, padding=1)]
    mods += [ResBlock(channels) for _ in range(res_blocks)]
    return mods


def _up_stage(channels: int, res_blocks: int) -> list[nn.Module]:
    mods: list[nn.Module] = [nn.Upsample(scale_factor=2, mode="nearest"),
                             nn.Conv1d(channels, channels, 3, padding=1)]
    mods += [ResBlock(channels) for _ in range(res_blocks)]
    return mods


class MotionTokenizer(nn.Module):
    """Encoder/quantizer/decoder over flattened motion-frame features."""

    def __init__(self, config: TokenizerConfig, stats: FeatureStats | None = None):
        super().__init__()
        self.config = config
        self.stats = stats or FeatureStats.identity(config.motion_dim)
        c, d = config.channels, config.latent_dim
        out_dim = d * 2 if config.variant == "vae" else d
        self.encoder = nn.Sequential(
            nn.Conv1d(config.motion_dim, c, 3, padding=1), nn.ReLU(),
            *_down_stage(c, config.res_blocks),
            *_down_stage(c, config.res_blocks),
            nn.Conv1d(c, out_dim, 3, padding=1),
        )
        self.decoder = nn.Sequential(
            nn.Conv1d(d, c, 3, padding=1), nn.ReLU(),
            *_up_stage(c, config.res_blocks),
            *_up_stage(c, config.res_blocks),
            nn.Conv1d(c, config.motion_dim, 3, padding=1),
        )
        self.codebook = None
        if config.variant == "vq":
            self.codebook = Codebook(config.codebook_size, d, config.ema_decay,
                                     config.ema_epsilon, config.reseed_threshold)
        elif config.variant != "vae":
            raise ValueError(f"unknown tokenizer variant {config.variant!r}")

    @property
    def is_vae(self) -> bool:
        return self.config.variant == "vae"

    def encode_latents(self, x: torch.Tensor) -> torch.Tensor:
        """Normalized features (B, T, F) -> continuous latents (B, L, D);
        T is trimmed to a multiple of d. For the VAE variant this is the mean."""
        d = self.config.downsample
        if x.shape[1] < d:
            raise ValueError(f"need at least {d} frames, got {x.shape[1]}")
        t = (x.shape[1] // d) * d
        h = self.encoder(x[:, :t].transpose(1, 2)).transpose(1, 2)
        if self.is_vae:
            h = h[..., : self.config.latent_dim]
        return h

    def encode_vae(self, x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        d = self.config.downsample
        t = (x.shape[1] // d) * d
        h = self.encoder(x[:, :t].transpose(1, 2)).transpose(1, 2)
        return h[..., : self.config.latent_dim], h[..., self.config.latent_dim:]

    def decode_latents(self, z: torch.Tensor) -> torch.Tensor:
        """(B, L, D) -> normalized features (B, L*d, F)."""
        return self.decoder(z.transpose(1, 2)).transpose(1, 2)

    # ---- numpy-facing API over raw (unnormalized) motion features ----

    def _to_features(self, frames) -> np.ndarray:
        if isinstance(frames, np.ndarray):
            return frames
        return features.stack_motion_frames(frames)

    @torch.no_grad()
    def encode(self, frames: "list[MotionFrame] | np.ndarray") -> LatentSequence:
        """Raw motion frames -> (quantized) latent sequence."""
        x = self.stats.normalize(self._to_features(frames))
        xt = torch.as_tensor(x, dtype=torch.float32)[None]
        z = self.encode_latents(xt)[0]
        if self.is_vae:
            return LatentSequence(z.numpy().astype(np.float64), None, self.config.downsample)
        zq, idx = self.codebook.quantize(z)
        return LatentSequence(zq.numpy().astype(np.float64), idx.numpy(),
                              self.config.downsample)

    @torch.no_grad()
    def decode_offline(self, latents: np.ndarray) -> list[MotionFrame]:
        """Latents (L, D) -> L*d motion frames (the whole-sequence decoder)."""
        zt = torch.as_tensor(np.asarray(latents), dtype=torch.float32)[None]
        x = self.decode_latents(zt)[0].numpy()
        raw = self.stats.denormalize(x)
        return [features.unflatten_motion_frame(v, self.config.joint_count) for v in raw]

    def save(self, path: str | Path, loss_curve: list[float] | None = None) -> None:
        torch.save({
            "version": CKPT_VERSION,
            "kind": "tokenizer",
            "config": asdict(self.config),
            "state": self.state_dict(),
            "stats": self.stats.to_dict(),
            "loss_curve": loss_curve or [],
        }, path)

    @staticmethod
    def load(path: str | Path) -> "MotionTokenizer":
        blob = torch.load(path, map_location="cpu", weights_only=False)
        if blob.get("version") != CKPT_VERSION or blob.get("kind") != "tokenizer":
            raise ValueError(f"not a {CKPT_VERSION} tokenizer checkpoint: {path}")
        tok = MotionTokenizer(TokenizerConfig(**blob["config"]),
                              FeatureStats.from_dict(blob["stats"]))
        tok.load_state_dict(blob["state"])
        tok.eval()
        return tok


def _window_features(streams, window: int, stride: int) -> np.ndarray:
    chunks = []
    for rs in streams:
        for s in range(0, rs.motion.shape[0] - window + 1, stride):
            chunks.append(rs.motion[s:s + window])
    return np.stack(chunks)


def train_stage1(streams, config: TokenizerConfig, out_path: str | Path,
                 log_every: int = 50, progress: bool = False) -> dict:
    """Train the tokenizer on role streams; writes checkpoint + loss curve CSV.

    Returns a summary dict with the loss curve and codebook usage.
    """
    torch.manual_seed(config.seed)
    gen = torch.Generator().manual_seed(config.seed)
    rng = np.random.default_rng(config.seed)

    windows = _window_features(streams, config.window, config.stride)
    stats = FeatureStats.fit(windows)
    x_all = torch.as_tensor(
        (windows - stats.mean) / stats.std, dtype=torch.float32)

    tok = MotionTokenizer(config, stats)
    tok.train()
    opt = torch.optim.AdamW(tok.parameters(), lr=config.lr)

    curve: list[tuple[int, float, float, float]] = []
    used_codes: set[int] = set()
    it_range = trange(config.iterations, desc="stage1", disable=not progress)
    for it in it_range:
        idx = rng.integers(0, x_all.shape[0], size=min(config.batch_size, x_all.shape[0]))
        x = x_all[torch.as_tensor(idx, dtype=torch.long)]
        if tok.is_vae:
            mu, logvar = tok.encode_vae(x)
            z = mu + torch.exp(0.5 * logvar) * torch.randn(mu.shape, generator=gen)
            recon = tok.decode_latents(z)
            rec = torch.mean((recon - x) ** 2)
            kl = -0.5 * torch.mean(1 + logvar - mu ** 2 - logvar.exp())
            loss = rec + config.kl_weight * kl
            aux = float(kl.detach())
        else:
            z = tok.encode_latents(x)
            flat = z.reshape(-1, config.latent_dim)
            if not bool(tok.codebook.initialized):
                tok.codebook.init_from_batch(flat.detach(), gen)
            zq, code_idx = tok.codebook.quantize(flat.detach())
            tok.codebook.ema_update(flat.detach(), code_idx, gen)
            used_codes.update(code_idx.tolist())
            zq = zq.reshape(z.shape)
            commit = torch.mean((z - zq.detach()) ** 2)
            z_st = z + (zq - z).detach()
            recon = tok.decode_latents(z_st)
            rec = torch.mean((recon - x) ** 2)
            loss = rec + config.commitment_weight * commit
            aux = float(commit.detach())
        opt.zero_grad()
        loss.backward()
        opt.step()
        if it % log_every == 0 or it == config.iterations - 1:
            curve.append((it, float(loss.detach()), float(rec.detach()), aux))

    tok.eval()
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    tok.save(out_path, [c[1] for c in curve])
    with open(out_path.with_suffix(".loss.csv"), "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["iteration", "loss", "reconstruction", "aux"])
        w.writerows(curve)
    return {
        "checkpoint": str(out_path),
        "loss_curve": curve,
        "final_loss": curve[-1][1],
        "codebook_usage": len(used_codes) / config.codebook_size if config.variant == "vq" else None,
        "tokenizer": tok,
    }
