"""Stage-2 reaction policy.

A causal transformer summarizes the visible history (own motion latents
plus the opponent's downsampled motion through a single-layer MLP, plus
optional sparse-control features) into one condition vector per latent
step; a single-hidden-layer diffusion head predicts the next motion
latent from it (x0 parameterization, deterministic DDIM at inference).
The policy is trained jointly with the online chunk decoder while the
stage-1 tokenizer stays frozen; the previous latent is teacher-forced,
the current latent entering the decoder is the head's own prediction.

Ablation switches: head="gpt" swaps the diffusion head for next-token
logits; motion_encoder="none" autoregresses over raw d-frame chunks;
use_root_info=False zeroes the decoder's root stream;
use_online_decoder=False decodes each latent with the stage-1 decoder at
inference time.
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import torch
from torch import nn
from tqdm import trange

from . import features
from .diffusion import DiffusionConfig, add_noise, alpha_bars, ddim_sample
from .features import FeatureStats
from .motion import MotionFrame
from .online_decoder import ChunkDecoder, DecoderInputs, DecoderOutputs, decode_chunk
from .tokenizer import CKPT_VERSION, MotionTokenizer, TokenizerConfig


@dataclass
class PolicyConfig:
    joint_count: int = 24
    downsample: int = 4
    window: int = 60
    latent_dim: int = 512
    model_dim: int = 512
    cond_layers: int = 4
    cond_heads: int = 8
    decoder_dim: int = 512
    decoder_layers: int = 2
    decoder_heads: int = 8
    diff_hidden: int = 1024
    time_embed_dim: int = 64
    head: str = "diffusion"  # "diffusion" | "gpt"
    motion_encoder: str = "vq"  # "vq" | "vae" | "none"
    use_root_info: bool = True
    use_online_decoder: bool = True
    sparse_control: bool = False
    timesteps: int = 1000
    ddim_steps: int = 50
    beta_frames: float = 1.0
    gamma_roots: float = 1.0
    temperature: float = 1.0
    top_k: int = 0
    batch_size: int = 32
    iterations: int = 40000
    lr: float = 1e-4
    stride: int = 4
    seed: int = 0

    @property
    def max_steps(self) -> int:
        return self.window // self.downsample

    @property
    def motion_dim(self) -> int:
        return features.motion_dim(self.joint_count)

    @property
    def opp_dim(self) -> int:
        return features.opponent_dim(self.joint_count)

    @property
    def sparse_chunk_dim(self) -> int:
        return features.SPARSE_DIM * self.downsample if self.sparse_control else 0

    @property
    def step_dim(self) -> int:
        """Per-step autoregressive unit: one latent or one raw chunk."""
        return self.latent_dim if self.motion_encoder != "none" \
            else self.motion_dim * self.downsample

    def diffusion_config(self) -> DiffusionConfig:
        return DiffusionConfig(timesteps=self.timesteps, ddim_steps=self.ddim_steps)


@dataclass
class PolicyInputs:
    """Aligned per-latent-step history streams (already normalized)."""

    agent_latents: np.ndarray  # (L, step_dim), standardized
    opp_features: np.ndarray  # (L, opp_dim), normalized
    sparse_features: np.ndarray | None = None  # (L, d*27), normalized

    def validate(self, max_steps: int) -> None:
        lengths = {self.agent_latents.shape[0], self.opp_features.shape[0]}
        if self.sparse_features is not None:
            lengths.add(self.sparse_features.shape[0])
        if len(lengths) != 1:
            raise ValueError(f"input streams disagree on length: {sorted(lengths)}")
        n = lengths.pop()
        if not 1 <= n <= max_steps:
            raise ValueError(f"need 1..{max_steps} steps, got {n}")


class CausalSelfAttention(nn.Module):
    def __init__(self, dim: int, heads: int):
        super().__init__()
        if dim % heads != 0:
            raise ValueError("model dim must divide heads")
        self.heads = heads
        self.qkv = nn.Linear(dim, 3 * dim)
        self.proj = nn.Linear(dim, dim)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        b, l, m = x.shape
        hd = m // self.heads
        q, k, v = self.qkv(x).chunk(3, dim=-1)
        q = q.view(b, l, self.heads, hd).transpose(1, 2)
        k = k.view(b, l, self.heads, hd).transpose(1, 2)
        v = v.view(b, l, self.heads, hd).transpose(1, 2)
        att = (q @ k.transpose(-2, -1)) / math.sqrt(hd)
        mask = torch.triu(torch.ones(l, l, dtype=torch.bool), diagonal=1)
        att = att.masked_fill(mask, float("-inf")).softmax(dim=-1)
        y = (att @ v).transpose(1, 2).reshape(b, l, m)
        return self.proj(y)


class TransformerBlock(nn.Module):
    def __init__(self, dim: int, heads: int):
        super().__init__()
        self.ln1 = nn.LayerNorm(dim)
        self.attn = CausalSelfAttention(dim, heads)
        self.ln2 = nn.LayerNorm(dim)
        self.mlp = nn.Sequential(nn.Linear(dim, 4 * dim), nn.GELU(), nn.Linear(4 * dim, dim))

    def forward(self, x):
        x = x + self.attn(self.ln1(x))
        return x + self.mlp(self.ln2(x))


class ConditionEncoder(nn.Module):
    """Causal summary of history: output at step l sees steps <= l only."""

    def __init__(self, step_dim: int, opp_dim: int, model_dim: int, heads: int,
                 layers: int, max_steps: int, sparse_dim: int = 0):
        super().__init__()
        self.max_steps = max_steps
        self.opp_mlp = nn.Linear(opp_dim, step_dim)
        self.sparse_mlp = nn.Linear(sparse_dim, step_dim) if sparse_dim else None
        streams = 3 if sparse_dim else 2
        self.in_proj = nn.Linear(step_dim * streams, model_dim)
        self.pos_emb = nn.Parameter(torch.zeros(max_steps, model_dim))
        nn.init.normal_(self.pos_emb, std=0.02)
        self.blocks = nn.ModuleList(TransformerBlock(model_dim, heads) for _ in range(layers))
        self.ln_f = nn.LayerNorm(model_dim)

    def forward(self, latents: torch.Tensor, opp: torch.Tensor,
                sparse: torch.Tensor | None = None) -> torch.Tensor:
        l = latents.shape[1]
        if l > self.max_steps:
            raise ValueError(f"history of {l} steps exceeds maximum {self.max_steps}")
        parts = [latents, self.opp_mlp(opp)]
        if self.sparse_mlp is not None:
            if sparse is None:
                sparse = torch.zeros(latents.shape[0], l, self.sparse_mlp.in_features)
            parts.append(self.sparse_mlp(sparse))
        x = self.in_proj(torch.cat(parts, dim=-1)) + self.pos_emb[:l]
        for blk in self.blocks:
            x = blk(x)
        return self.ln_f(x)


def sinusoidal_embedding(t: torch.Tensor, dim: int) -> torch.Tensor:
    half = dim // 2
    freqs = torch.exp(-math.log(10000.0) * torch.arange(half, dtype=torch.float32) / half)
    ang = t.float()[:, None] * freqs[None]
    return torch.cat([torch.sin(ang), torch.cos(ang)], dim=-1)


class DiffusionHead(nn.Module):
    """Single-hidden-layer MLP predicting the clean latent."""

    def __init__(self, step_dim: int, cond_dim: int, hidden: int, time_dim: int):
        super().__init__()
        self.time_dim = time_dim
        self.net = nn.Sequential(
            nn.Linear(step_dim + cond_dim + time_dim, hidden),
            nn.SiLU(),
            nn.Linear(hidden, step_dim),
        )

    def forward(self, x_t: torch.Tensor, t: torch.Tensor, cond: torch.Tensor) -> torch.Tensor:
        temb = sinusoidal_embedding(t, self.time_dim).to(x_t.dtype)
        return self.net(torch.cat([x_t, cond, temb], dim=-1))


class GPTHead(nn.Module):
    def __init__(self, cond_dim: int, codebook_size: int):
        super().__init__()
        self.logits = nn.Linear(cond_dim, codebook_size)

    def forward(self, cond: torch.Tensor) -> torch.Tensor:
        return self.logits(cond)


def sample_token(logits: np.ndarray, rng: np.random.Generator,
                 temperature: float = 1.0, top_k: int = 0) -> int:
    """Categorical sampling; temperature -> 0 degenerates to argmax."""
    logits = np.asarray(logits, dtype=np.float64)
    if temperature <= 1e-6:
        return int(np.argmax(logits))
    z = logits / temperature
    if top_k and top_k < z.shape[0]:
        cutoff = np.sort(z)[-top_k]
        z = np.where(z >= cutoff, z, -np.inf)
    z = z - z.max()
    p = np.exp(z)
    p /= p.sum()
    return int(rng.choice(p.shape[0], p=p))


class ReactionPolicy:
    """Bundle of trained modules + normalization stats; reentrant inference."""

    def __init__(self, config: PolicyConfig, tokenizer: MotionTokenizer | None,
                 cond_encoder: ConditionEncoder, decoder: ChunkDecoder | None,
                 diff_head: DiffusionHead | None = None, gpt_head: GPTHead | None = None,
                 motion_stats: FeatureStats | None = None,
                 opp_stats: FeatureStats | None = None,
                 root_stats: FeatureStats | None = None,
                 sparse_stats: FeatureStats | None = None,
                 latent_stats: FeatureStats | None = None):
        self.config = config
        self.tokenizer = tokenizer
        self.cond_encoder = cond_encoder
        self.decoder = decoder
        self.diff_head = diff_head
        self.gpt_head = gpt_head
        self.motion_stats = motion_stats or FeatureStats.identity(config.motion_dim)
        self.opp_stats = opp_stats or FeatureStats.identity(config.opp_dim)
        self.root_stats = root_stats or FeatureStats.identity(features.ROOT_INFO_DIM)
        self.sparse_stats = sparse_stats or FeatureStats.identity(features.SPARSE_DIM)
        self.latent_stats = latent_stats or FeatureStats.identity(config.step_dim)
        self._abar = alpha_bars(config.diffusion_config())
        self.eval()

    def eval(self) -> "ReactionPolicy":
        for m in (self.cond_encoder, self.decoder, self.diff_head, self.gpt_head,
                  self.tokenizer):
            if m is not None:
                m.eval()
        return self

    @property
    def joint_count(self) -> int:
        return self.config.joint_count

    @property
    def chunk(self) -> int:
        return self.config.downsample

    # ---- normalization helpers ----

    def normalize_opp(self, opp_raw: np.ndarray) -> np.ndarray:
        return self.opp_stats.normalize(opp_raw)

    def normalize_sparse_chunk(self, flat_chunk: np.ndarray) -> np.ndarray:
        d = self.config.downsample
        per = np.asarray(flat_chunk, dtype=np.float64).reshape(d, features.SPARSE_DIM)
        return self.sparse_stats.normalize(per).reshape(-1)

    def standardize_latents(self, z: np.ndarray) -> np.ndarray:
        return self.latent_stats.normalize(z)

    def destandardize_latents(self, z: np.ndarray) -> np.ndarray:
        return self.latent_stats.denormalize(z)

    # ---- history encoding ----

    @torch.no_grad()
    def encode_history_latents(self, frames: list[MotionFrame]) -> np.ndarray:
        """Motion frames -> standardized per-step vectors (bootstrap path)."""
        if self.config.motion_encoder == "none":
            d = self.config.downsample
            x = self.motion_stats.normalize(features.stack_motion_frames(frames))
            t = (x.shape[0] // d) * d
            return x[:t].reshape(-1, d * x.shape[1])
        seq = self.tokenizer.encode(frames)
        return self.standardize_latents(seq.latents)

    @torch.no_grad()
    def encode_condition(self, inputs: PolicyInputs) -> np.ndarray:
        """Per-step condition vectors (L, model_dim); causal in the step index."""
        inputs.validate(self.config.max_steps)
        lat = torch.as_tensor(inputs.agent_latents, dtype=torch.float32)[None]
        opp = torch.as_tensor(inputs.opp_features, dtype=torch.float32)[None]
        sp = None
        if inputs.sparse_features is not None:
            sp = torch.as_tensor(inputs.sparse_features, dtype=torch.float32)[None]
        out = self.cond_encoder(lat, opp, sp)
        return out[0].numpy()

    # ---- next-latent heads ----

    def diffusion_train_step(self, cond: torch.Tensor, next_latent: torch.Tensor,
                             generator: torch.Generator | None = None) -> torch.Tensor:
        """One training-loss evaluation: noise the target latent at a uniform
        random step and score the head's clean estimate (unsquared L2)."""
        t = torch.randint(1, self.config.timesteps + 1, (next_latent.shape[0],),
                          generator=generator)
        noise = torch.randn(next_latent.shape, generator=generator)
        x_t = add_noise(next_latent, t, noise, self._abar)
        x0_hat = self.diff_head(x_t, t, cond)
        return torch.linalg.vector_norm(next_latent - x0_hat, dim=-1).mean()

    @torch.no_grad()
    def sample_next_latent(self, cond: np.ndarray, rng: np.random.Generator,
                           ddim_steps: int | None = None) -> np.ndarray:
        """DDIM-sample the next standardized latent from one condition vector."""
        c = torch.as_tensor(np.asarray(cond), dtype=torch.float32)
        out = ddim_sample(self.diff_head, c, self.config.step_dim, rng,
                          self.config.diffusion_config(), steps=ddim_steps,
                          abar=self._abar)
        return out.numpy().astype(np.float64)

    @torch.no_grad()
    def gpt_logits(self, cond: np.ndarray) -> np.ndarray:
        c = torch.as_tensor(np.asarray(cond), dtype=torch.float32)[None]
        return self.gpt_head(c)[0].numpy().astype(np.float64)

    def gpt_head_predict(self, cond: np.ndarray, rng: np.random.Generator) -> int:
        return sample_token(self.gpt_logits(cond), rng,
                            self.config.temperature, self.config.top_k)

    def token_latent(self, index: int) -> np.ndarray:
        entry = self.tokenizer.codebook.entries[index].numpy().astype(np.float64)
        return self.standardize_latents(entry)

    def next_latent(self, cond: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        if self.config.head == "gpt":
            return self.token_latent(self.gpt_head_predict(cond, rng))
        return self.sample_next_latent(cond, rng)

    # ---- decoding ----

    def decode_chunk(self, inputs: DecoderInputs) -> DecoderOutputs:
        return decode_chunk(self, inputs)

    @torch.no_grad()
    def offline_decode_latent(self, latent_std: np.ndarray) -> list[MotionFrame]:
        """Stage-1 decoder applied to one latent (the no-online-decoder path)."""
        raw = self.destandardize_latents(np.asarray(latent_std))[None]
        return self.tokenizer.decode_offline(raw)

    def chunk_to_frames(self, chunk_std: np.ndarray) -> list[MotionFrame]:
        """Raw-chunk variant: a step vector simply unflattens to d frames."""
        d = self.config.downsample
        x = np.asarray(chunk_std, dtype=np.float64).reshape(d, self.config.motion_dim)
        raw = self.motion_stats.denormalize(x)
        return [features.unflatten_motion_frame(v, self.joint_count) for v in raw]

    # ---- persistence ----

    def save(self, path: str | Path, loss_curve: list | None = None) -> None:
        blob = {
            "version": CKPT_VERSION,
            "kind": "policy",
            "config": asdict(self.config),
            "cond_encoder": self.cond_encoder.state_dict(),
            "decoder": self.decoder.state_dict() if self.decoder else None,
            "diff_head": self.diff_head.state_dict() if self.diff_head else None,
            "gpt_head": self.gpt_head.state_dict() if self.gpt_head else None,
            "stats": {
                "motion": self.motion_stats.to_dict(),
                "opp": self.opp_stats.to_dict(),
                "root": self.root_stats.to_dict(),
                "sparse": self.sparse_stats.to_dict(),
                "latent": self.latent_stats.to_dict(),
            },
            "tokenizer": None,
            "loss_curve": loss_curve or [],
        }
        if self.tokenizer is not None:
            blob["tokenizer"] = {
                "config": asdict(self.tokenizer.config),
                "state": self.tokenizer.state_dict(),
                "stats": self.tokenizer.stats.to_dict(),
            }
        torch.save(blob, path)

    @staticmethod
    def load(path: str | Path) -> "ReactionPolicy":
        blob = torch.load(path, map_location="cpu", weights_only=False)
        if blob.get("version") != CKPT_VERSION or blob.get("kind") != "policy":
            raise ValueError(f"not a {CKPT_VERSION} policy checkpoint: {path}")
        config = PolicyConfig(**blob["config"])
        tokenizer = None
        if blob["tokenizer"] is not None:
            tokenizer = MotionTokenizer(TokenizerConfig(**blob["tokenizer"]["config"]),
                                        FeatureStats.from_dict(blob["tokenizer"]["stats"]))
            tokenizer.load_state_dict(blob["tokenizer"]["state"])
        policy = build_policy(config, tokenizer)
        policy.cond_encoder.load_state_dict(blob["cond_encoder"])
        if blob["decoder"] is not None:
            policy.decoder.load_state_dict(blob["decoder"])
        if blob["diff_head"] is not None:
            policy.diff_head.load_state_dict(blob["diff_head"])
        if blob["gpt_head"] is not None:
            policy.gpt_head.load_state_dict(blob["gpt_head"])
        st = blob["stats"]
        policy.motion_stats = FeatureStats.from_dict(st["motion"])
        policy.opp_stats = FeatureStats.from_dict(st["opp"])
        policy.root_stats = FeatureStats.from_dict(st["root"])
        policy.sparse_stats = FeatureStats.from_dict(st["sparse"])
        policy.latent_stats = FeatureStats.from_dict(st["latent"])
        return policy.eval()


def build_policy(config: PolicyConfig, tokenizer: MotionTokenizer | None) -> ReactionPolicy:
    """Fresh (untrained) policy with modules sized from the config."""
    if config.motion_encoder != "none" and tokenizer is None:
        raise ValueError("a tokenizer is required unless motion_encoder='none'")
    if config.head == "gpt":
        if config.motion_encoder != "vq":
            raise ValueError("the GPT head needs discrete indices (motion_encoder='vq')")
    cond = ConditionEncoder(config.step_dim, config.opp_dim, config.model_dim,
                            config.cond_heads, config.cond_layers, config.max_steps,
                            sparse_dim=config.sparse_chunk_dim)
    decoder = None
    if config.motion_encoder != "none":
        decoder = ChunkDecoder(config.motion_dim, config.step_dim, config.downsample,
                               config.decoder_dim, config.decoder_heads,
                               config.decoder_layers, sparse_dim=config.sparse_chunk_dim,
                               use_root_info=config.use_root_info)
    diff_head = gpt_head = None
    if config.head == "gpt":
        gpt_head = GPTHead(config.model_dim, tokenizer.config.codebook_size)
    else:
        diff_head = DiffusionHead(config.step_dim, config.model_dim,
                                  config.diff_hidden, config.time_embed_dim)
    return ReactionPolicy(config, tokenizer, cond, decoder,
                          diff_head=diff_head, gpt_head=gpt_head,
                          motion_stats=tokenizer.stats if tokenizer else None)


# ---------------------------------------------------------------------------
# stage-2 training


def _prepare_windows(streams, config: PolicyConfig, tokenizer: MotionTokenizer | None):
    """Stack per-window tensors for the joint training loop."""
    w, d = config.window, config.downsample
    motion, opp, roots, sparse = [], [], [], []
    for rs in streams:
        for s in range(0, rs.motion.shape[0] - w + 1, config.stride):
            motion.append(rs.motion[s:s + w])
            opp.append(rs.opponent[s:s + w])
            roots.append(rs.roots[s:s + w])
            sparse.append(rs.sparse[s:s + w])
    if not motion:
        raise ValueError("no training windows; clips shorter than the window size")
    motion = np.stack(motion)
    opp = np.stack(opp)[:, d - 1::d]  # last frame of each chunk
    roots = np.stack(roots)
    sparse = np.stack(sparse)

    if tokenizer is not None:
        motion_stats = tokenizer.stats
    else:
        motion_stats = FeatureStats.fit(motion)
    opp_stats = FeatureStats.fit(opp)
    root_stats = FeatureStats.fit(roots)
    sparse_stats = FeatureStats.fit(sparse)

    n = motion.shape[0]
    steps = w // d
    motion_n = torch.as_tensor(motion_stats.normalize(motion), dtype=torch.float32)
    opp_n = torch.as_tensor(opp_stats.normalize(opp), dtype=torch.float32)
    roots_n = torch.as_tensor(root_stats.normalize(roots), dtype=torch.float32)
    sparse_n = torch.as_tensor(
        sparse_stats.normalize(sparse), dtype=torch.float32).reshape(n, steps, -1)

    indices = None
    if config.motion_encoder == "none":
        latents = motion_n.reshape(n, steps, -1)
        latent_stats = FeatureStats.identity(config.step_dim)
    else:
        lat_list, idx_list = [], []
        with torch.no_grad():
            for s in range(0, n, 64):
                z = tokenizer.encode_latents(motion_n[s:s + 64])
                if tokenizer.is_vae:
                    lat_list.append(z)
                else:
                    flat = z.reshape(-1, z.shape[-1])
                    zq, idx = tokenizer.codebook.quantize(flat)
                    lat_list.append(zq.reshape(z.shape))
                    idx_list.append(idx.reshape(z.shape[:2]))
        latents = torch.cat(lat_list)
        latent_stats = FeatureStats.fit(latents.numpy())
        latents = torch.as_tensor(latent_stats.normalize(latents.numpy()), dtype=torch.float32)
        if idx_list:
            indices = torch.cat(idx_list)
    return {
        "motion": motion_n, "opp": opp_n, "roots": roots_n, "sparse": sparse_n,
        "latents": latents, "indices": indices,
        "stats": (motion_stats, opp_stats, root_stats, sparse_stats, latent_stats),
        "steps": steps,
    }


def train_stage2(streams, tokenizer: MotionTokenizer | None, config: PolicyConfig,
                 out_path: str | Path, log_every: int = 50, progress: bool = False) -> dict:
    """Joint training of the condition encoder, next-latent head and chunk
    decoder (tokenizer frozen). Writes checkpoint + loss curve CSV."""
    torch.manual_seed(config.seed)
    gen = torch.Generator().manual_seed(config.seed)
    rng = np.random.default_rng(config.seed)
    if tokenizer is not None:
        tokenizer.eval()
        for p in tokenizer.parameters():
            p.requires_grad_(False)

    prep = _prepare_windows(streams, config, tokenizer)
    policy = build_policy(config, tokenizer)
    (policy.motion_stats, policy.opp_stats, policy.root_stats,
     policy.sparse_stats, policy.latent_stats) = prep["stats"]

    modules = [policy.cond_encoder]
    if policy.decoder is not None:
        modules.append(policy.decoder)
    modules.append(policy.diff_head if config.head == "diffusion" else policy.gpt_head)
    for m in modules:
        m.train()
    params = [p for m in modules for p in m.parameters()]
    opt = torch.optim.AdamW(params, lr=config.lr)
    abar = alpha_bars(config.diffusion_config())

    n = prep["motion"].shape[0]
    steps = prep["steps"]
    d, fdim = config.downsample, config.motion_dim
    curve: list[tuple[int, float, float, float, float]] = []

    it_range = trange(config.iterations, desc="stage2", disable=not progress)
    for it in it_range:
        b_idx = torch.as_tensor(rng.integers(0, n, size=min(config.batch_size, n)),
                                dtype=torch.long)
        lat = prep["latents"][b_idx]  # (B, L, D)
        opp = prep["opp"][b_idx]
        sp = prep["sparse"][b_idx] if config.sparse_control else None
        cond = policy.cond_encoder(lat, opp, sp)  # (B, L, M)
        b = lat.shape[0]
        c = cond[:, :-1].reshape(-1, cond.shape[-1])
        x0 = lat[:, 1:].reshape(-1, lat.shape[-1])

        if config.head == "gpt":
            logits = policy.gpt_head(c)
            target = prep["indices"][b_idx][:, 1:].reshape(-1)
            loss_head = nn.functional.cross_entropy(logits, target)
            dec_latent_cur = x0
        else:
            t = torch.randint(1, config.timesteps + 1, (x0.shape[0],), generator=gen)
            noise = torch.randn(x0.shape, generator=gen)
            x_t = add_noise(x0, t, noise, abar)
            x0_hat = policy.diff_head(x_t, t, c)
            loss_head = torch.linalg.vector_norm(x0 - x0_hat, dim=-1).mean()
            dec_latent_cur = x0_hat

        loss_frames = torch.zeros(())
        loss_roots = torch.zeros(())
        if policy.decoder is not None:
            motion = prep["motion"][b_idx].reshape(b, steps, d, fdim)
            roots = prep["roots"][b_idx].reshape(b, steps, d, -1)
            hist_f = motion[:, :-1].reshape(-1, d, fdim)
            hist_r = roots[:, :-1].reshape(-1, d, roots.shape[-1])
            lat_prev = lat[:, :-1].reshape(-1, lat.shape[-1])
            sp_target = None
            if config.sparse_control:
                sp_target = sp[:, 1:].reshape(-1, sp.shape[-1])
            out_f, out_r = policy.decoder(hist_f, hist_r, lat_prev, dec_latent_cur,
                                          sparse=sp_target)
            loss_frames = torch.mean((out_f - motion[:, 1:].reshape(-1, d, fdim)) ** 2)
            loss_roots = torch.mean((out_r - roots[:, 1:].reshape(-1, d, roots.shape[-1])) ** 2)

        loss = loss_head + config.beta_frames * loss_frames + config.gamma_roots * loss_roots
        opt.zero_grad()
        loss.backward()
        opt.step()
        if it % log_every == 0 or it == config.iterations - 1:
            curve.append((it, float(loss.detach()), float(loss_head.detach()),
                          float(loss_frames.detach()), float(loss_roots.detach())))

    policy.eval()
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    policy.save(out_path, [c[1] for c in curve])
    with open(out_path.with_suffix(".loss.csv"), "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["iteration", "total", "head", "frames", "roots"])
        w.writerows(curve)
    return {
        "checkpoint": str(out_path),
        "loss_curve": curve,
        "final_loss": curve[-1][1],
        "policy": policy,
    }
