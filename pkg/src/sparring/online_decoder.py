"""Online motion decoder: latents to explicit frames in d-frame chunks.

A small transformer reads d history frames, d root-info vectors, the
previous and current latent (plus a sparse-control token when enabled)
and emits the next d frames and next d root-info vectors through learned
output queries. It is stateless given weights: outputs depend only on the
declared inputs, which is what makes streaming feedback possible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from . import features
from .diffusion import NumericError
from .motion import MotionFrame, RootInfo


@dataclass
class DecoderInputs:
    prev_frames: list[MotionFrame]  # exactly d
    prev_roots: list[RootInfo]  # exactly d
    latent_prev: np.ndarray  # (D,)
    latent_cur: np.ndarray  # (D,)
    sparse_chunk: np.ndarray | None = None  # (d * 27,) target-chunk signals


@dataclass
class DecoderOutputs:
    next_frames: list[MotionFrame]  # exactly d
    next_roots: list[RootInfo]  # exactly d


class ChunkDecoder(nn.Module):
    def __init__(self, motion_dim: int, latent_dim: int, chunk: int = 4,
                 model_dim: int = 512, heads: int = 8, layers: int = 2,
                 sparse_dim: int = 0, use_root_info: bool = True):
        super().__init__()
        self.chunk = chunk
        self.motion_dim = motion_dim
        self.use_root_info = use_root_info
        self.sparse_dim = sparse_dim
        self.frame_in = nn.Linear(motion_dim, model_dim)
        self.root_in = nn.Linear(features.ROOT_INFO_DIM, model_dim)
        self.latent_in = nn.Linear(latent_dim, model_dim)
        self.sparse_in = nn.Linear(sparse_dim, model_dim) if sparse_dim else None
        n_tokens = 2 * chunk + 2 + (1 if sparse_dim else 0) + 2 * chunk
        self.pos_emb = nn.Parameter(torch.zeros(n_tokens, model_dim))
        # token kinds: frame / root / latent / sparse / frame-query / root-query
        self.role_emb = nn.Parameter(torch.zeros(6, model_dim))
        self.out_queries = nn.Parameter(torch.zeros(2 * chunk, model_dim))
        nn.init.normal_(self.pos_emb, std=0.02)
        nn.init.normal_(self.role_emb, std=0.02)
        nn.init.normal_(self.out_queries, std=0.02)
        layer = nn.TransformerEncoderLayer(model_dim, heads, dim_feedforward=4 * model_dim,
                                           batch_first=True, norm_first=True, dropout=0.0)
        self.blocks = nn.TransformerEncoder(layer, layers, enable_nested_tensor=False)
        self.frame_out = nn.Linear(model_dim, motion_dim)
        self.root_out = nn.Linear(model_dim, features.ROOT_INFO_DIM)

    def forward(self, frames: torch.Tensor, roots: torch.Tensor,
                latent_prev: torch.Tensor, latent_cur: torch.Tensor,
                sparse: torch.Tensor | None = None) -> tuple[torch.Tensor, torch.Tensor]:
        """All inputs normalized. frames (B, d, F), roots (B, d, 5), latents
        (B, D), sparse (B, d*27). Returns ((B, d, F), (B, d, 5))."""
        b, d = frames.shape[0], self.chunk
        if not self.use_root_info:
            roots = torch.zeros_like(roots)
        toks = [
            self.frame_in(frames) + self.role_emb[0],
            self.root_in(roots) + self.role_emb[1],
            torch.stack([self.latent_in(latent_prev), self.latent_in(latent_cur)], dim=1)
            + self.role_emb[2],
        ]
        if self.sparse_in is not None:
            filler = sparse if sparse is not None else torch.zeros(b, self.sparse_dim)
            toks.append(self.sparse_in(filler)[:, None, :] + self.role_emb[3])
        queries = self.out_queries[None].expand(b, -1, -1)
        toks.append(queries[:, :d] + self.role_emb[4])
        toks.append(queries[:, d:] + self.role_emb[5])
        x = torch.cat(toks, dim=1) + self.pos_emb
        h = self.blocks(x)
        out_frames = self.frame_out(h[:, -2 * d:-d])
        out_roots = self.root_out(h[:, -d:])
        return out_frames, out_roots


def decode_chunk(policy, inputs: DecoderInputs) -> DecoderOutputs:
    """Object-level decode (see ReactionPolicy for the stats/modules bundle)."""
    d = policy.decoder.chunk
    if len(inputs.prev_frames) != d or len(inputs.prev_roots) != d:
        raise ValueError(f"need exactly {d} history frames and roots")
    f = policy.motion_stats.normalize(features.stack_motion_frames(inputs.prev_frames))
    r = policy.root_stats.normalize(features.stack_root_infos(inputs.prev_roots))
    args = [
        torch.as_tensor(f, dtype=torch.float32)[None],
        torch.as_tensor(r, dtype=torch.float32)[None],
        torch.as_tensor(inputs.latent_prev, dtype=torch.float32)[None],
        torch.as_tensor(inputs.latent_cur, dtype=torch.float32)[None],
    ]
    sparse = None
    if policy.decoder.sparse_dim:
        chunk = inputs.sparse_chunk
        if chunk is None:
            chunk = np.zeros(policy.decoder.sparse_dim)
        sparse = torch.as_tensor(policy.normalize_sparse_chunk(chunk),
                                 dtype=torch.float32)[None]
    with torch.no_grad():
        of, orr = policy.decoder(*args, sparse=sparse)
    if not (torch.isfinite(of).all() and torch.isfinite(orr).all()):
        raise NumericError("chunk decoder produced non-finite output")
    raw_f = policy.motion_stats.denormalize(of[0].numpy())
    raw_r = policy.root_stats.denormalize(orr[0].numpy())
    j = policy.joint_count
    return DecoderOutputs(
        next_frames=[features.unflatten_motion_frame(v, j) for v in raw_f],
        next_roots=[features.unflatten_root_info(v) for v in raw_r],
    )


def continuity_score(policy, streams, max_windows: int = 64) -> float:
    """RMS normalized-feature jump between the last history frame and the
    first decoded frame over teacher-forced test windows. Tracked as a
    regression metric: measure once after training, then freeze a bound."""
    d = policy.decoder.chunk
    w = policy.config.window
    jumps = []
    for rs in streams:
        for s in range(0, rs.motion.shape[0] - w + 1, w):
            if len(jumps) >= max_windows:
                break
            window_frames = rs.motion_frames[s:s + w]
            window_roots = rs.root_infos[s:s + w]
            latents = policy.encode_history_latents(window_frames)
            for l in range(min(2, latents.shape[0] - 1)):
                out = decode_chunk(policy, DecoderInputs(
                    prev_frames=window_frames[l * d:(l + 1) * d],
                    prev_roots=window_roots[l * d:(l + 1) * d],
                    latent_prev=latents[l],
                    latent_cur=latents[l + 1],
                ))
                last_hist = policy.motion_stats.normalize(
                    features.flatten_motion_frame(window_frames[(l + 1) * d - 1]))
                first_gen = policy.motion_stats.normalize(
                    features.flatten_motion_frame(out.next_frames[0]))
                jumps.append(np.mean((first_gen - last_hist) ** 2))
    return float(np.sqrt(np.mean(jumps))) if jumps else 0.0


def decode_stream(policy, initial_frames: list[MotionFrame], initial_roots: list[RootInfo],
                  initial_latent: np.ndarray, latent_stream: list[np.ndarray],
                  sparse_chunks: list[np.ndarray] | None = None) -> list[MotionFrame]:
    """Unroll decode_chunk over a latent stream, feeding outputs back as
    history. Returns seed frames + d frames per latent."""
    d = policy.decoder.chunk
    if len(initial_frames) != d:
        raise ValueError(f"need {d} seed frames")
    frames = list(initial_frames)
    roots = list(initial_roots)
    prev_latent = initial_latent
    for i, latent in enumerate(latent_stream):
        out = decode_chunk(policy, DecoderInputs(
            prev_frames=frames[-d:],
            prev_roots=roots[-d:],
            latent_prev=prev_latent,
            latent_cur=latent,
            sparse_chunk=None if sparse_chunks is None else sparse_chunks[i],
        ))
        frames.extend(out.next_frames)
        roots.extend(out.next_roots)
        prev_latent = latent
    return frames
