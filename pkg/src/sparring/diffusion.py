"""Cosine-schedule diffusion with a deterministic (eta=0) DDIM sampler.

The denoiser predicts the clean vector directly (x0 parameterization), so
one DDIM update is x_prev = sqrt(abar_prev) * x0_hat + sqrt(1-abar_prev)
* eps_hat with eps_hat implied by the current state. Running the sampler
with ddim_steps == timesteps reproduces the full schedule.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch


class NumericError(RuntimeError):
    """Non-finite value produced where finite math was required."""


@dataclass
class DiffusionConfig:
    timesteps: int = 1000
    ddim_steps: int = 50
    schedule: str = "cosine"
    cosine_s: float = 0.008
    prediction: str = "x0"

    def __post_init__(self):
        if self.ddim_steps > self.timesteps:
            raise ValueError("ddim_steps must be <= timesteps")
        if self.prediction != "x0":
            raise ValueError("only x0 prediction is supported")


def alpha_bars(config: DiffusionConfig) -> torch.Tensor:
    """Cumulative alpha for t = 0..T (index 0 is the clean state, == 1)."""
    t = config.timesteps
    if config.schedule != "cosine":
        raise ValueError(f"unknown schedule {config.schedule!r}")
    steps = torch.arange(t + 1, dtype=torch.float64) / t
    f = torch.cos((steps + config.cosine_s) / (1 + config.cosine_s) * np.pi / 2) ** 2
    ab = f / f[0]
    return torch.clamp(ab, 1e-8, 1.0)


def sample_timesteps(config: DiffusionConfig, steps: int | None = None) -> list[int]:
    """Evenly spaced subsequence of [1..T], descending; steps=T gives all."""
    s = steps or config.ddim_steps
    taus = np.linspace(1, config.timesteps, s)
    taus = sorted(set(int(round(v)) for v in taus), reverse=True)
    return taus


def add_noise(x0: torch.Tensor, t: torch.Tensor, noise: torch.Tensor,
              abar: torch.Tensor) -> torch.Tensor:
    a = abar[t].to(x0.dtype)
    while a.dim() < x0.dim():
        a = a[..., None]
    return torch.sqrt(a) * x0 + torch.sqrt(1 - a) * noise


def ddim_sample(denoise_fn, cond: torch.Tensor, dim: int, rng: np.random.Generator,
                config: DiffusionConfig, steps: int | None = None,
                abar: torch.Tensor | None = None) -> torch.Tensor:
    """Deterministic DDIM trajectory from Gaussian noise.

    denoise_fn(x_t (B, D), t (B,), cond (B, M)) -> x0 estimate (B, D).
    cond may be (M,) for a single sample. Raises NumericError (with the
    offending step) if the trajectory leaves finite range.
    """
    single = cond.dim() == 1
    c = cond[None] if single else cond
    batch = c.shape[0]
    ab = alpha_bars(config) if abar is None else abar
    taus = sample_timesteps(config, steps)

    x = torch.as_tensor(rng.standard_normal((batch, dim)), dtype=c.dtype)
    for i, t in enumerate(taus):
        tt = torch.full((batch,), t, dtype=torch.long)
        x0_hat = denoise_fn(x, tt, c)
        a_t = ab[t].to(x.dtype)
        eps_hat = (x - torch.sqrt(a_t) * x0_hat) / torch.sqrt(1 - a_t)
        t_prev = taus[i + 1] if i + 1 < len(taus) else 0
        a_prev = ab[t_prev].to(x.dtype)
        x = torch.sqrt(a_prev) * x0_hat + torch.sqrt(1 - a_prev) * eps_hat
        if not torch.isfinite(x).all():
            raise NumericError(f"non-finite diffusion state at step {i} (t={t})")
    return x[0] if single else x


def diffusion_loss(denoise_fn, x0: torch.Tensor, cond: torch.Tensor,
                   t: torch.Tensor, noise: torch.Tensor,
                   abar: torch.Tensor) -> torch.Tensor:
    """Mean unsquared L2 norm between the clean target and its estimate."""
    x_t = add_noise(x0, t, noise, abar)
    x0_hat = denoise_fn(x_t, t, cond)
    return torch.linalg.vector_norm(x0 - x0_hat, dim=-1).mean()
