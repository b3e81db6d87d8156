"""Start the streaming service with a small throwaway sparse policy.

For protocol-level tests only: the model is untrained (random weights),
which exercises the full wire path without a training run. Prints
"PORT <n>" once the socket is listening, then serves until killed.
"""

import sys

from sparring.policy import PolicyConfig, build_policy
from sparring.serve import ServeConfig, StreamServer
from sparring.tokenizer import MotionTokenizer, TokenizerConfig


def main() -> int:
    tokenizer = MotionTokenizer(TokenizerConfig(
        latent_dim=16, codebook_size=16, channels=32, res_blocks=1))
    policy = build_policy(PolicyConfig(
        latent_dim=16, model_dim=32, cond_layers=2, cond_heads=2,
        decoder_dim=32, decoder_layers=1, decoder_heads=2, diff_hidden=64,
        time_embed_dim=16, sparse_control=True, ddim_steps=10), tokenizer)
    server = StreamServer(policy, config=ServeConfig(port=0)).start()
    print(f"PORT {server.port}", flush=True)
    server._thread.join()
    return 0


if __name__ == "__main__":
    sys.exit(main())
