import numpy as np
import pytest

from sparring.data import encode_interaction
from sparring.policy import PolicyConfig, train_stage2
from sparring.synth import synth_duel
from sparring.tokenizer import TokenizerConfig, train_stage1

TOY_TOKENIZER = dict(latent_dim=32, codebook_size=64, channels=64, res_blocks=1,
                     window=64, stride=8, batch_size=16, iterations=600, lr=3e-4, seed=0)
TOY_POLICY = dict(latent_dim=32, model_dim=64, cond_layers=2, cond_heads=4,
                  decoder_dim=64, decoder_layers=2, decoder_heads=4, diff_hidden=128,
                  time_embed_dim=32, batch_size=16, iterations=900, lr=3e-4,
                  stride=4, seed=0)


@pytest.fixture(scope="session")
def toy_interactions():
    return [synth_duel(seed=s, duration_s=16.0) for s in range(7)]


@pytest.fixture(scope="session")
def train_streams(toy_interactions):
    streams = []
    for inter in toy_interactions[:5]:
        streams.extend(encode_interaction(inter))
    return streams


@pytest.fixture(scope="session")
def test_interactions(toy_interactions):
    return toy_interactions[5:]


@pytest.fixture(scope="session")
def test_interaction(toy_interactions):
    return toy_interactions[5]


@pytest.fixture(scope="session")
def toy_tokenizer(train_streams, tmp_path_factory):
    out = tmp_path_factory.mktemp("ckpts") / "tokenizer.pt"
    result = train_stage1(train_streams, TokenizerConfig(**TOY_TOKENIZER), out)
    return result["tokenizer"]


@pytest.fixture(scope="session")
def toy_policy(train_streams, toy_tokenizer, tmp_path_factory):
    out = tmp_path_factory.mktemp("ckpts") / "policy.pt"
    result = train_stage2(train_streams, toy_tokenizer, PolicyConfig(**TOY_POLICY), out)
    return result["policy"]


@pytest.fixture(scope="session")
def toy_sparse_policy(train_streams, toy_tokenizer, tmp_path_factory):
    out = tmp_path_factory.mktemp("ckpts") / "policy_sparse.pt"
    cfg = PolicyConfig(**{**TOY_POLICY, "sparse_control": True, "iterations": 600})
    result = train_stage2(train_streams, toy_tokenizer, cfg, out)
    return result["policy"]


@pytest.fixture()
def rng():
    return np.random.default_rng(0)
