from __future__ import annotations

import pytest
import torch
from tokenizers import Regex, Tokenizer, models, pre_tokenizers
from transformers import PreTrainedTokenizerFast, T5Config, T5ForConditionalGeneration

PIECES = [
    "<pad>", "</s>", "<unk>",
    "[A]", "[C]", "[O]", "[S]", "[SSEP]",
    "great", "bad", "neutral", "it",
    "I", "love", "the", "sushi", "badly!", "food", "staff", "was", "rude",
    "x", "quality", "service", "general", "slow", "warm", "bread",
]


def build_toy_checkpoint(directory, seed: int = 0) -> str:
    """Tiny randomly-initialized seq2seq checkpoint with a word-level tokenizer."""
    vocab = {piece: i for i, piece in enumerate(PIECES)}
    tok = Tokenizer(models.WordLevel(vocab, unk_token="<unk>"))
    tok.pre_tokenizer = pre_tokenizers.Sequence(
        [
            pre_tokenizers.WhitespaceSplit(),
            pre_tokenizers.Split(Regex(r"\[[A-Z]+\]"), behavior="isolated"),
        ]
    )
    fast = PreTrainedTokenizerFast(
        tokenizer_object=tok, unk_token="<unk>", eos_token="</s>", pad_token="<pad>"
    )
    torch.manual_seed(seed)
    config = T5Config(
        vocab_size=len(PIECES),
        d_model=32,
        d_kv=8,
        d_ff=64,
        num_layers=1,
        num_decoder_layers=1,
        num_heads=2,
        dropout_rate=0.0,
        decoder_start_token_id=0,
        eos_token_id=1,
        pad_token_id=0,
    )
    model = T5ForConditionalGeneration(config)
    model.save_pretrained(directory)
    fast.save_pretrained(directory)
    return str(directory)


@pytest.fixture(scope="session")
def toy_checkpoint(tmp_path_factory):
    return build_toy_checkpoint(tmp_path_factory.mktemp("toy-model"))
