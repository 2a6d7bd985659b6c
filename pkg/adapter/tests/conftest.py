"""Test fixtures: tiny randomly initialized local models saved with
save_pretrained, loaded by the adapter exactly as hub ids would be (the
hub is not reachable from the test environment)."""

import json
import string
import subprocess
import sys

import pytest
import torch


def _byte_symbols():
    # GPT2-style printable remapping of the 256 byte values
    bs = (
        list(range(ord("!"), ord("~") + 1))
        + list(range(ord("\xa1"), ord("\xac") + 1))
        + list(range(ord("\xae"), ord("\xff") + 1))
    )
    cs = bs[:]
    n = 0
    for b in range(256):
        if b not in bs:
            bs.append(b)
            cs.append(256 + n)
            n += 1
    return dict(zip(bs, [chr(c) for c in cs]))


@pytest.fixture(scope="session")
def tiny_generator(tmp_path_factory):
    """Tiny seq2seq model over a byte-level vocab, constrained (through its
    own generation config) to emit alphanumerics and spaces."""
    from transformers import BartConfig, BartForConditionalGeneration, BartTokenizer

    out = tmp_path_factory.mktemp("models") / "tiny-gen"
    out.mkdir()
    byte_map = _byte_symbols()
    vocab = {"<s>": 0, "<pad>": 1, "</s>": 2, "<unk>": 3, "<mask>": 4}
    for symbol in byte_map.values():
        if symbol not in vocab:
            vocab[symbol] = len(vocab)
    (out / "vocab.json").write_text(json.dumps(vocab))
    (out / "merges.txt").write_text("#version: 0.2\n")
    tokenizer = BartTokenizer(str(out / "vocab.json"), str(out / "merges.txt"))

    config = BartConfig(
        vocab_size=len(vocab), d_model=32,
        encoder_layers=2, decoder_layers=2,
        encoder_attention_heads=2, decoder_attention_heads=2,
        encoder_ffn_dim=64, decoder_ffn_dim=64,
        max_position_embeddings=512,
        pad_token_id=1, bos_token_id=0, eos_token_id=2,
        decoder_start_token_id=2, forced_bos_token_id=0,
    )
    torch.manual_seed(2024)
    model = BartForConditionalGeneration(config)
    allowed = {byte_map[ord(c)] for c in string.ascii_lowercase + string.digits + " "}
    model.generation_config.bad_words_ids = [
        [i] for symbol, i in vocab.items() if symbol not in allowed and i > 4
    ]
    model.save_pretrained(out)
    tokenizer.save_pretrained(out)
    return str(out)


def _bert_pieces():
    pieces = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"]
    alphabet = string.ascii_lowercase + string.digits
    pieces += list(alphabet)
    pieces += ["##" + c for c in alphabet]
    return pieces


def _tiny_bert_config(vocab_size):
    from transformers import BertConfig

    return BertConfig(
        vocab_size=vocab_size, hidden_size=32, num_hidden_layers=2,
        num_attention_heads=2, intermediate_size=64, max_position_embeddings=512,
    )


@pytest.fixture(scope="session")
def tiny_cross_encoder(tmp_path_factory):
    from transformers import BertForSequenceClassification, BertTokenizer

    out = tmp_path_factory.mktemp("models") / "tiny-cross"
    out.mkdir()
    pieces = _bert_pieces()
    (out / "vocab.txt").write_text("\n".join(pieces) + "\n")
    tokenizer = BertTokenizer(str(out / "vocab.txt"))
    config = _tiny_bert_config(len(pieces))
    config.num_labels = 1
    torch.manual_seed(7)
    model = BertForSequenceClassification(config)
    model.save_pretrained(out)
    tokenizer.save_pretrained(out)
    return str(out)


@pytest.fixture(scope="session")
def tiny_bi_encoder(tmp_path_factory):
    from transformers import BertModel, BertTokenizer

    out = tmp_path_factory.mktemp("models") / "tiny-bi"
    out.mkdir()
    pieces = _bert_pieces()
    (out / "vocab.txt").write_text("\n".join(pieces) + "\n")
    tokenizer = BertTokenizer(str(out / "vocab.txt"))
    torch.manual_seed(8)
    model = BertModel(_tiny_bert_config(len(pieces)))
    model.save_pretrained(out)
    tokenizer.save_pretrained(out)
    return str(out)


@pytest.fixture(scope="session")
def fixture_corpus(tmp_path_factory):
    """100-passage corpus slice plus topics/qrels, produced by the pipeline's
    own demo-fixture command (consumed through files only)."""
    out = tmp_path_factory.mktemp("corpus")
    subprocess.run(
        [
            sys.executable, "-m", "d2qmm.cli", "demo-fixture",
            "--out", str(out), "--docs", "100", "--topics", "25", "--n", "4",
        ],
        check=True,
        capture_output=True,
    )
    return out
