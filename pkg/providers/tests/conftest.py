import json
from pathlib import Path

import pytest

MINI = Path(__file__).resolve().parents[2] / "tests" / "data" / "mini"

# words forced into multiple WordPiece pieces to exercise first-subword alignment
SPLIT_WORDS = {
    "deionized": ("deion", "##ized"),
    "centrifugation": ("centrifug", "##ation"),
    "Hydrochloric": ("Hydro", "##chloric"),
}

TAG_CLASSES = (
    "O", "B-Material", "I-Material", "B-Operation", "I-Operation", "B-Property", "I-Property",
)


@pytest.fixture(scope="session")
def mini_paths():
    return {
        "corpus": MINI / "corpus.txt",
        "manifest": MINI / "manifest.json",
        "configs": MINI / "configs",
        "pseudo": MINI / "golden" / "pseudo_labels.jsonl",
    }


@pytest.fixture(scope="session")
def splits_file(tmp_path_factory, mini_paths):
    """Pool splits produced through the selection toolkit's own CLI."""
    from staykate.cli import main as staykate_main

    out = tmp_path_factory.mktemp("splits")
    code = staykate_main(
        ["split", "--config", str(mini_paths["configs"] / "staykate.json"),
         "--report-dir", str(out)]
    )
    assert code == 0
    return out / "splits.json"


@pytest.fixture(scope="session")
def tiny_encoder(tmp_path_factory, mini_paths):
    """A small randomly initialized token-classification encoder whose
    WordPiece vocabulary covers the mini corpus, built fully offline."""
    import torch
    from tokenizers import Tokenizer
    from tokenizers.models import WordPiece
    from tokenizers.pre_tokenizers import WhitespaceSplit
    from tokenizers.processors import TemplateProcessing
    from transformers import BertConfig, BertForTokenClassification, PreTrainedTokenizerFast

    words = set()
    for line in mini_paths["corpus"].read_text(encoding="utf-8").splitlines():
        if line.strip():
            words.add(line.split("\t")[0])

    pieces = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"]
    for word in sorted(words):
        if word in SPLIT_WORDS:
            pieces.extend(SPLIT_WORDS[word])
        else:
            pieces.append(word)
    vocab = {piece: i for i, piece in enumerate(dict.fromkeys(pieces))}

    backend = Tokenizer(WordPiece(vocab=vocab, unk_token="[UNK]", max_input_chars_per_word=64))
    backend.pre_tokenizer = WhitespaceSplit()
    backend.post_processor = TemplateProcessing(
        single="[CLS] $A [SEP]",
        pair="[CLS] $A [SEP] $B [SEP]",
        special_tokens=[("[CLS]", vocab["[CLS]"]), ("[SEP]", vocab["[SEP]"])],
    )
    tokenizer = PreTrainedTokenizerFast(
        tokenizer_object=backend, unk_token="[UNK]", pad_token="[PAD]",
        cls_token="[CLS]", sep_token="[SEP]", mask_token="[MASK]",
    )

    torch.manual_seed(0)
    config = BertConfig(
        vocab_size=len(vocab),
        hidden_size=32,
        num_hidden_layers=2,
        num_attention_heads=2,
        intermediate_size=64,
        max_position_embeddings=128,
        num_labels=len(TAG_CLASSES),
        id2label=dict(enumerate(TAG_CLASSES)),
        label2id={label: i for i, label in enumerate(TAG_CLASSES)},
    )
    model = BertForTokenClassification(config)

    path = tmp_path_factory.mktemp("encoder")
    tokenizer.save_pretrained(path)
    model.save_pretrained(path)
    return path


@pytest.fixture
def provider_manifest_file(tmp_path, tiny_encoder):
    def write(**overrides):
        manifest = {
            "encoder": str(tiny_encoder),
            "labels": list(TAG_CLASSES),
            "alignment": "first-subword",
            "embedding_model": "stub-embed",
            "dimension": 16,
            "training": {
                "max_length": 128,
                "batch_size": 8,
                "learning_rate": 5e-4,
                "epochs": 3,
                "patience": 2,
                "seed": 0,
            },
        }
        manifest.update(overrides)
        path = tmp_path / "provider_manifest.json"
        path.write_text(json.dumps(manifest, indent=2), encoding="utf-8")
        return path

    return write
