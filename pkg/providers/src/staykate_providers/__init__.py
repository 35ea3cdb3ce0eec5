"""Input-file providers for the selection toolkit.

Two batch exporters, wired to the toolkit purely through its file formats:
token-classification probabilities from a fine-tuned encoder (first
sub-word alignment) and sentence embeddings from an embedding endpoint.
"""

__version__ = "0.1.0"

from .corpus_io import Corpus, CorpusSentence, read_corpus, read_pseudo_labels, read_splits
from .embeddings import embed_texts, export_embeddings
from .errors import ProviderError
from .manifest import ProviderManifest, TrainingSettings, load_provider_manifest
from .token_probs import export_token_probs, fine_tune

__all__ = [
    "Corpus",
    "CorpusSentence",
    "ProviderError",
    "ProviderManifest",
    "TrainingSettings",
    "embed_texts",
    "export_embeddings",
    "export_token_probs",
    "fine_tune",
    "load_provider_manifest",
    "read_corpus",
    "read_pseudo_labels",
    "read_splits",
]
