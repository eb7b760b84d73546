"""caplabel: caption-to-synset labeling toolkit.

Turns noisy image captions into multi-label classification targets over a
WordNet noun vocabulary, analyzes how such vocabularies overlap with
downstream label sets, and builds classifier initializations that transfer
pretrained class embeddings to downstream tasks.
"""

__version__ = "0.1.0"

from .wordnet import (  # noqa: F401
    SynsetId,
    Synset,
    WordNetDb,
    load_wordnet,
    load_default_wordnet,
)
