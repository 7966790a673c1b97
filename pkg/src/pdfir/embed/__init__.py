"""Object embedding schemes: CBOW, PV-DM and a small BERT."""

from .base import ObjectEmbedder, cloze_eval, load_embedder, majority_cloze_baseline, object_embedding_avg
from .bert import PRESETS, BertEmbedder, TinyBert
from .cbow import CbowEmbedder, CbowNet
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .pvdm import PvdmEmbedder, PvdmNet

EMBEDDERS = {"cbow": CbowEmbedder, "pvdm": PvdmEmbedder, "bert": BertEmbedder}

__all__ = [
    "ObjectEmbedder", "CbowEmbedder", "PvdmEmbedder", "BertEmbedder", "EMBEDDERS",
    "CbowNet", "PvdmNet", "TinyBert", "PRESETS",
    "object_embedding_avg", "cloze_eval", "majority_cloze_baseline", "load_embedder",
    "CheckpointError", "save_checkpoint", "load_checkpoint",
]
