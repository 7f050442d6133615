"""Real-backbone bridge into the finercam formats and wire protocol."""

from .backbones import HashTextEmbedder, TorchvisionBackbone, load_backbone
from .extract import ExtractionJob, embed_prompts, extract, read_labels
from .serve import BackboneServer

__version__ = "0.1.0"
