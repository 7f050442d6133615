"""Comparative class activation maps.

Explains a classifier's logit *difference* between a target class and
visually similar reference classes, so the saliency map concentrates on what
actually separates them, plus a quantitative evaluation harness (deletion
curves, relative confidence drop, energy pointing game) and an explorer
service.
"""

from .backend import BackendDescriptor, ExternalBackend, LinearBackend, ToyBackend, load_backend
from .cam import (
    ExplanationTarget,
    FeatureStack,
    SaliencyMap,
    activate,
    aggregate,
    compose_raw,
    explain,
    finer_scorecam_weights,
    finer_weights,
    gradcam_weights_backend,
    gradcam_weights_final_layer,
    layercam_map,
    normalize,
    scorecam_weights,
    upsample_bilinear,
)
from .head import (
    ClassifierHead,
    EmbeddingSet,
    TrainConfig,
    load_head,
    predict_logits,
    rank_reference_classes,
    save_head,
    softmax,
    train_head,
    weight_similarity_profile,
)
from .metrics import (
    AttributeTable,
    DeletionCurve,
    EvalReport,
    auc,
    deletion_curve,
    evaluate_manifest,
    mask_top_pixels,
    pointing_game,
    relative_drop,
    saliency_overlap,
    select_discriminative_attributes,
)
from .synth import SynthSpec, generate_benchmark
from .tensor_store import (
    DatasetManifest,
    ManifestError,
    SampleRecord,
    TensorFormatError,
    load_manifest,
    read_tensor,
    write_tensor,
)

__version__ = "0.1.0"
