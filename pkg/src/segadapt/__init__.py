"""Source-free adaptation of a segmentation network on a synthetic benchmark.

The package adapts a source-pretrained segmenter to an unlabelled target
domain by (1) self-training on confidence-filtered pseudo labels and
(2) training a label-conditioned generator that renders target-style images
from those pseudo labels, which then act as reliably-labelled training data.
"""

__version__ = "0.1.0"

from .config import ExperimentConfig, config_hash, load_config  # noqa: F401
from .labelops import (argmax_labels, filter_by_class_confidence,  # noqa: F401
                       one_hot)
from .losses import (LossWeights, feature_matching_loss, hinge_d_loss,  # noqa: F401
                     hinge_g_loss, kld_loss, perceptual_loss,
                     segmentation_loss, semantic_consistency_loss,
                     translation_loss)
from .nets import (MultiScalePatchDiscriminator, PerceptualExtractor,  # noqa: F401
                   SegNet, TranslationGenerator, freeze_partial, seg_forward,
                   translate)
from .synthdata import (DomainShiftParams, SceneSpec, apply_domain_shift,  # noqa: F401
                        build_dataset, generate_scene)
