"""Concept-level domain adaptation.

Stacked de-noising auto-encoders are trained per domain, their top-layer
codes binarized, and target units re-assigned to source units by a
genetic search over constrained binary mapping matrices.
"""

from .autoencoder import (
    DaeConfig,
    DaeLayer,
    DenoisingAutoencoder,
    SdaeModel,
    StackedDenoisingAutoencoder,
    binarize,
    encode,
    grid_search_layer,
    lr_schedule,
    reconstruction_error,
    train_dae,
    train_sdae,
)
from .dataio import Dataset, SplitSpec
from .evalkit import (
    EvalReport,
    ModelCache,
    SdaeSettings,
    SubspaceAlignment,
    concat_adapt,
    conceptual_adapt,
    joint_baseline,
    no_adapt_baseline,
    subspace_alignment_baseline,
)
from .gasearch import (
    ConceptMappingSearch,
    FitnessContext,
    GaConfig,
    SearchResult,
    evolve,
    exhaustive_search,
    fitness,
)
from .mapping import apply, block_concat, from_genome, to_genome
from .neighbors import L1NearestNeighborClassifier, knn_classify, knn_train

__version__ = "0.1.0"
