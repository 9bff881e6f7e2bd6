"""Shuffle-model differentially private federated learning.

A numpy library simulating the encode-shuffle-analyze pipeline: local
randomizers with blanket distributions, dimension selection (uniform and
top-k with index privacy), a padding shuffler, the de-biasing analyzer, a
closed-form privacy accountant, and a desk-scale federated-learning
harness with non-private, curator-model, and local-model baselines.
"""

from .accountant import (
    AmplificationReport,
    compose_advanced,
    compose_sequential,
    double_dim_bound,
    double_vector_bound,
    protocol_report,
    shuffle_amplify_krr,
    simple_vector_bound,
    subsample_amplify,
)
from .analyzer import RoundEstimate, aggregate, update_model
from .core import (
    AuthorizationError,
    ConfigurationError,
    ContractViolationError,
    EncodedMessage,
    GlobalModel,
    InvalidInputError,
    PrivacyParams,
    ProtocolConfig,
    ProtocolViolationError,
    clip_linf,
    denormalize,
    new_keypair,
    normalize,
    seal,
    unseal,
)
from .datasets import Dataset, load_mnist, synthetic_dataset
from .harness import (
    ExperimentResult,
    TrainSettings,
    encode_round,
    run_baseline,
    run_protocol,
    run_protocol_round,
)
from .randomizers import (
    BlanketSpec,
    DegenerateEstimatorError,
    debias_mean,
    gaussian_noise,
    gaussian_sigma,
    krr_blanket,
    krr_gamma,
    krr_randomize,
    laplace_blanket,
    laplace_gamma,
    laplace_randomize,
    make_randomizer,
)
from .selection import (
    SelectionResult,
    max_index_privacy,
    min_valid_l,
    random_subsample,
    topk_select,
    valid_l_range,
)
from .shuffler import ShuffledBatch, pad_and_shuffle, shuffle_simple

__version__ = "0.1.0"
