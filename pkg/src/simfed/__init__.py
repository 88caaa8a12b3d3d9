"""Privacy-preserving multi-party learning with an encrypted weight-similarity
reliability check.

Participants train locally, upload Paillier-encrypted weights, and a server
filters unreliable parties by a blinded cosine similarity score before
homomorphically averaging the global model.
"""

from .config import (
    PlateauRule,
    Seeds,
    ThresholdSchedule,
    TrainingRunConfig,
    default_config,
    derive_seed,
    load_config,
)
from .datasets import (
    Dataset,
    NoiseSpec,
    PartitionPlan,
    Shard,
    load_idx,
    normalize_center,
    partition,
    synth_classification,
    synth_noise,
)
from .encoding import FixedPointCodec
from .errors import SimfedError
from .metrics import RoundRecord, RunReport, read_metrics_csv, write_metrics_csv
from .models import (
    MiniBatch,
    ModelParams,
    ModelSpec,
    TrainConfig,
    cost,
    evaluate,
    forward,
    gradients,
    init_params,
    sgd_step,
    train_local,
)
from .paillier import (
    Ciphertext,
    PaillierPrivateKey,
    PaillierPublicKey,
    add_cipher,
    decrypt,
    encrypt,
    generate_keypair,
    scalar_mul,
)
from .protocol import Initiator, Participant, Server, build_run_context, run_training
from .shadow import run_shadow
from .similarity import (
    BlindedComponent,
    BlindingFactor,
    SimilarityComponent,
    SimilarityScore,
    blind_component,
    compute_blinded_score,
    encrypt_component,
    normalize_weights,
    plaintext_cosine,
    unblind,
)

__version__ = "0.1.0"
