"""Per-role cost of one similarity-score computation.

The initiator pays for encrypting its normalized component (one full
modular exponentiation per parameter); the scoring participant pays for
the homomorphic inner product plus one decryption; the server only blinds,
with a short exponent. Expect server < participant < initiator.
"""

from simfed.config import default_config
from simfed.runner import measure_similarity_timings

cfg = default_config()
print(f"F = {cfg.model.param_count} parameters, key_bits = {cfg.key_bits}\n")
timing = measure_similarity_timings(cfg, repetitions=3)
print(timing.render())
print(
    f"\nordering server < participant < initiator: "
    f"{timing.server_s < timing.participant_s < timing.model_initiator_s}"
)
