"""A small end-to-end collaborative run with an unreliable participant.

Three clean parties (initiator + two reliable) and one whose shard is half
off-task noise train a shared classifier over encrypted channels. Watch
the similarity scores separate the unreliable party from the reliable
ones, and compare against the same run with filtering disabled.
"""

from dataclasses import replace

from simfed.config import default_config
from simfed.protocol import run_training

cfg = default_config(max_rounds=12, key_bits=128)
print(f"model: {cfg.model.kind}, F={cfg.model.param_count} parameters")
print(f"parties: initiator + {cfg.partition.rp_count} reliable + {cfg.partition.up_count} unreliable")
print(f"threshold: fixed {cfg.threshold.value}\n")

report = run_training(cfg)
print("round  rp1     rp2     up1     included          accuracy")
for rec in report.records:
    included = ",".join(p for p, ok in sorted(rec.included.items()) if ok) or "(none)"
    print(
        f"{rec.round_index:>5}  "
        f"{rec.scores['rp1']:.4f}  {rec.scores['rp2']:.4f}  {rec.scores['up1']:.4f}  "
        f"{included:16s}  {rec.accuracy:.4f}"
    )

nofilter = run_training(replace(cfg, mode="nofilter"))
print(f"\nfinal accuracy with filtering:    {report.final_accuracy:.4f}")
print(f"final accuracy without filtering: {nofilter.final_accuracy:.4f}")
print(f"similarity-phase timings (s): {report.phase_timings}")
