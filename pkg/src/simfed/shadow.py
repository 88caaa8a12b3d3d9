"""Plaintext shadow of the encrypted protocol.

Runs the identical seeds, data, local training, filtering rule, and
averaging with no encryption anywhere. Because the only thing the real
pipeline adds is fixed-point quantization, the shadow's per-round global
parameters must track the decoded encrypted ones to within a few
quantization ulps; tests use it as the master correctness oracle.
"""

from __future__ import annotations

import numpy as np

from .config import TrainingRunConfig
from .errors import ConfigError
from .metrics import RoundRecord, RunReport
from .models import evaluate, params_from_flat
from .protocol import (
    _schedule_for_mode,
    build_run_context,
    party_local_update,
    training_rng,
)
from .similarity import plaintext_cosine


def run_shadow(cfg: TrainingRunConfig, record_globals: bool = True) -> RunReport:
    """Simulate a filtered/nofilter run entirely in the clear."""
    if cfg.mode not in ("filtered", "nofilter"):
        raise ConfigError(f"run_shadow handles filtered/nofilter, not {cfg.mode!r}")
    ctx = build_run_context(cfg)
    if not ctx.participant_ids:
        raise ConfigError("partition plan defines no participants")
    schedule = _schedule_for_mode(cfg)

    party_ids = ("initiator", *ctx.participant_ids)
    rngs = {pid: training_rng(cfg.seeds.init, pid) for pid in party_ids}
    params = {pid: ctx.w_init for pid in party_ids}
    global_flat = ctx.w_init.flat.copy()

    records: list = []
    best_error = float("inf")
    stall = 0
    stopped_reason = "max_rounds"
    for round_index in range(1, cfg.max_rounds + 1):
        for pid in party_ids:
            adversarial = cfg.adversary == "random_weights" and pid.startswith("up")
            params[pid] = party_local_update(
                ctx.spec,
                params_from_flat(ctx.spec, global_flat),
                ctx.shards[pid],
                ctx.train_cfg,
                rngs[pid],
                adversarial=adversarial,
            )
        threshold = schedule.value_at(round_index)
        w_o = params["initiator"].flat
        scores = {
            pid: plaintext_cosine(w_o, params[pid].flat).value
            for pid in ctx.participant_ids
        }
        included = {pid: score > threshold for pid, score in scores.items()}
        total = w_o.copy()
        count = 1
        for pid in sorted(ctx.participant_ids):
            if included[pid]:
                total += params[pid].flat
                count += 1
        global_flat = total / count
        test_error, accuracy = evaluate(
            ctx.spec, params_from_flat(ctx.spec, global_flat), ctx.eval_data
        )
        records.append(
            RoundRecord(
                round_index=round_index,
                threshold=threshold,
                scores=scores,
                included=included,
                test_error=test_error,
                accuracy=accuracy,
                global_params=global_flat.copy() if record_globals else None,
            )
        )
        if cfg.plateau.enabled:
            if test_error < best_error - cfg.plateau.min_delta:
                best_error = test_error
                stall = 0
            else:
                stall += 1
                if stall >= cfg.plateau.patience:
                    stopped_reason = "plateau"
                    break

    return RunReport(
        mode=cfg.mode,
        records=records,
        final_test_error=records[-1].test_error if records else float("nan"),
        final_accuracy=records[-1].accuracy if records else float("nan"),
        phase_timings={},
        config=cfg.to_dict(),
        stopped_reason=stopped_reason,
    )
