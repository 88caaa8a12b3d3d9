"""Experiment runner: mode dispatch, baselines, metrics files, timings.

filtered / nofilter execute the encrypted protocol; centralized trains one
model on the pooled clean data (no collaboration, no encryption) and
standalone on the initiator's shard alone. All four share the evaluation
set so accuracy curves are comparable round for round.
"""

from __future__ import annotations

import os
import random
import time
from dataclasses import dataclass

import numpy as np

from .config import TrainingRunConfig, derive_seed
from .datasets import Dataset
from .encoding import FixedPointCodec
from .errors import ConfigError
from .metrics import (
    RoundRecord,
    RunReport,
    write_metrics_csv,
    write_summary_json,
    write_timings_json,
)
from .models import evaluate, train_local
from .paillier import decrypt, generate_keypair
from .protocol import build_run_context, run_training, training_rng
from .similarity import (
    BlindedComponent,
    blind_component,
    compute_blinded_score,
    encrypt_component,
    normalize_weights,
    sample_blinding_factor,
)


def _pooled_clean_train(ctx) -> Dataset:
    parts = [ctx.shards["initiator"].train]
    for pid in ctx.participant_ids:
        shard = ctx.shards[pid]
        if pid.startswith("rp"):
            parts.append(shard.train)
        elif shard.clean_train is not None:
            parts.append(shard.clean_train)
    return Dataset(
        X=np.vstack([p.X for p in parts]),
        y=np.concatenate([p.y for p in parts]),
        class_count=parts[0].class_count,
    )


def _run_baseline(cfg: TrainingRunConfig) -> RunReport:
    ctx = build_run_context(cfg)
    if cfg.mode == "centralized":
        train_data = _pooled_clean_train(ctx)
    else:
        train_data = ctx.shards["initiator"].train
    params = ctx.w_init
    rng = training_rng(cfg.seeds.init, cfg.mode)
    records = []
    best_error = float("inf")
    stall = 0
    stopped_reason = "max_rounds"
    for round_index in range(1, cfg.max_rounds + 1):
        params = train_local(ctx.spec, params, train_data, ctx.train_cfg, rng=rng)
        test_error, accuracy = evaluate(ctx.spec, params, ctx.eval_data)
        records.append(
            RoundRecord(
                round_index=round_index,
                threshold=None,
                scores={},
                included={},
                test_error=test_error,
                accuracy=accuracy,
                global_params=params.flat.copy(),
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


def run_experiment(cfg: TrainingRunConfig) -> RunReport:
    """Dispatch one run by mode."""
    if cfg.mode in ("filtered", "nofilter"):
        return run_training(cfg)
    if cfg.mode in ("centralized", "standalone"):
        return _run_baseline(cfg)
    raise ConfigError(f"unknown mode {cfg.mode!r}")


def write_report_files(report: RunReport, out_dir: str) -> dict:
    """Write metrics.csv, summary.json, and timings.json under out_dir."""
    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "metrics": os.path.join(out_dir, "metrics.csv"),
        "summary": os.path.join(out_dir, "summary.json"),
        "timings": os.path.join(out_dir, "timings.json"),
    }
    write_metrics_csv(report, paths["metrics"])
    write_summary_json(report, paths["summary"])
    write_timings_json(report, paths["timings"])
    return paths


@dataclass
class TimingReport:
    """Wall-clock seconds per role for one round of similarity scoring."""

    model_initiator_s: float
    participant_s: float
    server_s: float
    repetitions: int
    param_count: int
    key_bits: int

    def rows(self) -> list:
        return [
            ("Model Initiator(s)", self.model_initiator_s),
            ("Participant(s)", self.participant_s),
            ("Server(s)", self.server_s),
        ]

    def render(self) -> str:
        lines = [
            f"Similarity-score computation, mean of {self.repetitions} repetitions "
            f"(F={self.param_count}, key_bits={self.key_bits})"
        ]
        for name, seconds in self.rows():
            lines.append(f"  {name:20s} {seconds:.4f}")
        return "\n".join(lines)


def measure_similarity_timings(cfg: TrainingRunConfig, repetitions: int = 3) -> TimingReport:
    """Time the three similarity-pipeline roles on realistic weights.

    One round of local training produces the weight vectors; each role's
    share is then repeated `repetitions` times and averaged: the initiator
    encrypts its normalized component, the server blinds it, a participant
    folds in its own weights and decrypts the blinded score.
    """
    if repetitions < 1:
        raise ConfigError("repetitions must be >= 1")
    ctx = build_run_context(cfg)
    pk, sk = generate_keypair(
        cfg.key_bits, random.Random(derive_seed(cfg.seeds.crypto, "keygen"))
    )
    codec = FixedPointCodec(n=pk.n, scale_bits=cfg.scale_bits)
    codec.ensure_budget(ctx.spec.param_count, blind_max=1 << cfg.blind_bits)
    enc_rng = random.Random(derive_seed(cfg.seeds.crypto, "timing"))

    w_o = train_local(
        ctx.spec, ctx.w_init, ctx.shards["initiator"].train, ctx.train_cfg,
        rng=training_rng(cfg.seeds.init, "initiator"),
    )
    pid = ctx.participant_ids[0]
    w_p = train_local(
        ctx.spec, ctx.w_init, ctx.shards[pid].train, ctx.train_cfg,
        rng=training_rng(cfg.seeds.init, pid),
    )
    comp_o = normalize_weights(w_o)
    comp_p = normalize_weights(w_p)

    initiator_times = []
    server_times = []
    participant_times = []
    for _ in range(repetitions):
        started = time.perf_counter()
        ciphers = encrypt_component(pk, comp_o, codec, enc_rng)
        initiator_times.append(time.perf_counter() - started)

        factor = sample_blinding_factor(enc_rng, cfg.blind_bits)
        started = time.perf_counter()
        blinded = blind_component(ciphers, factor)
        server_times.append(time.perf_counter() - started)

        started = time.perf_counter()
        score_cipher = compute_blinded_score(blinded, comp_p, codec)
        codec.decode(decrypt(sk, score_cipher), 2)
        participant_times.append(time.perf_counter() - started)

    return TimingReport(
        model_initiator_s=float(np.mean(initiator_times)),
        participant_s=float(np.mean(participant_times)),
        server_s=float(np.mean(server_times)),
        repetitions=repetitions,
        param_count=ctx.spec.param_count,
        key_bits=cfg.key_bits,
    )
