"""The three role state machines and the synchronous round orchestration.

One communication round: every party downloads the encrypted global
parameters, decrypts locally, and trains; the initiator uploads encrypted
weights plus its normalized similarity component; the server blinds the
component with a secret integer and broadcasts it; each participant folds
its own normalized weights into the blinded component, decrypts the
blinded score, and uploads it with its encrypted weights; the server
unblinds the scores, filters participants below the round's threshold,
and homomorphically sums the surviving weight ciphertexts into the next
global parameters.

The server never holds the shared private key or any plaintext weight.
Every message crosses role boundaries through the serialized wire format.
"""

from __future__ import annotations

import json
import random
import time
from concurrent.futures import ThreadPoolExecutor
from concurrent.futures import TimeoutError as FutureTimeoutError
from dataclasses import dataclass

import numpy as np

from .config import ThresholdSchedule, TrainingRunConfig, derive_seed
from .datasets import (
    Dataset,
    load_idx,
    normalize_center,
    pad_features,
    partition,
    relabel_uniform,
    synth_classification,
    synth_noise,
)
from .encoding import FixedPointCodec
from .errors import ConfigError, DegenerateWeightsError, ProtocolOrderError
from .metrics import RoundRecord, RunReport
from .models import (
    ModelParams,
    ModelSpec,
    TrainConfig,
    evaluate,
    init_params,
    params_from_flat,
    train_local,
)
from .paillier import (
    PaillierPrivateKey,
    PaillierPublicKey,
    add_cipher,
    decrypt,
    encrypt,
    generate_keypair,
    scalar_mul,
)
from .similarity import (
    BlindedComponent,
    blind_component,
    compute_blinded_score,
    encrypt_component,
    normalize_weights,
    sample_blinding_factor,
    unblind,
)
from .wire import (
    BlindChallenge,
    GlobalParams,
    InitiatorUpdate,
    InitParams,
    ParticipantUpdate,
    decode_message,
    encode_message,
)


def party_local_update(
    spec: ModelSpec,
    params: ModelParams,
    shard,
    train_cfg: TrainConfig,
    rng: np.random.Generator,
    adversarial: bool = False,
) -> ModelParams:
    """One round of local work; shared by the encrypted pipeline and the
    plaintext shadow so their trajectories stay comparable.

    An adversarial party fabricates uniform random weights instead of
    training, exercising the similarity filter.
    """
    if adversarial:
        return params_from_flat(spec, rng.uniform(-1.0, 1.0, size=spec.param_count))
    return train_local(spec, params, shard.train, train_cfg, rng=rng)


@dataclass
class RunContext:
    """Data, seeds, and initial weights shared by both pipelines."""

    spec: ModelSpec
    train_cfg: TrainConfig
    shards: dict
    eval_data: Dataset
    w_init: ModelParams
    participant_ids: tuple


def _pooled_clean_test(shards, participant_ids) -> Dataset:
    parts = [shards["initiator"].test]
    parts += [shards[pid].test for pid in participant_ids if pid.startswith("rp")]
    X = np.vstack([p.X for p in parts])
    y = np.concatenate([p.y for p in parts])
    return Dataset(X=X, y=y, class_count=parts[0].class_count)


def build_run_context(cfg: TrainingRunConfig) -> RunContext:
    """Generate datasets, partition them, and draw initial weights."""
    plan = cfg.partition
    spec = cfg.model
    if cfg.data.source == "synthetic":
        clean = synth_classification(
            max(plan.clean_total, 1),
            spec.input_dim,
            spec.num_classes,
            seed=derive_seed(cfg.seeds.data, "clean"),
            class_separation=cfg.data.class_separation,
            cluster_std=cfg.data.cluster_std,
        )
    else:
        clean = load_idx(cfg.data.images_path, cfg.data.labels_path)
        if clean.X.shape[1] != spec.input_dim:
            raise ConfigError(
                f"model.input_dim={spec.input_dim} but IDX data has "
                f"{clean.X.shape[1]} features"
            )
        if clean.class_count > spec.num_classes:
            raise ConfigError(
                f"IDX data has {clean.class_count} classes, model allows {spec.num_classes}"
            )
    if cfg.data.normalize:
        clean = normalize_center(clean)

    noise = None
    if plan.noise_total > 0:
        if cfg.noise.source == "synthetic_disjoint":
            noise = synth_noise(
                plan.noise_total,
                spec.input_dim,
                spec.num_classes,
                seed=derive_seed(cfg.seeds.data, "noise"),
                shift=cfg.noise.shift,
                feature_scale=cfg.noise.feature_scale,
                cluster_count=cfg.noise.cluster_count,
                label_policy=cfg.noise.label_policy,
            )
        else:
            noise = load_idx(cfg.noise.images_path, cfg.noise.labels_path)
            noise = pad_features(noise, spec.input_dim)
            if cfg.data.normalize:
                noise = normalize_center(noise)
            if cfg.noise.label_policy == "uniform_random":
                noise = relabel_uniform(
                    noise, spec.num_classes, seed=derive_seed(cfg.seeds.data, "noise-labels")
                )
            elif noise.class_count > spec.num_classes:
                raise ConfigError(
                    "noise labels exceed model classes; use label_policy=uniform_random"
                )
            else:
                noise = Dataset(X=noise.X, y=noise.y, class_count=spec.num_classes)

    shards = partition(
        clean,
        noise,
        plan,
        seed=derive_seed(cfg.seeds.data, "partition"),
        class_alpha=cfg.data.shard_class_alpha,
    )
    participant_ids = cfg.participant_ids
    eval_data = _pooled_clean_test(shards, participant_ids)
    w_init = init_params(spec, np.random.default_rng(derive_seed(cfg.seeds.init, "w_init")))
    return RunContext(
        spec=spec,
        train_cfg=cfg.train,
        shards=shards,
        eval_data=eval_data,
        w_init=w_init,
        participant_ids=participant_ids,
    )


def training_rng(init_seed: int, party_id: str) -> np.random.Generator:
    """The per-party training stream both pipelines must draw from."""
    return np.random.default_rng(derive_seed(init_seed, f"train:{party_id}"))


class _KeyHolder:
    """Shared behavior of the initiator and participants: both hold the
    private key, train locally, and encrypt flat weight vectors."""

    def __init__(
        self,
        party_id: str,
        spec: ModelSpec,
        train_cfg: TrainConfig,
        shard,
        pk: PaillierPublicKey,
        sk: PaillierPrivateKey,
        codec: FixedPointCodec,
        train_rng: np.random.Generator,
        enc_rng: random.Random,
        adversarial: bool = False,
    ):
        self.party_id = party_id
        self.spec = spec
        self.train_cfg = train_cfg
        self.shard = shard
        self.pk = pk
        self.sk = sk
        self.codec = codec
        self.train_rng = train_rng
        self.enc_rng = enc_rng
        self.adversarial = adversarial
        self.params: ModelParams | None = None

    def _encrypt_flat(self, flat: np.ndarray) -> tuple:
        return tuple(
            encrypt(self.pk, self.codec.encode(float(v)), self.enc_rng) for v in flat
        )

    def _decode_global(self, msg: GlobalParams) -> ModelParams:
        values = np.array(
            [self.codec.decode(decrypt(self.sk, c), 1) for c in msg.weights]
        )
        if not msg.pre_divided:
            values /= msg.included_count
        return params_from_flat(self.spec, values)

    def download_global(self, global_bytes: bytes) -> None:
        msg = decode_message(global_bytes, self.pk)
        if not isinstance(msg, GlobalParams):
            raise ProtocolOrderError(f"expected global parameters, got {type(msg).__name__}")
        self.params = self._decode_global(msg)

    def local_update(self) -> None:
        self.params = party_local_update(
            self.spec, self.params, self.shard, self.train_cfg, self.train_rng,
            adversarial=self.adversarial,
        )


class Initiator(_KeyHolder):
    """The reliable party that seeds the global model and anchors all
    similarity comparisons."""

    def __init__(self, *args, w_init: ModelParams, **kwargs):
        super().__init__(*args, **kwargs)
        self.params = w_init
        self._init_sent = False
        self.last_component_seconds = 0.0

    def make_init_message(self) -> bytes:
        # The initialization phase runs exactly once.
        if self._init_sent:
            raise ProtocolOrderError("initialization message already sent")
        self._init_sent = True
        return encode_message(
            InitParams(self.party_id, 0, self._encrypt_flat(self.params.flat))
        )

    def begin_round(self, global_bytes: bytes) -> None:
        self.download_global(global_bytes)
        self.local_update()

    def upload_update(self, round_index: int) -> bytes:
        component = normalize_weights(self.params)
        started = time.perf_counter()
        component_ciphers = encrypt_component(self.pk, component, self.codec, self.enc_rng)
        self.last_component_seconds = time.perf_counter() - started
        weight_ciphers = self._encrypt_flat(self.params.flat)
        return encode_message(
            InitiatorUpdate(self.party_id, round_index, weight_ciphers, component_ciphers)
        )

    def run_round(self, global_bytes: bytes, round_index: int) -> bytes:
        self.begin_round(global_bytes)
        return self.upload_update(round_index)


class Participant(_KeyHolder):
    """A regular party; may hold noisy data or act adversarially, but runs
    the honest algorithm either way. Logs every raw message it receives so
    tests can assert what it could possibly have observed."""

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.received_log: list = []
        self.last_score_seconds = 0.0

    def begin_round(self, global_bytes: bytes) -> None:
        self.received_log.append(bytes(global_bytes))
        self.download_global(global_bytes)
        self.local_update()

    def respond(self, challenge_bytes: bytes, round_index: int) -> bytes:
        self.received_log.append(bytes(challenge_bytes))
        msg = decode_message(challenge_bytes, self.pk)
        if not isinstance(msg, BlindChallenge):
            raise ProtocolOrderError(f"expected blind challenge, got {type(msg).__name__}")
        own = normalize_weights(self.params)
        started = time.perf_counter()
        score_cipher = compute_blinded_score(
            BlindedComponent(ciphers=msg.blinded), own, self.codec
        )
        blinded_score = self.codec.decode(decrypt(self.sk, score_cipher), 2)
        self.last_score_seconds = time.perf_counter() - started
        weight_ciphers = self._encrypt_flat(self.params.flat)
        return encode_message(
            ParticipantUpdate(self.party_id, round_index, weight_ciphers, blinded_score)
        )

    def run_round(self, global_bytes: bytes, challenge_bytes: bytes, round_index: int) -> bytes:
        self.begin_round(global_bytes)
        return self.respond(challenge_bytes, round_index)


class Server:
    """Holds only public material: ciphertexts, thresholds, blinds, scores.

    There is deliberately no field for the private key or any plaintext
    weight; state_bytes() serializes everything the server ever stored so
    tests can scan for leaks.
    """

    def __init__(
        self,
        pk: PaillierPublicKey,
        schedule: ThresholdSchedule,
        blind_bits: int,
        rng: random.Random,
        literal_averaging_exponent: bool = False,
    ):
        self.pk = pk
        self.schedule = schedule
        self.blind_bits = blind_bits
        self.rng = rng
        self.literal_averaging_exponent = literal_averaging_exponent
        self.round_index = 0
        self.global_ciphers: tuple = ()
        self._initiator_weights: tuple = ()
        self._blind = None
        self.blind_log: list = []
        self.score_log: list = []
        self.included_log: list = []
        self.threshold_log: list = []
        self.dropped_log: list = []
        self.last_blind_seconds = 0.0

    def set_initial(self, init_bytes: bytes) -> bytes:
        if self.global_ciphers:
            raise ProtocolOrderError("global parameters already initialized")
        msg = decode_message(init_bytes, self.pk)
        if not isinstance(msg, InitParams):
            raise ProtocolOrderError(f"expected init parameters, got {type(msg).__name__}")
        self.global_ciphers = msg.weights
        return encode_message(
            GlobalParams("server", 0, self.global_ciphers, included_count=1)
        )

    def start_similarity_round(self, initiator_update_bytes: bytes, round_index: int) -> bytes:
        msg = decode_message(initiator_update_bytes, self.pk)
        if not isinstance(msg, InitiatorUpdate):
            raise ProtocolOrderError(f"expected initiator update, got {type(msg).__name__}")
        self._initiator_weights = msg.weights
        # Fresh blind every round; reuse would let participants correlate
        # the initiator's component across rounds.
        self._blind = sample_blinding_factor(self.rng, self.blind_bits)
        started = time.perf_counter()
        blinded = blind_component(msg.component, self._blind)
        self.last_blind_seconds = time.perf_counter() - started
        return encode_message(BlindChallenge("server", round_index, blinded.ciphers))

    def finalize_round(self, update_bytes_by_party: dict, round_index: int) -> bytes:
        if self._blind is None or not self._initiator_weights:
            raise ProtocolOrderError("finalize_round before start_similarity_round")
        threshold = self.schedule.value_at(round_index)
        scores: dict = {}
        included: dict = {}
        dropped: list = []
        aggregate = list(self._initiator_weights)
        count = 1
        for pid in sorted(update_bytes_by_party):
            raw = update_bytes_by_party[pid]
            if raw is None:
                # Barrier timeout: absent for this round only.
                scores[pid] = None
                included[pid] = False
                dropped.append(pid)
                continue
            msg = decode_message(raw, self.pk)
            if not isinstance(msg, ParticipantUpdate):
                raise ProtocolOrderError(
                    f"expected participant update, got {type(msg).__name__}"
                )
            score = unblind(msg.blinded_score, self._blind).value
            scores[pid] = score
            accept = score > threshold  # strictly above: a score equal to the cutoff is excluded
            included[pid] = accept
            if accept:
                aggregate = [add_cipher(a, w) for a, w in zip(aggregate, msg.weights)]
                count += 1
        pre_divided = False
        if self.literal_averaging_exponent:
            # Experimental variant: apply 1/(P+1) as a modular-inverse
            # exponent on the ciphertext. Only sound when the underlying
            # integer sum happens to be divisible by P+1.
            inverse = pow(count, -1, self.pk.n)
            aggregate = [scalar_mul(c, inverse) for c in aggregate]
            pre_divided = True
        self.global_ciphers = tuple(aggregate)
        self.round_index = round_index
        self.blind_log.append(self._blind.l)
        self.score_log.append(scores)
        self.included_log.append(included)
        self.threshold_log.append(threshold)
        self.dropped_log.append(dropped)
        self._blind = None
        self._initiator_weights = ()
        return encode_message(
            GlobalParams("server", round_index, self.global_ciphers, count, pre_divided)
        )

    def run_round(self, initiator_update_bytes: bytes, participant_channel, round_index: int) -> bytes:
        """One full server round: blind, collect via the channel, filter, sum.

        participant_channel receives the serialized blind challenge and
        returns {party_id: serialized update or None}.
        """
        challenge = self.start_similarity_round(initiator_update_bytes, round_index)
        updates = participant_channel(challenge)
        return self.finalize_round(updates, round_index)

    def state_bytes(self) -> bytes:
        """Deterministic dump of everything this role has ever stored."""
        payload = {
            "round_index": self.round_index,
            "schedule": self.schedule.__dict__,
            "blind_bits": self.blind_bits,
            "global_ciphers": [c.value for c in self.global_ciphers],
            "initiator_ciphers": [c.value for c in self._initiator_weights],
            "blind_log": self.blind_log,
            "score_log": self.score_log,
            "included_log": self.included_log,
            "threshold_log": self.threshold_log,
            "dropped_log": self.dropped_log,
            "public_key": {"n": self.pk.n, "g": self.pk.g},
        }
        return json.dumps(payload, sort_keys=True).encode()


def _schedule_for_mode(cfg: TrainingRunConfig) -> ThresholdSchedule:
    # The no-filter baseline is the identical code path with the cutoff
    # pinned at -1 (threshold disabled).
    if cfg.mode == "nofilter":
        return ThresholdSchedule(mode="off")
    return cfg.threshold


def run_training(cfg: TrainingRunConfig, record_globals: bool = True) -> RunReport:
    """Execute the full encrypted protocol and return per-round metrics."""
    if cfg.mode not in ("filtered", "nofilter"):
        raise ConfigError(f"run_training handles filtered/nofilter, not {cfg.mode!r}")
    ctx = build_run_context(cfg)
    if not ctx.participant_ids:
        raise ConfigError("partition plan defines no participants")

    pk, sk = generate_keypair(cfg.key_bits, random.Random(derive_seed(cfg.seeds.crypto, "keygen")))
    codec = FixedPointCodec(n=pk.n, scale_bits=cfg.scale_bits)
    codec.ensure_budget(ctx.spec.param_count, blind_max=1 << cfg.blind_bits)

    initiator = Initiator(
        "initiator",
        ctx.spec,
        ctx.train_cfg,
        ctx.shards["initiator"],
        pk,
        sk,
        codec,
        training_rng(cfg.seeds.init, "initiator"),
        random.Random(derive_seed(cfg.seeds.crypto, "enc:initiator")),
        w_init=ctx.w_init,
    )
    participants = {
        pid: Participant(
            pid,
            ctx.spec,
            ctx.train_cfg,
            ctx.shards[pid],
            pk,
            sk,
            codec,
            training_rng(cfg.seeds.init, pid),
            random.Random(derive_seed(cfg.seeds.crypto, f"enc:{pid}")),
            adversarial=(cfg.adversary == "random_weights" and pid.startswith("up")),
        )
        for pid in ctx.participant_ids
    }
    server = Server(
        pk,
        _schedule_for_mode(cfg),
        cfg.blind_bits,
        random.Random(derive_seed(cfg.seeds.crypto, "blind")),
        literal_averaging_exponent=cfg.literal_averaging_exponent,
    )

    global_bytes = server.set_initial(initiator.make_init_message())

    # One worker per party: tasks for the same party serialize, so a
    # straggler from a timed-out round cannot race its own next round.
    executors = None
    if cfg.parallel:
        executors = {
            pid: ThreadPoolExecutor(max_workers=1, thread_name_prefix=pid)
            for pid in ("initiator", *ctx.participant_ids)
        }
    timeout = cfg.barrier_timeout_s if cfg.barrier_timeout_s > 0 else None

    def _participant_phase(fn_by_pid: dict) -> dict:
        # A timed-out or degenerate participant is dropped for this round only.
        results: dict = {}
        if executors is None:
            for pid, fn in fn_by_pid.items():
                try:
                    results[pid] = fn()
                except DegenerateWeightsError:
                    results[pid] = None
            return results
        futures = {pid: executors[pid].submit(fn) for pid, fn in fn_by_pid.items()}
        for pid, future in futures.items():
            try:
                results[pid] = future.result(timeout=timeout)
            except (FutureTimeoutError, DegenerateWeightsError):
                results[pid] = None
        return results

    records: list = []
    timings = {"model_initiator_s": [], "participant_s": [], "server_s": []}
    best_error = float("inf")
    stall = 0
    stopped_reason = "max_rounds"
    try:
        for round_index in range(1, cfg.max_rounds + 1):
            # Phase A: everyone downloads and trains; local work is parallel.
            init_future = None
            if executors is not None:
                init_future = executors["initiator"].submit(initiator.begin_round, global_bytes)
            else:
                initiator.begin_round(global_bytes)
            train_results = _participant_phase(
                {
                    pid: (lambda p=participants[pid], g=global_bytes: p.begin_round(g) or True)
                    for pid in ctx.participant_ids
                }
            )
            if init_future is not None:
                init_future.result()
            trained = {pid for pid, ok in train_results.items() if ok is not None}

            # Phase B: blinded similarity exchange and encrypted uploads.
            challenge_bytes = server.start_similarity_round(
                initiator.upload_update(round_index), round_index
            )
            responses = _participant_phase(
                {
                    pid: (
                        lambda p=participants[pid], c=challenge_bytes, r=round_index: p.respond(c, r)
                    )
                    for pid in sorted(trained)
                }
            )
            for pid in ctx.participant_ids:
                responses.setdefault(pid, None)

            global_bytes = server.finalize_round(responses, round_index)

            # Instrumentation below this line uses the shared private key the
            # harness legitimately holds; the server never does.
            g_msg = decode_message(global_bytes, pk)
            decoded = np.array([codec.decode(decrypt(sk, c), 1) for c in g_msg.weights])
            if not g_msg.pre_divided:
                decoded /= g_msg.included_count
            test_error, accuracy = evaluate(
                ctx.spec, params_from_flat(ctx.spec, decoded), ctx.eval_data
            )
            records.append(
                RoundRecord(
                    round_index=round_index,
                    threshold=server.threshold_log[-1],
                    scores=dict(server.score_log[-1]),
                    included=dict(server.included_log[-1]),
                    test_error=test_error,
                    accuracy=accuracy,
                    global_params=decoded if record_globals else None,
                )
            )
            timings["model_initiator_s"].append(initiator.last_component_seconds)
            timings["server_s"].append(server.last_blind_seconds)
            responded = [p.last_score_seconds for pid, p in participants.items() if responses[pid]]
            if responded:
                timings["participant_s"].append(float(np.mean(responded)))

            if cfg.plateau.enabled:
                if test_error < best_error - cfg.plateau.min_delta:
                    best_error = test_error
                    stall = 0
                else:
                    stall += 1
                    if stall >= cfg.plateau.patience:
                        stopped_reason = "plateau"
                        break
    finally:
        if executors is not None:
            for ex in executors.values():
                ex.shutdown(wait=False)

    phase_timings = {k: (float(np.mean(v)) if v else 0.0) for k, v in timings.items()}
    return RunReport(
        mode=cfg.mode,
        records=records,
        final_test_error=records[-1].test_error if records else float("nan"),
        final_accuracy=records[-1].accuracy if records else float("nan"),
        phase_timings=phase_timings,
        config=cfg.to_dict(),
        stopped_reason=stopped_reason,
        server_state=server.state_bytes(),
    )
