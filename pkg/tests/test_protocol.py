import random
import time

import numpy as np
import pytest

from simfed.config import (
    Seeds,
    ThresholdSchedule,
    TrainingRunConfig,
    default_config,
    derive_seed,
)
from simfed.datasets import NoiseSpec, PartitionPlan
from simfed.encoding import FixedPointCodec
from simfed.errors import ConfigError, ProtocolOrderError
from simfed.metrics import RunReport
from simfed.models import ModelSpec, TrainConfig
from simfed.paillier import decrypt, generate_keypair
from simfed.protocol import (
    Initiator,
    Participant,
    Server,
    build_run_context,
    run_training,
    training_rng,
)
from simfed.shadow import run_shadow
from simfed.wire import (
    BlindChallenge,
    GlobalParams,
    InitiatorUpdate,
    ParticipantUpdate,
    decode_message,
    encode_message,
)


def _tiny_config(**overrides):
    base = dict(
        max_rounds=3,
        key_bits=128,
        model=ModelSpec(kind="logistic", input_dim=6, num_classes=3),
        train=TrainConfig(learning_rate=0.1, batch_size=16, local_epochs_per_round=2),
        partition=PartitionPlan(
            initiator_size=60,
            initiator_test_size=30,
            rp_count=2,
            rp_size=60,
            rp_test_size=30,
            up_count=1,
            up_clean_size=30,
            up_noise_size=30,
            up_clean_test_size=10,
            up_noise_test_size=10,
        ),
        threshold=ThresholdSchedule(mode="fixed", value=0.5),
        seeds=Seeds(data=5, init=6, crypto=7),
    )
    base.update(overrides)
    return default_config(**base)


def _wire_party(cfg, ctx, pk, sk, codec, party_id, shard=None, train_seed_id=None,
                adversarial=False):
    cls = Initiator if party_id == "initiator" else Participant
    kwargs = {}
    if party_id == "initiator":
        kwargs["w_init"] = ctx.w_init
    return cls(
        party_id,
        ctx.spec,
        ctx.train_cfg,
        shard if shard is not None else ctx.shards[party_id],
        pk,
        sk,
        codec,
        training_rng(cfg.seeds.init, train_seed_id or party_id),
        random.Random(derive_seed(cfg.seeds.crypto, f"enc:{party_id}")),
        **({} if party_id == "initiator" else {"adversarial": adversarial}),
        **kwargs,
    )


@pytest.fixture(scope="module")
def manual_setup():
    cfg = _tiny_config()
    ctx = build_run_context(cfg)
    pk, sk = generate_keypair(cfg.key_bits, random.Random(99))
    codec = FixedPointCodec(n=pk.n, scale_bits=cfg.scale_bits)
    return cfg, ctx, pk, sk, codec


def test_threshold_schedule_modes():
    fixed = ThresholdSchedule(mode="fixed", value=0.05)
    assert fixed.value_at(1) == fixed.value_at(500) == 0.05
    stepped = ThresholdSchedule(
        mode="stepped", start=0.1, end=0.7, step=0.1, rounds_per_step=100
    )
    assert stepped.value_at(1) == pytest.approx(0.1)
    assert stepped.value_at(100) == pytest.approx(0.1)
    assert stepped.value_at(101) == pytest.approx(0.2)
    assert stepped.value_at(5000) == pytest.approx(0.7)
    values = [stepped.value_at(r) for r in range(1, 1000)]
    assert all(b >= a for a, b in zip(values, values[1:]))
    with pytest.raises(ConfigError):
        ThresholdSchedule(mode="fixed", value=1.5)
    with pytest.raises(ConfigError):
        ThresholdSchedule(mode="stepped", start=0.5, end=0.3)


def test_initiator_init_message_once(manual_setup):
    cfg, ctx, pk, sk, codec = manual_setup
    initiator = _wire_party(cfg, ctx, pk, sk, codec, "initiator")
    first = initiator.make_init_message()
    decoded = decode_message(first, pk)
    recovered = np.array([codec.decode(decrypt(sk, c), 1) for c in decoded.weights])
    assert np.allclose(recovered, ctx.w_init.flat, atol=2.0 ** -codec.scale_bits)
    with pytest.raises(ProtocolOrderError):
        initiator.make_init_message()


def test_initiator_round_zero_epochs_returns_global(manual_setup):
    cfg, ctx, pk, sk, codec = manual_setup
    zero_cfg = TrainConfig(learning_rate=0.1, batch_size=16, local_epochs_per_round=0)
    initiator = Initiator(
        "initiator", ctx.spec, zero_cfg, ctx.shards["initiator"], pk, sk, codec,
        training_rng(cfg.seeds.init, "initiator"), random.Random(1), w_init=ctx.w_init,
    )
    server = Server(pk, cfg.threshold, cfg.blind_bits, random.Random(2))
    global_bytes = server.set_initial(initiator.make_init_message())
    update_bytes = initiator.run_round(global_bytes, 1)
    update = decode_message(update_bytes, pk)
    assert isinstance(update, InitiatorUpdate)
    w_o = np.array([codec.decode(decrypt(sk, c), 1) for c in update.weights])
    # With zero local epochs the uploaded weights are the downloaded global.
    assert np.allclose(w_o, ctx.w_init.flat, atol=2 * 2.0 ** -codec.scale_bits)
    comp = np.array([codec.decode(decrypt(sk, c), 1) for c in update.component])
    assert np.linalg.norm(comp) == pytest.approx(1.0, abs=1e-6)


def test_server_state_structurally_keyless(manual_setup):
    cfg, ctx, pk, sk, codec = manual_setup
    server = Server(pk, cfg.threshold, cfg.blind_bits, random.Random(3))
    fields = set(vars(server))
    assert "sk" not in fields
    assert not any("private" in f for f in fields)
    blob = server.state_bytes()
    assert b"lam" not in blob and b"mu" not in blob


def test_full_manual_round_and_identical_participant(manual_setup):
    # A participant holding the initiator's dataset and training seed must
    # produce weight similarity ~1 after the first round.
    cfg, ctx, pk, sk, codec = manual_setup
    initiator = _wire_party(cfg, ctx, pk, sk, codec, "initiator")
    twin = _wire_party(
        cfg, ctx, pk, sk, codec, "rp1",
        shard=ctx.shards["initiator"], train_seed_id="initiator",
    )
    other = _wire_party(cfg, ctx, pk, sk, codec, "rp2")
    server = Server(pk, cfg.threshold, cfg.blind_bits, random.Random(4))

    global_bytes = server.set_initial(initiator.make_init_message())
    challenge = server.start_similarity_round(initiator.run_round(global_bytes, 1), 1)
    updates = {
        "rp1": twin.run_round(global_bytes, challenge, 1),
        "rp2": other.run_round(global_bytes, challenge, 1),
    }
    new_global = server.finalize_round(updates, 1)

    scores = server.score_log[-1]
    assert scores["rp1"] == pytest.approx(1.0, abs=1e-6)
    assert scores["rp2"] < 1.0 - 1e-6
    assert server.included_log[-1] == {"rp1": True, "rp2": True}

    msg = decode_message(new_global, pk)
    assert isinstance(msg, GlobalParams)
    assert msg.included_count == 3


def test_score_exactly_at_threshold_excluded(manual_setup):
    # Inject a participant update whose unblinded score lands exactly on T.
    cfg, ctx, pk, sk, codec = manual_setup
    threshold = 0.5
    server = Server(
        pk, ThresholdSchedule(mode="fixed", value=threshold), cfg.blind_bits,
        random.Random(5),
    )
    initiator = _wire_party(cfg, ctx, pk, sk, codec, "initiator")
    global_bytes = server.set_initial(initiator.make_init_message())
    server.start_similarity_round(initiator.run_round(global_bytes, 1), 1)
    l = server._blind.l
    participant = _wire_party(cfg, ctx, pk, sk, codec, "rp1")
    participant.begin_round(global_bytes)
    forged = encode_message(
        ParticipantUpdate("rp1", 1, participant._encrypt_flat(participant.params.flat),
                          blinded_score=threshold * l)
    )
    ok = encode_message(
        ParticipantUpdate("rp2", 1, participant._encrypt_flat(participant.params.flat),
                          blinded_score=(threshold + 0.25) * l)
    )
    server.finalize_round({"rp1": forged, "rp2": ok}, 1)
    assert server.score_log[-1]["rp1"] == pytest.approx(threshold)
    assert server.included_log[-1] == {"rp1": False, "rp2": True}


def test_all_filtered_global_equals_initiator(manual_setup):
    cfg, ctx, pk, sk, codec = manual_setup
    server = Server(
        pk, ThresholdSchedule(mode="fixed", value=0.9), cfg.blind_bits, random.Random(6)
    )
    initiator = _wire_party(cfg, ctx, pk, sk, codec, "initiator")
    global_bytes = server.set_initial(initiator.make_init_message())
    update_bytes = initiator.run_round(global_bytes, 1)
    w_o = np.array(
        [codec.decode(decrypt(sk, c), 1)
         for c in decode_message(update_bytes, pk).weights]
    )
    server.start_similarity_round(update_bytes, 1)
    l = server._blind.l
    participant = _wire_party(cfg, ctx, pk, sk, codec, "up1")
    participant.begin_round(global_bytes)
    lowball = encode_message(
        ParticipantUpdate("up1", 1, participant._encrypt_flat(participant.params.flat),
                          blinded_score=0.1 * l)
    )
    final = decode_message(server.finalize_round({"up1": lowball}, 1), pk)
    assert final.included_count == 1
    decoded = np.array([codec.decode(decrypt(sk, c), 1) for c in final.weights])
    assert np.allclose(decoded, w_o, atol=2.0 ** -codec.scale_bits)


def test_participant_never_sees_blind_or_component(manual_setup):
    cfg, ctx, pk, sk, codec = manual_setup
    initiator = _wire_party(cfg, ctx, pk, sk, codec, "initiator")
    participant = _wire_party(cfg, ctx, pk, sk, codec, "rp1")
    server = Server(pk, cfg.threshold, cfg.blind_bits, random.Random(7))
    global_bytes = server.set_initial(initiator.make_init_message())
    challenge = server.start_similarity_round(initiator.run_round(global_bytes, 1), 1)
    participant.run_round(global_bytes, challenge, 1)

    kinds = {type(decode_message(raw, pk)).__name__ for raw in participant.received_log}
    assert kinds == {"GlobalParams", "BlindChallenge"}
    l = server.blind_log[-1] if server.blind_log else server._blind.l
    # The blind never appears in any payload the participant received, nor
    # anywhere in the participant's own state.
    for raw in participant.received_log:
        assert str(l).encode() not in raw
    assert l not in vars(participant).values()


def test_run_training_deterministic_and_matches_shadow():
    cfg = _tiny_config()
    a = run_training(cfg)
    b = run_training(cfg)
    assert [r.scores for r in a.records] == [r.scores for r in b.records]
    assert [r.included for r in a.records] == [r.included for r in b.records]
    shadow = run_shadow(cfg)
    tol = cfg.model.param_count * 2.0 ** (-cfg.scale_bits + 2)
    for enc_rec, sh_rec in zip(a.records, shadow.records):
        assert enc_rec.included == sh_rec.included
        assert np.max(np.abs(enc_rec.global_params - sh_rec.global_params)) < tol


def test_run_training_rejects_baseline_modes():
    with pytest.raises(ConfigError):
        run_training(_tiny_config(mode="centralized"))


def test_nofilter_includes_everyone():
    report = run_training(_tiny_config(mode="nofilter", max_rounds=2))
    for rec in report.records:
        assert all(rec.included.values())
        assert rec.threshold == -1.0


def test_adversarial_up_is_filtered():
    report = run_training(_tiny_config(adversary="random_weights", max_rounds=2))
    for rec in report.records:
        assert not rec.included["up1"]
        assert rec.included["rp1"] and rec.included["rp2"]


def test_barrier_timeout_drops_straggler(manual_setup, monkeypatch):
    cfg = _tiny_config(barrier_timeout_s=0.5, max_rounds=1)

    slow = {"done": False}
    original = Participant.respond

    def slow_respond(self, challenge_bytes, round_index):
        if self.party_id == "rp2":
            time.sleep(1.2)
            slow["done"] = True
        return original(self, challenge_bytes, round_index)

    monkeypatch.setattr(Participant, "respond", slow_respond)
    report = run_training(cfg)
    rec = report.records[0]
    assert rec.scores["rp2"] is None
    assert rec.included["rp2"] is False
    assert rec.included["rp1"] is True


def test_literal_averaging_exponent_divisibility():
    # The modular-inverse exponent only recovers the true mean when the
    # plaintext sum divides evenly; otherwise decoding is garbage.
    pk, sk = generate_keypair(128, random.Random(31))
    codec = FixedPointCodec(n=pk.n, scale_bits=8)
    from simfed.paillier import add_cipher, encrypt, scalar_mul

    rng = random.Random(32)
    inv3 = pow(3, -1, pk.n)
    divisible = [codec.encode(1.0), codec.encode(2.0), codec.encode(3.0)]
    total = None
    for v in divisible:
        c = encrypt(pk, v, rng)
        total = c if total is None else add_cipher(total, c)
    mean = codec.decode(decrypt(sk, scalar_mul(total, inv3)), 1)
    assert mean == pytest.approx(2.0, abs=2.0 ** -6)

    # encodings sum to 514, which is not divisible by 3
    awkward = [codec.encode(1.0), codec.encode(1.0), codec.encode(0.0078125)]
    assert sum(awkward) % 3 != 0
    total = None
    for v in awkward:
        c = encrypt(pk, v, rng)
        total = c if total is None else add_cipher(total, c)
    garbled = codec.decode(decrypt(sk, scalar_mul(total, inv3)), 1)
    assert abs(garbled - (2.0078125 / 3)) > 1.0


def test_run_training_zero_rounds():
    report = run_training(_tiny_config(max_rounds=0))
    assert report.records == []
    assert report.rounds_completed == 0


def test_budget_violation_refused_at_start():
    from simfed.errors import EncodingRangeError

    cfg = _tiny_config(key_bits=64, scale_bits=28, blind_bits=8)
    with pytest.raises(EncodingRangeError):
        run_training(cfg)


def test_server_run_round_channel(manual_setup):
    cfg, ctx, pk, sk, codec = manual_setup
    initiator = _wire_party(cfg, ctx, pk, sk, codec, "initiator")
    participant = _wire_party(cfg, ctx, pk, sk, codec, "rp1")
    server = Server(pk, cfg.threshold, cfg.blind_bits, random.Random(8))
    global_bytes = server.set_initial(initiator.make_init_message())

    def channel(challenge_bytes):
        return {"rp1": participant.run_round(global_bytes, challenge_bytes, 1)}

    new_global = server.run_round(initiator.run_round(global_bytes, 1), channel, 1)
    msg = decode_message(new_global, pk)
    assert isinstance(msg, GlobalParams)
    assert server.round_index == 1
    assert "rp1" in server.score_log[-1]
