from __future__ import annotations

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cfgkit.errors import ArgumentError, EncodingError, ParseError, TrainingError
from cfgkit.featurize import (
    BIT_LENGTH,
    FIELD_RANGE,
    LAYOUT,
    PREFIX_FLAG_BYTES,
    EncoderModel,
    FieldValue,
    InstructionRecord,
    block_feature,
    compress,
    encode_instruction,
    layout_is_complete,
    load_model,
    parse_instruction,
    parse_instruction_lines,
    random_projection,
    reconstruction_loss_and_grads,
    save_model,
    train_autoencoder,
)
from oracles import central_difference

TABLE = {"nop": 0, "mov": 1, "xor": 2, "call": 3}


def expected_bits(positions):
    vec = np.zeros(BIT_LENGTH, dtype=np.uint8)
    for p in positions:
        vec[p] = 1
    return vec


def bits_of(value, start, width):
    return [start + j for j in range(width) if (value >> j) & 1]


class TestLayout:
    def test_layout_tiles_439_bits(self):
        assert layout_is_complete()
        assert len(LAYOUT) == 19
        assert sum(w for _, _, w in LAYOUT) == BIT_LENGTH

    def test_prefix_flag_table_has_12_entries(self):
        assert len(PREFIX_FLAG_BYTES) == len(set(PREFIX_FLAG_BYTES)) == 12


class TestEncode:
    def test_single_byte_nop(self):
        ins = InstructionRecord(opcode=(0x90,), mnemonic="nop", length=1)
        got = encode_instruction(ins, TABLE)
        positions = []
        # opcode length code 0 sets nothing; opcode byte 0 = 0x90.
        positions += bits_of(0x90, FIELD_RANGE["opcode_bytes"][0], 8)
        positions += [FIELD_RANGE["mnemonic_onehot"][0] + 0]
        positions += bits_of(1, FIELD_RANGE["length"][0], 5)
        assert np.array_equal(got, expected_bits(positions))

    def test_unknown_mnemonic_zero_case(self):
        ins = InstructionRecord(opcode=(0x00,), mnemonic="whatever", length=1)
        got = encode_instruction(ins, TABLE)
        positions = bits_of(1, FIELD_RANGE["length"][0], 5)
        assert np.array_equal(got, expected_bits(positions))

    def test_full_record_field_by_field(self):
        ins = InstructionRecord(
            opcode=(0x0F, 0x1F),
            mnemonic="mov",
            length=9,
            legacy_prefixes=(0x66, 0xF0),
            rex=0x48,
            modrm=0xC4,
            sib=0x25,
            displacement=FieldValue(value=-4, width=4),
            immediate=FieldValue(value=0x1234, width=2),
            operand_count=2,
        )
        got = encode_instruction(ins, TABLE)
        positions = []
        flags = (1 << PREFIX_FLAG_BYTES.index(0x66)) | (1 << PREFIX_FLAG_BYTES.index(0xF0))
        positions += bits_of(flags, FIELD_RANGE["prefix_flags"][0], 12)
        positions += bits_of(0x66 | (0xF0 << 8), FIELD_RANGE["prefix_bytes"][0], 32)
        positions += [FIELD_RANGE["rex_present"][0]]
        positions += bits_of(0x48, FIELD_RANGE["rex_byte"][0], 8)
        positions += bits_of(1, FIELD_RANGE["opcode_len"][0], 2)  # 2 bytes -> code 1
        positions += bits_of(0x0F | (0x1F << 8), FIELD_RANGE["opcode_bytes"][0], 24)
        positions += [FIELD_RANGE["modrm_present"][0]]
        positions += bits_of(0xC4, FIELD_RANGE["modrm_byte"][0], 8)
        positions += [FIELD_RANGE["sib_present"][0]]
        positions += bits_of(0x25, FIELD_RANGE["sib_byte"][0], 8)
        positions += [FIELD_RANGE["disp_present"][0]]
        positions += bits_of(2, FIELD_RANGE["disp_width"][0], 2)  # width 4 -> code 2
        positions += bits_of(0xFFFFFFFC, FIELD_RANGE["disp_value"][0], 64)  # -4 zero-extended
        positions += [FIELD_RANGE["imm_present"][0]]
        positions += bits_of(1, FIELD_RANGE["imm_width"][0], 2)  # width 2 -> code 1
        positions += bits_of(0x1234, FIELD_RANGE["imm_value"][0], 64)
        positions += [FIELD_RANGE["mnemonic_onehot"][0] + 1]
        positions += bits_of(2, FIELD_RANGE["operand_count"][0], 3)
        positions += bits_of(9, FIELD_RANGE["length"][0], 5)
        assert np.array_equal(got, expected_bits(positions))

    def test_immediate_width_localized_difference(self):
        a = InstructionRecord(
            opcode=(0x90,), mnemonic="nop", length=2, immediate=FieldValue(value=5, width=1)
        )
        b = InstructionRecord(
            opcode=(0x90,), mnemonic="nop", length=2, immediate=FieldValue(value=5, width=4)
        )
        diff = np.flatnonzero(encode_instruction(a, TABLE) ^ encode_instruction(b, TABLE))
        lo, hi = FIELD_RANGE["imm_width"]
        assert all(lo <= d < hi for d in diff)

    def test_opcode_too_long(self):
        ins = InstructionRecord(opcode=(1, 2, 3, 4), mnemonic="nop", length=4)
        with pytest.raises(EncodingError):
            encode_instruction(ins, TABLE)

    def test_operand_count_out_of_range(self):
        ins = InstructionRecord(opcode=(0x90,), mnemonic="nop", length=1, operand_count=8)
        with pytest.raises(EncodingError):
            encode_instruction(ins, TABLE)

    def test_oversized_mnemonic_table(self):
        ins = InstructionRecord(opcode=(0x90,), mnemonic="nop", length=1)
        with pytest.raises(ArgumentError):
            encode_instruction(ins, {f"m{i}": i for i in range(201)})

    def test_presence_flags_imply_zero_payload(self):
        ins = InstructionRecord(opcode=(0x90,), mnemonic="nop", length=1)
        got = encode_instruction(ins, TABLE)
        for name in ("rex", "modrm", "sib", "disp", "imm"):
            ps, pe = FIELD_RANGE[f"{name}_present"]
            assert got[ps:pe].sum() == 0
        for name in ("rex_byte", "modrm_byte", "sib_byte", "disp_value", "imm_value"):
            lo, hi = FIELD_RANGE[name]
            assert got[lo:hi].sum() == 0


@st.composite
def records(draw):
    widths = st.sampled_from([1, 2, 4, 8])

    def payload():
        w = draw(widths)
        value = draw(st.integers(min_value=0, max_value=(1 << (8 * w)) - 1))
        return FieldValue(value=value, width=w)

    return InstructionRecord(
        opcode=tuple(
            draw(st.lists(st.integers(0, 255), min_size=1, max_size=3))
        ),
        mnemonic=draw(st.sampled_from(list(TABLE) + ["unknown"])),
        length=draw(st.integers(1, 31)),
        legacy_prefixes=tuple(draw(st.lists(st.integers(0, 255), max_size=4))),
        rex=draw(st.one_of(st.none(), st.integers(0, 255))),
        modrm=draw(st.one_of(st.none(), st.integers(0, 255))),
        sib=draw(st.one_of(st.none(), st.integers(0, 255))),
        displacement=payload() if draw(st.booleans()) else None,
        immediate=payload() if draw(st.booleans()) else None,
        operand_count=draw(st.integers(0, 7)),
    )


@settings(max_examples=80, deadline=None)
@given(records(), records())
def test_encoding_injective(a, b):
    ea, eb = encode_instruction(a, TABLE), encode_instruction(b, TABLE)
    known_a = a.mnemonic if a.mnemonic in TABLE else None
    known_b = b.mnemonic if b.mnemonic in TABLE else None
    normalized_a = (a, known_a)
    normalized_b = (b, known_b)
    if normalized_a == normalized_b:
        assert np.array_equal(ea, eb)
    else:
        # records differing in any stored field (unknown mnemonics collapse
        # into the same all-zero one-hot region) must encode differently
        stored_a = (a.opcode, known_a, a.length, a.legacy_prefixes, a.rex, a.modrm,
                    a.sib, a.displacement, a.immediate, a.operand_count)
        stored_b = (b.opcode, known_b, b.length, b.legacy_prefixes, b.rex, b.modrm,
                    b.sib, b.displacement, b.immediate, b.operand_count)
        if stored_a != stored_b:
            assert not np.array_equal(ea, eb)


class TestBlockFeature:
    def test_single_instruction_equals_encoding(self):
        bits = encode_instruction(InstructionRecord(opcode=(0x90,), mnemonic="nop", length=1), TABLE)
        assert np.array_equal(block_feature([bits]), bits.astype(float))

    def test_idempotent_on_identical_vectors(self):
        bits = encode_instruction(InstructionRecord(opcode=(0x31,), mnemonic="xor", length=2), TABLE)
        assert np.array_equal(block_feature([bits, bits]), bits.astype(float))

    def test_two_distinct_unit_vectors(self):
        e1 = np.zeros(BIT_LENGTH, dtype=np.uint8)
        e2 = np.zeros(BIT_LENGTH, dtype=np.uint8)
        e1[3] = 1
        e2[10] = 1
        feature = block_feature([e1, e2])
        assert feature[3] == feature[10] == 0.5
        assert feature.sum() == 1.0

    def test_empty_block_rejected(self):
        with pytest.raises(ArgumentError):
            block_feature([])


class TestJsonl:
    def test_parse_hex_bytes(self):
        doc = {
            "opcode": ["0f", "05"],
            "mnemonic": "call",
            "length": 2,
            "legacy_prefixes": ["66"],
            "rex": "48",
            "operand_count": 0,
        }
        ins = parse_instruction(doc)
        assert ins.opcode == (0x0F, 0x05)
        assert ins.rex == 0x48
        assert ins.legacy_prefixes == (0x66,)

    def test_bad_record_named(self, tmp_path):
        path = tmp_path / "ins.jsonl"
        path.write_text('{"mnemonic": "nop"}\n')
        with pytest.raises(ParseError) as exc:
            parse_instruction_lines(path)
        assert "ins.jsonl:1" in str(exc.value)

    def test_round_trip_through_encoder(self, tmp_path):
        path = tmp_path / "ins.jsonl"
        rows = [
            {"opcode": ["90"], "mnemonic": "nop", "length": 1},
            {
                "opcode": ["0f", "1f"],
                "mnemonic": "mov",
                "length": 5,
                "modrm": "c0",
                "immediate": {"value": 7, "width": 1},
                "operand_count": 2,
            },
        ]
        path.write_text("\n".join(json.dumps(r) for r in rows) + "\n")
        records = parse_instruction_lines(path)
        feature = block_feature([encode_instruction(r, TABLE) for r in records])
        assert feature.shape == (BIT_LENGTH,)
        assert ((0.0 <= feature) & (feature <= 1.0)).all()


class TestAutoencoder:
    def test_repeated_vector_reconstruction_improves(self):
        rng = np.random.default_rng(0)
        row = rng.random(BIT_LENGTH)
        data = [row] * 8
        model = train_autoencoder(data, seed=1, epochs=200, learning_rate=0.5, batch_size=4)
        assert model.loss_history[-1] < 0.1 * model.loss_history[0]

    def test_deterministic_per_seed(self):
        rng = np.random.default_rng(5)
        data = rng.random((6, BIT_LENGTH))
        m1 = train_autoencoder(data, seed=9, epochs=3, learning_rate=0.1, batch_size=2)
        m2 = train_autoencoder(data, seed=9, epochs=3, learning_rate=0.1, batch_size=2)
        assert np.array_equal(m1.w_enc, m2.w_enc)
        assert np.array_equal(m1.b_dec, m2.b_dec)
        assert m1.loss_history == m2.loss_history

    def test_gradients_match_central_differences(self):
        # Small dimensions so every parameter can be checked exhaustively.
        rng = np.random.default_rng(12)
        d_in, hidden, batch = 9, 4, 5
        x = rng.random((batch, d_in))
        w_enc = rng.standard_normal((hidden, d_in)) * 0.5
        b_enc = rng.standard_normal(hidden) * 0.5
        w_dec = rng.standard_normal((d_in, hidden)) * 0.5
        b_dec = rng.standard_normal(d_in) * 0.5
        _, grads = reconstruction_loss_and_grads(w_enc, b_enc, w_dec, b_dec, x)
        params = {"w_enc": w_enc, "b_enc": b_enc, "w_dec": w_dec, "b_dec": b_dec}
        for name, value in params.items():
            def loss_at(v, _name=name):
                trial = dict(params)
                trial[_name] = v
                return reconstruction_loss_and_grads(
                    trial["w_enc"], trial["b_enc"], trial["w_dec"], trial["b_dec"], x
                )[0]

            numeric = central_difference(loss_at, value, step=1e-4)
            denom = np.maximum(np.abs(numeric), 1e-8)
            assert (np.abs(grads[name] - numeric) / denom).max() < 1e-3

    def test_divergence_reports_epoch(self):
        rng = np.random.default_rng(2)
        data = rng.random((4, 16)) * 10
        with pytest.raises(TrainingError) as exc:
            train_autoencoder(data, seed=0, epochs=50, learning_rate=1e6, batch_size=2, hidden=4)
        assert exc.value.epoch is not None

    def test_too_few_samples(self):
        with pytest.raises(ArgumentError):
            train_autoencoder([np.zeros(BIT_LENGTH)], seed=0)


class TestCompress:
    def test_zero_model_gives_zero(self):
        model = EncoderModel(
            w_enc=np.zeros((64, BIT_LENGTH)),
            b_enc=np.zeros(64),
            w_dec=np.zeros((BIT_LENGTH, 64)),
            b_dec=np.zeros(BIT_LENGTH),
            seed=0,
            learning_rate=0.0,
            epochs=0,
            batch_size=1,
        )
        assert np.array_equal(compress(model, np.ones(BIT_LENGTH)), np.zeros(64))

    def test_matches_straight_line_formula(self):
        rng = np.random.default_rng(33)
        model = EncoderModel(
            w_enc=rng.standard_normal((64, BIT_LENGTH)) * 0.05,
            b_enc=rng.standard_normal(64) * 0.05,
            w_dec=rng.standard_normal((BIT_LENGTH, 64)),
            b_dec=rng.standard_normal(BIT_LENGTH),
            seed=33,
            learning_rate=0.0,
            epochs=0,
            batch_size=1,
        )
        x = rng.random(BIT_LENGTH)
        expected = np.tanh(model.w_enc @ x + model.b_enc)
        got = compress(model, x)
        assert np.allclose(got, expected, atol=0, rtol=0)
        assert (np.abs(got) < 1.0).all()

    def test_model_round_trip(self, tmp_path):
        rng = np.random.default_rng(4)
        data = rng.random((4, 32))
        model = train_autoencoder(data, seed=2, epochs=2, learning_rate=0.05, batch_size=2, hidden=8)
        path = tmp_path / "model.json"
        save_model(model, path)
        loaded = load_model(path)
        assert np.array_equal(loaded.w_enc, model.w_enc)
        assert loaded.loss_history == model.loss_history
        x = rng.random(32)
        assert np.array_equal(compress(loaded, x), compress(model, x))


class TestRandomProjection:
    def test_zero_input(self):
        assert np.array_equal(random_projection(3, np.zeros(BIT_LENGTH)), np.zeros(64))

    def test_linearity(self):
        rng = np.random.default_rng(8)
        x, y = rng.random(BIT_LENGTH), rng.random(BIT_LENGTH)
        lhs = random_projection(3, x + y)
        rhs = random_projection(3, x) + random_projection(3, y)
        assert np.abs(lhs - rhs).max() < 1e-9

    def test_cross_process_determinism(self):
        import subprocess
        import sys

        code = (
            "import numpy as np"
            "\nfrom cfgkit.featurize import random_projection"
            "\nx = np.arange(439, dtype=float) / 439.0"
            "\nprint(repr(random_projection(42, x)[:5].tolist()))"
        )
        outs = {
            subprocess.run(
                [sys.executable, "-c", code], capture_output=True, text=True, check=True
            ).stdout
            for _ in range(2)
        }
        assert len(outs) == 1
