"""Instruction bit-field featurization and block-feature compression.

Each pre-parsed instruction record is packed into a fixed 439-bit vector,
block features are the mean of the block's instruction vectors, and a small
tanh/linear autoencoder (trained with hand-derived SGD gradients) compresses
block features to 64 dimensions.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from cfgkit.errors import ArgumentError, EncodingError, ParseError, TrainingError, ValidationError

INS_SCHEMA = "cfgkit-ins/1"
BIT_LENGTH = 439
EMBED_DIM = 64
MAX_MNEMONIC_CLASSES = 200
FIELD_WIDTHS = (1, 2, 4, 8)

# Twelve legacy prefixes with a dedicated presence flag: LOCK, REPNE, REP,
# the six segment overrides, operand-size, address-size, and WAIT.
PREFIX_FLAG_BYTES = (0xF0, 0xF2, 0xF3, 0x2E, 0x36, 0x3E, 0x26, 0x64, 0x65, 0x66, 0x67, 0x9B)

# (name, start, width); tiles [0, 439) with no gap or overlap.
LAYOUT = (
    ("prefix_flags", 0, 12),
    ("prefix_bytes", 12, 32),
    ("rex_present", 44, 1),
    ("rex_byte", 45, 8),
    ("opcode_len", 53, 2),
    ("opcode_bytes", 55, 24),
    ("modrm_present", 79, 1),
    ("modrm_byte", 80, 8),
    ("sib_present", 88, 1),
    ("sib_byte", 89, 8),
    ("disp_present", 97, 1),
    ("disp_width", 98, 2),
    ("disp_value", 100, 64),
    ("imm_present", 164, 1),
    ("imm_width", 165, 2),
    ("imm_value", 167, 64),
    ("mnemonic_onehot", 231, 200),
    ("operand_count", 431, 3),
    ("length", 434, 5),
)

FIELD_RANGE = {name: (start, start + width) for name, start, width in LAYOUT}


def layout_is_complete() -> bool:
    """Static self-check: fields tile [0, BIT_LENGTH) exactly."""
    covered = sorted((start, start + width) for _, start, width in LAYOUT)
    pos = 0
    for start, end in covered:
        if start != pos:
            return False
        pos = end
    return pos == BIT_LENGTH


@dataclass(frozen=True)
class FieldValue:
    """Displacement or immediate payload: a value and its width in bytes."""

    value: int
    width: int


@dataclass(frozen=True)
class InstructionRecord:
    opcode: tuple[int, ...]
    mnemonic: str
    length: int
    legacy_prefixes: tuple[int, ...] = ()
    rex: int | None = None
    modrm: int | None = None
    sib: int | None = None
    displacement: FieldValue | None = None
    immediate: FieldValue | None = None
    operand_count: int = 0


def _parse_byte(value, where: str) -> int:
    if isinstance(value, str):
        try:
            b = int(value, 16)
        except ValueError as e:
            raise ParseError(f"{where}: {value!r} is not a hex byte") from e
    else:
        b = int(value)
    if not (0 <= b <= 0xFF):
        raise ParseError(f"{where}: byte {value!r} out of range")
    return b


def parse_instruction(doc: Mapping, where: str = "<ins>") -> InstructionRecord:
    """Build an InstructionRecord from one `cfgkit-ins/1` JSON object
    (byte-valued fields arrive as hex strings)."""

    def field_value(key: str) -> FieldValue | None:
        raw = doc.get(key)
        if raw is None:
            return None
        return FieldValue(value=int(raw["value"]), width=int(raw["width"]))

    try:
        return InstructionRecord(
            opcode=tuple(_parse_byte(b, f"{where}.opcode") for b in doc["opcode"]),
            mnemonic=str(doc["mnemonic"]),
            length=int(doc["length"]),
            legacy_prefixes=tuple(
                _parse_byte(b, f"{where}.legacy_prefixes") for b in doc.get("legacy_prefixes", [])
            ),
            rex=None if doc.get("rex") is None else _parse_byte(doc["rex"], f"{where}.rex"),
            modrm=None if doc.get("modrm") is None else _parse_byte(doc["modrm"], f"{where}.modrm"),
            sib=None if doc.get("sib") is None else _parse_byte(doc["sib"], f"{where}.sib"),
            displacement=field_value("displacement"),
            immediate=field_value("immediate"),
            operand_count=int(doc.get("operand_count", 0)),
        )
    except (KeyError, TypeError, ValueError) as e:
        raise ParseError(f"{where}: malformed instruction record ({e})") from e


def parse_instruction_lines(path: str | Path) -> list[InstructionRecord]:
    records = []
    for i, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines()):
        if not line.strip():
            continue
        try:
            doc = json.loads(line)
        except json.JSONDecodeError as e:
            raise ParseError(f"{path}:{i + 1}: invalid JSON") from e
        records.append(parse_instruction(doc, where=f"{path}:{i + 1}"))
    return records


def load_mnemonic_table(path: str | Path) -> dict[str, int]:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(doc, dict):
        raise ParseError(f"{path}: mnemonic table must be a JSON object")
    return {str(k): int(v) for k, v in doc.items()}


def _set_bits(bits: np.ndarray, field_name: str, value: int) -> None:
    """Zero-extend `value` little-endian into the field's bit range."""
    start, end = FIELD_RANGE[field_name]
    width = end - start
    if value < 0 or value >= (1 << width):
        raise EncodingError(f"value {value} does not fit field {field_name} ({width} bits)")
    for j in range(width):
        if (value >> j) & 1:
            bits[start + j] = 1


def _payload_raw(fv: FieldValue, name: str) -> int:
    if fv.width not in FIELD_WIDTHS:
        raise EncodingError(f"{name} width must be one of {FIELD_WIDTHS}, got {fv.width}")
    span = 1 << (8 * fv.width)
    if not (-(span // 2) <= fv.value < span):
        raise EncodingError(f"{name} value {fv.value} does not fit {fv.width} bytes")
    return fv.value & (span - 1)


def encode_instruction(ins: InstructionRecord, mnemonic_table: Mapping[str, int]) -> np.ndarray:
    """Pack one instruction into the 439-bit layout (uint8 0/1 vector).

    Absent optional fields leave their presence flag and payload all zero;
    unknown mnemonics leave the one-hot region all zero.
    """
    if len(mnemonic_table) > MAX_MNEMONIC_CLASSES:
        raise ArgumentError(
            f"mnemonic table has {len(mnemonic_table)} classes, max {MAX_MNEMONIC_CLASSES}"
        )
    if not (1 <= len(ins.opcode) <= 3):
        raise EncodingError(f"opcode must be 1-3 bytes, got {len(ins.opcode)}")
    if not (0 <= ins.operand_count <= 7):
        raise EncodingError(f"operand_count must be 0-7, got {ins.operand_count}")
    if not (1 <= ins.length <= 31):
        raise EncodingError(f"instruction length must be 1-31, got {ins.length}")
    if len(ins.legacy_prefixes) > 4:
        raise EncodingError(f"at most 4 legacy prefixes, got {len(ins.legacy_prefixes)}")
    for b in (*ins.legacy_prefixes, *ins.opcode):
        if not (0 <= b <= 0xFF):
            raise EncodingError(f"byte {b} out of range")

    bits = np.zeros(BIT_LENGTH, dtype=np.uint8)
    flags = 0
    for i, known in enumerate(PREFIX_FLAG_BYTES):
        if known in ins.legacy_prefixes:
            flags |= 1 << i
    _set_bits(bits, "prefix_flags", flags)
    raw = 0
    for i, b in enumerate(ins.legacy_prefixes):
        raw |= b << (8 * i)
    _set_bits(bits, "prefix_bytes", raw)
    if ins.rex is not None:
        if not (0 <= ins.rex <= 0xFF):
            raise EncodingError(f"rex byte {ins.rex} out of range")
        _set_bits(bits, "rex_present", 1)
        _set_bits(bits, "rex_byte", ins.rex)
    _set_bits(bits, "opcode_len", len(ins.opcode) - 1)
    raw = 0
    for i, b in enumerate(ins.opcode):
        raw |= b << (8 * i)
    _set_bits(bits, "opcode_bytes", raw)
    if ins.modrm is not None:
        _set_bits(bits, "modrm_present", 1)
        _set_bits(bits, "modrm_byte", ins.modrm)
    if ins.sib is not None:
        _set_bits(bits, "sib_present", 1)
        _set_bits(bits, "sib_byte", ins.sib)
    if ins.displacement is not None:
        _set_bits(bits, "disp_present", 1)
        _set_bits(bits, "disp_width", ins.displacement.width.bit_length() - 1)
        _set_bits(bits, "disp_value", _payload_raw(ins.displacement, "displacement"))
    if ins.immediate is not None:
        _set_bits(bits, "imm_present", 1)
        _set_bits(bits, "imm_width", ins.immediate.width.bit_length() - 1)
        _set_bits(bits, "imm_value", _payload_raw(ins.immediate, "immediate"))
    cls = mnemonic_table.get(ins.mnemonic)
    if cls is not None:
        if not (0 <= cls < MAX_MNEMONIC_CLASSES):
            raise ArgumentError(f"mnemonic class {cls} out of range 0..{MAX_MNEMONIC_CLASSES - 1}")
        start, _ = FIELD_RANGE["mnemonic_onehot"]
        bits[start + cls] = 1
    _set_bits(bits, "operand_count", ins.operand_count)
    _set_bits(bits, "length", ins.length)
    return bits


def block_feature(instruction_bits: Sequence[np.ndarray]) -> np.ndarray:
    """Component-wise mean of a block's instruction bit vectors."""
    if len(instruction_bits) == 0:
        raise ArgumentError("a block must contain at least one instruction")
    stack = np.stack([np.asarray(b, dtype=np.float64) for b in instruction_bits])
    if stack.shape[1] != BIT_LENGTH:
        raise ValidationError(f"instruction vectors must have length {BIT_LENGTH}")
    return stack.mean(axis=0)


# -- autoencoder ----------------------------------------------------------------


@dataclass
class EncoderModel:
    """tanh encoder / linear decoder pair with its training provenance."""

    w_enc: np.ndarray  # (hidden, d_in)
    b_enc: np.ndarray  # (hidden,)
    w_dec: np.ndarray  # (d_in, hidden)
    b_dec: np.ndarray  # (d_in,)
    seed: int
    learning_rate: float
    epochs: int
    batch_size: int
    loss_history: tuple[float, ...] = ()


def _init_params(rng: np.random.Generator, d_in: int, hidden: int):
    def uniform(shape, fan_in):
        bound = 1.0 / math.sqrt(fan_in)
        return rng.uniform(-bound, bound, size=shape)

    w_enc = uniform((hidden, d_in), d_in)
    b_enc = uniform((hidden,), d_in)
    w_dec = uniform((d_in, hidden), hidden)
    b_dec = uniform((d_in,), hidden)
    return w_enc, b_enc, w_dec, b_dec


def reconstruction_loss_and_grads(w_enc, b_enc, w_dec, b_dec, x):
    """Mean-squared reconstruction loss over a batch, with analytic gradients.

    Forward: h = tanh(x W_enc^T + b_enc), xhat = h W_dec^T + b_dec,
    loss = mean over every entry of (xhat - x)^2.
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    batch, d_in = x.shape
    h = np.tanh(x @ w_enc.T + b_enc)
    xhat = h @ w_dec.T + b_dec
    diff = xhat - x
    loss = float(np.mean(diff**2))
    g_out = 2.0 * diff / (batch * d_in)
    g_w_dec = g_out.T @ h
    g_b_dec = g_out.sum(axis=0)
    g_h = g_out @ w_dec
    g_pre = g_h * (1.0 - h**2)
    g_w_enc = g_pre.T @ x
    g_b_enc = g_pre.sum(axis=0)
    return loss, {"w_enc": g_w_enc, "b_enc": g_b_enc, "w_dec": g_w_dec, "b_dec": g_b_dec}


def train_autoencoder(
    data: Sequence[Sequence[float]],
    seed: int,
    epochs: int = 50,
    learning_rate: float = 0.05,
    batch_size: int = 16,
    hidden: int = EMBED_DIM,
) -> EncoderModel:
    """Plain seeded SGD on mean-squared reconstruction error.

    Deterministic: seeded uniform init (bound 1/sqrt(fan_in)) and seeded
    shuffling give bitwise-identical parameter trajectories per seed. The
    full-dataset loss is recorded before training and after each epoch.
    """
    x = np.asarray(data, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ArgumentError("training needs at least 2 samples")
    if learning_rate <= 0:
        raise ArgumentError(f"learning rate must be > 0, got {learning_rate}")
    if epochs < 1 or batch_size < 1:
        raise ArgumentError("epochs and batch_size must be >= 1")
    n, d_in = x.shape
    rng = np.random.default_rng(seed)
    w_enc, b_enc, w_dec, b_dec = _init_params(rng, d_in, hidden)
    losses = [reconstruction_loss_and_grads(w_enc, b_enc, w_dec, b_dec, x)[0]]
    for epoch in range(epochs):
        order = rng.permutation(n)
        with np.errstate(over="ignore", invalid="ignore"):
            for start in range(0, n, batch_size):
                batch = x[order[start : start + batch_size]]
                _, grads = reconstruction_loss_and_grads(w_enc, b_enc, w_dec, b_dec, batch)
                w_enc -= learning_rate * grads["w_enc"]
                b_enc -= learning_rate * grads["b_enc"]
                w_dec -= learning_rate * grads["w_dec"]
                b_dec -= learning_rate * grads["b_dec"]
            loss = reconstruction_loss_and_grads(w_enc, b_enc, w_dec, b_dec, x)[0]
        if not math.isfinite(loss):
            raise TrainingError(f"loss diverged at epoch {epoch}", epoch=epoch)
        losses.append(loss)
    return EncoderModel(
        w_enc=w_enc,
        b_enc=b_enc,
        w_dec=w_dec,
        b_dec=b_dec,
        seed=seed,
        learning_rate=learning_rate,
        epochs=epochs,
        batch_size=batch_size,
        loss_history=tuple(losses),
    )


def compress(model: EncoderModel, x: Sequence[float]) -> np.ndarray:
    """Encoder half only: tanh(W_enc x + b_enc); components lie in (-1, 1)."""
    x = np.asarray(x, dtype=np.float64)
    return np.tanh(model.w_enc @ x + model.b_enc)


def random_projection(seed: int, x: Sequence[float], out_dim: int = EMBED_DIM) -> np.ndarray:
    """Training-free fallback: a fixed seeded Gaussian map scaled by 1/sqrt(d_in)."""
    x = np.asarray(x, dtype=np.float64)
    rng = np.random.default_rng(seed)
    matrix = rng.standard_normal((out_dim, x.shape[0])) / math.sqrt(x.shape[0])
    return matrix @ x


def save_model(model: EncoderModel, path: str | Path) -> None:
    doc = {
        "schema": "cfgkit-encoder/1",
        "w_enc": model.w_enc.tolist(),
        "b_enc": model.b_enc.tolist(),
        "w_dec": model.w_dec.tolist(),
        "b_dec": model.b_dec.tolist(),
        "seed": model.seed,
        "learning_rate": model.learning_rate,
        "epochs": model.epochs,
        "batch_size": model.batch_size,
        "loss_history": list(model.loss_history),
    }
    Path(path).write_text(json.dumps(doc, sort_keys=True) + "\n", encoding="utf-8")


def load_model(path: str | Path) -> EncoderModel:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("schema") != "cfgkit-encoder/1":
        raise ParseError(f"{path}: expected schema cfgkit-encoder/1")
    return EncoderModel(
        w_enc=np.asarray(doc["w_enc"], dtype=np.float64),
        b_enc=np.asarray(doc["b_enc"], dtype=np.float64),
        w_dec=np.asarray(doc["w_dec"], dtype=np.float64),
        b_dec=np.asarray(doc["b_dec"], dtype=np.float64),
        seed=int(doc["seed"]),
        learning_rate=float(doc["learning_rate"]),
        epochs=int(doc["epochs"]),
        batch_size=int(doc["batch_size"]),
        loss_history=tuple(float(v) for v in doc.get("loss_history", [])),
    )
