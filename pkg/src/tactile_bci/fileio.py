"""Artifact persistence: recordings, epoch sets, models, traces, reports.

Binary containers are self-describing (magic, version, geometry, channel
names, config hash) with float32 channel-major payloads. Text artifacts
use repr-precision floats so parsing them back is lossless. All writes go
through a temp-file-then-rename so a crashed run never leaves a torn file.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile

import numpy as np

from .classifier import LinearSvmModel, Standardizer
from .decoder import DecodeDecision, RunOutcome
from .layout import ChannelLayout
from .model import DecoderModel
from .preprocess import Epoch, EpochSet
from .scheduler import StimulusSpec
from .synth import ContinuousRecording, StimulusEvent
from .xdawn import SpatialFilterBank

RECORDING_MAGIC = b"EEGR"
MODEL_MAGIC = b"P3MD"
FORMAT_VERSION = 1


class DataError(RuntimeError):
    """Missing, corrupt, or inconsistent artifact data (CLI exit code 3)."""


def atomic_write_bytes(path: str, payload: bytes) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path: str, text: str) -> None:
    atomic_write_bytes(path, text.encode())


def _pack_str(s: str) -> bytes:
    raw = s.encode()
    return struct.pack("<H", len(raw)) + raw


class _Reader:
    def __init__(self, payload: bytes):
        self.payload = payload
        self.offset = 0

    def take(self, n: int) -> bytes:
        if self.offset + n > len(self.payload):
            raise DataError("container truncated")
        out = self.payload[self.offset:self.offset + n]
        self.offset += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def take_str(self) -> str:
        (n,) = self.unpack("<H")
        return self.take(n).decode()


def _matrix_container(data: np.ndarray, fs_hz: float, channels, config_hash: str) -> bytes:
    n_channels, n_samples = data.shape
    parts = [RECORDING_MAGIC, struct.pack("<IIQd", FORMAT_VERSION, n_channels, n_samples, fs_hz)]
    parts.append(_pack_str(config_hash))
    for name in channels:
        parts.append(_pack_str(name))
    parts.append(np.ascontiguousarray(data, dtype=np.float32).tobytes())
    return b"".join(parts)


def _read_matrix_container(payload: bytes):
    r = _Reader(payload)
    if r.take(4) != RECORDING_MAGIC:
        raise DataError("not a recording container (bad magic)")
    version, n_channels, n_samples, fs_hz = r.unpack("<IIQd")
    if version != FORMAT_VERSION:
        raise DataError(f"unsupported container version {version}")
    config_hash = r.take_str()
    channels = tuple(r.take_str() for _ in range(n_channels))
    raw = r.take(4 * n_channels * n_samples)
    data = np.frombuffer(raw, dtype=np.float32).reshape(n_channels, n_samples).astype(float)
    return data, fs_hz, channels, config_hash


def save_recording(path: str, recording: ContinuousRecording, config_hash: str = "") -> None:
    atomic_write_bytes(path, _matrix_container(
        recording.data, recording.fs_hz, recording.channels, config_hash))
    events = [f"# kind=events lead_in_ms={recording.lead_in_ms}"]
    for ev in recording.events:
        s = ev.stimulus
        events.append(f"{s.round_index},{s.onset_ms},{s.vibrator},{int(ev.attended)}")
    atomic_write_text(path + ".events", "\n".join(events) + "\n")


def load_recording(path: str) -> tuple[ContinuousRecording, str]:
    with open(path, "rb") as fh:
        data, fs_hz, channels, config_hash = _read_matrix_container(fh.read())
    try:
        with open(path + ".events") as fh:
            lines = [ln.strip() for ln in fh if ln.strip()]
    except FileNotFoundError:
        raise DataError(f"missing events sidecar for {path}") from None
    header = dict(kv.split("=", 1) for kv in lines[0].lstrip("# ").split())
    if header.get("kind") != "events":
        raise DataError("events sidecar has a bad header")
    lead_in = int(header["lead_in_ms"])
    events = []
    for ln in lines[1:]:
        rnd, onset, vib, attended = (int(t) for t in ln.split(","))
        events.append(StimulusEvent(
            stimulus=StimulusSpec(vibrator=vib, onset_ms=onset, round_index=rnd),
            attended=bool(attended)))
    recording = ContinuousRecording(data=data, fs_hz=fs_hz, channels=channels,
                                    events=tuple(events), lead_in_ms=lead_in)
    return recording, config_hash


def save_epochs(path: str, epochs: EpochSet, config_hash: str = "") -> None:
    """Epoch stack in the matrix container plus a text manifest alongside."""
    if len(epochs) == 0:
        raise DataError("refusing to save an empty epoch set")
    first = epochs[0]
    stack = epochs.stack()
    n, c, s = stack.shape
    # channel-major like a recording: each channel holds its epochs concatenated
    flat = stack.transpose(1, 0, 2).reshape(c, n * s)
    atomic_write_bytes(path, _matrix_container(flat, first.fs_hz, first.channels, config_hash))
    lines = [f"# n_epochs={n} samples_per_epoch={s} t0_ms={first.t0_ms!r} fs_hz={first.fs_hz!r}"]
    for i, e in enumerate(epochs):
        stim = e.stimulus
        vib = stim.vibrator if stim else 0
        rnd = stim.round_index if stim else -1
        lines.append(f"{i},{e.label},{vib},{rnd}")
    atomic_write_text(path + ".manifest", "\n".join(lines) + "\n")


def load_epochs(path: str) -> tuple[EpochSet, str]:
    with open(path, "rb") as fh:
        flat, fs_hz, channels, config_hash = _read_matrix_container(fh.read())
    try:
        with open(path + ".manifest") as fh:
            lines = [ln.strip() for ln in fh if ln.strip()]
    except FileNotFoundError:
        raise DataError(f"missing manifest for {path}") from None
    header = dict(kv.split("=", 1) for kv in lines[0].lstrip("# ").split())
    n = int(header["n_epochs"])
    s = int(header["samples_per_epoch"])
    t0_ms = float(header["t0_ms"])
    if flat.shape[1] != n * s:
        raise DataError("epoch container geometry does not match its manifest")
    stack = flat.reshape(len(channels), n, s).transpose(1, 0, 2)
    epochs = []
    for ln in lines[1:]:
        idx_s, label, vib_s, rnd_s = ln.split(",")
        idx, vib, rnd = int(idx_s), int(vib_s), int(rnd_s)
        stim = StimulusSpec(vibrator=vib, round_index=rnd, onset_ms=0) if vib else None
        epochs.append(Epoch(data=stack[idx].copy(), t0_ms=t0_ms, fs_hz=fs_hz,
                            channels=channels, stimulus=stim, label=label))
    if len(epochs) != n:
        raise DataError("manifest row count does not match the container")
    return EpochSet(tuple(epochs)), config_hash


def ingest_epochs(container_path: str, layout: ChannelLayout) -> EpochSet:
    """Load an external epoch container, validating geometry against the layout.

    Built for running the decoder on recorded data shaped to the container
    format; channel names and sampling rate must match exactly.
    """
    epochs, _ = load_epochs(container_path)
    if len(epochs) == 0:
        raise DataError("epoch container is empty")
    first = epochs[0]
    missing = [n for n in layout.names if n not in first.channels]
    if missing:
        raise DataError(f"epoch container lacks channels: {', '.join(missing)}")
    extra = [n for n in first.channels if n not in layout.names]
    if extra:
        raise DataError(f"epoch container has unknown channels: {', '.join(extra)}")
    if first.fs_hz != layout.fs_hz:
        raise DataError(f"sampling rate {first.fs_hz} does not match the layout's {layout.fs_hz}")
    return epochs


# --- model files ------------------------------------------------------------

def _pack_block(name: str, arr: np.ndarray) -> bytes:
    arr = np.ascontiguousarray(arr, dtype=np.float64)
    head = _pack_str(name) + struct.pack("<B", arr.ndim)
    head += struct.pack(f"<{arr.ndim}Q", *arr.shape)
    return head + arr.tobytes()


def save_model(path: str, model: DecoderModel) -> None:
    blocks = {
        "xdawn.filters": model.bank.filters,
        "xdawn.eigenvalues": model.bank.eigenvalues,
        "standardizer.mean": model.standardizer.mean,
        "standardizer.sd": model.standardizer.sd,
        "svm.weights": model.svm.weights,
        "svm.bias": np.array([model.svm.bias]),
        "svm.c": np.array([model.svm.c]),
        "svm.duality_gap": np.array([model.svm.duality_gap]),
        "svm.n_sweeps": np.array([float(model.svm.n_sweeps)]),
        "threshold": np.array([model.threshold]),
    }
    parts = [MODEL_MAGIC, struct.pack("<I", FORMAT_VERSION), _pack_str(model.config_hash),
             _pack_str(model.threshold_mode), struct.pack("<I", len(blocks))]
    for name, arr in blocks.items():
        parts.append(_pack_block(name, arr))
    atomic_write_bytes(path, b"".join(parts))
    atomic_write_text(path + ".txt", model_summary(model))


def load_model(path: str) -> DecoderModel:
    try:
        with open(path, "rb") as fh:
            payload = fh.read()
    except FileNotFoundError:
        raise DataError(f"model file not found: {path}") from None
    r = _Reader(payload)
    if r.take(4) != MODEL_MAGIC:
        raise DataError("not a model file (bad magic)")
    (version,) = r.unpack("<I")
    if version != FORMAT_VERSION:
        raise DataError(f"unsupported model version {version}")
    config_hash = r.take_str()
    threshold_mode = r.take_str()
    (n_blocks,) = r.unpack("<I")
    blocks = {}
    for _ in range(n_blocks):
        name = r.take_str()
        (ndim,) = r.unpack("<B")
        shape = r.unpack(f"<{ndim}Q")
        count = int(np.prod(shape)) if ndim else 1
        arr = np.frombuffer(r.take(8 * count), dtype=np.float64).reshape(shape)
        blocks[name] = arr.copy()
    try:
        bank = SpatialFilterBank(filters=blocks["xdawn.filters"],
                                 eigenvalues=blocks["xdawn.eigenvalues"],
                                 n_channels=blocks["xdawn.filters"].shape[1])
        stdzr = Standardizer(mean=blocks["standardizer.mean"], sd=blocks["standardizer.sd"])
        svm = LinearSvmModel(weights=blocks["svm.weights"],
                             bias=float(blocks["svm.bias"][0]),
                             c=float(blocks["svm.c"][0]),
                             duality_gap=float(blocks["svm.duality_gap"][0]),
                             n_sweeps=int(blocks["svm.n_sweeps"][0]))
        threshold = float(blocks["threshold"][0])
    except KeyError as exc:
        raise DataError(f"model file lacks block {exc}") from None
    return DecoderModel(bank=bank, standardizer=stdzr, svm=svm, threshold=threshold,
                        threshold_mode=threshold_mode, config_hash=config_hash)


def model_summary(model: DecoderModel) -> str:
    bank = model.bank
    lines = [
        "decoder model summary",
        f"config_hash: {model.config_hash}",
        f"spatial filters: {bank.filters.shape[0]} x {bank.filters.shape[1]}",
        f"eigenvalues: {', '.join(f'{v:.6g}' for v in bank.eigenvalues)}",
        f"features: {len(model.svm.weights)}",
        f"svm C: {model.svm.c:g}",
        f"svm duality gap: {model.svm.duality_gap:.3e}",
        f"svm sweeps: {model.svm.n_sweeps}",
        f"threshold: {model.threshold!r} ({model.threshold_mode})",
    ]
    return "\n".join(lines) + "\n"


# --- decision traces --------------------------------------------------------

def trace_to_text(outcome: RunOutcome, config_hash: str = "") -> str:
    """One decision per line: round, four scores, detected, outcome tag.

    Scores print at repr precision so parsing reconstructs them exactly.
    """
    header = (f"# target={outcome.target} result={outcome.result} "
              f"attempts={outcome.attempts} threshold={outcome.threshold!r} "
              f"n_rounds={outcome.n_rounds} truncated={int(outcome.truncated)} "
              f"config={config_hash}")
    lines = [header]
    decision_rounds = outcome.decision_rounds()
    terminal = decision_rounds[-1] if decision_rounds else None
    for d in outcome.decisions:
        if not d.is_decision_round:
            tag = "shadow"
        elif d is terminal:
            tag = outcome.result
        else:
            tag = "pending"
        detected = d.detected if d.detected is not None else "-"
        scores = ",".join(repr(s) for s in d.scores)
        lines.append(f"{d.round_index},{scores},{detected},{tag}")
    return "\n".join(lines) + "\n"


def trace_from_text(text: str) -> tuple[RunOutcome, str]:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not lines or not lines[0].startswith("#"):
        raise DataError("trace must start with a header line")
    header = dict(kv.split("=", 1) for kv in lines[0].lstrip("# ").split())
    decisions = []
    for ln in lines[1:]:
        parts = ln.split(",")
        if len(parts) != 7:
            raise DataError(f"bad trace line: {ln!r}")
        round_index = int(parts[0])
        scores = tuple(float(p) for p in parts[1:5])
        detected = None if parts[5] == "-" else int(parts[5])
        decisions.append(DecodeDecision(round_index=round_index, scores=scores,
                                        detected=detected,
                                        is_decision_round=parts[6] != "shadow"))
    outcome = RunOutcome(
        target=int(header["target"]),
        result=header["result"],
        attempts=int(header["attempts"]),
        decisions=tuple(decisions),
        threshold=float(header["threshold"]),
        n_rounds=int(header["n_rounds"]),
        truncated=bool(int(header["truncated"])),
    )
    return outcome, header.get("config", "")


# --- reports ----------------------------------------------------------------

REPORT_CSV_COLUMNS = (
    "condition", "day", "n_trials", "n_success", "success_rate_pct",
    "attempts_mean", "attempts_sd", "amp_mean_uV", "amp_sd_uV", "amp_cv",
    "latency_mean_ms", "latency_sd_ms", "latency_cv", "acc_pct", "fpr_pct",
    "config_hash",
)


def report_to_json(report) -> str:
    return json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n"


def reports_to_csv(reports) -> str:
    def cell(v):
        if v is None:
            return ""
        if isinstance(v, float):
            return repr(v)
        return str(v)

    lines = [",".join(REPORT_CSV_COLUMNS)]
    for report in reports:
        d = report.to_dict()
        lines.append(",".join(cell(d[c]) for c in REPORT_CSV_COLUMNS))
    return "\n".join(lines) + "\n"
