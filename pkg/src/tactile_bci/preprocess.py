"""Raw 1000 Hz epochs to 100 Hz feature windows.

The chain, in order: band-pass 1-10 Hz, notch 48-52 Hz (both windowed-sinc
FIR, applied forward-backward for zero phase), re-reference to the mastoid
average, baseline correction on the pre-stimulus interval, decimation to
100 Hz. Feature extraction then keeps the 0.1-0.5 s window on the 44
retained channels.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .layout import ChannelLayout
from .scheduler import StimulusSpec

EPOCH_PRE_MS = 100
EPOCH_POST_MS = 700
FEATURE_START_MS = 100
FEATURE_STOP_MS = 500
DECIM_FACTOR = 10

LABEL_TARGET = "target"
LABEL_NONTARGET = "nontarget"
LABEL_UNKNOWN = "unknown"
_LABELS = (LABEL_TARGET, LABEL_NONTARGET, LABEL_UNKNOWN)


@dataclass(frozen=True)
class Epoch:
    """One stimulus-locked segment, channels x samples, in microvolts."""

    data: np.ndarray
    t0_ms: float
    fs_hz: float
    channels: tuple[str, ...]
    stimulus: StimulusSpec | None = None
    label: str = LABEL_UNKNOWN

    def __post_init__(self):
        if self.label not in _LABELS:
            raise ValueError(f"label must be one of {_LABELS}")
        if self.data.ndim != 2 or self.data.shape[0] != len(self.channels):
            raise ValueError("data must be channels x samples matching the channel list")

    @property
    def n_samples(self) -> int:
        return self.data.shape[1]

    def times_ms(self) -> np.ndarray:
        return self.t0_ms + np.arange(self.n_samples) * 1000.0 / self.fs_hz

    def channel(self, name: str) -> np.ndarray:
        return self.data[self.channels.index(name)]


@dataclass(frozen=True)
class EpochSet:
    epochs: tuple[Epoch, ...]

    def __len__(self) -> int:
        return len(self.epochs)

    def __iter__(self):
        return iter(self.epochs)

    def __getitem__(self, i: int) -> Epoch:
        return self.epochs[i]

    def stack(self) -> np.ndarray:
        """(n_epochs, channels, samples) array; epochs must share geometry."""
        return np.stack([e.data for e in self.epochs])

    def labels(self) -> tuple[str, ...]:
        return tuple(e.label for e in self.epochs)


@dataclass(frozen=True)
class FirFilter:
    coefficients: np.ndarray
    description: str

    @property
    def n_taps(self) -> int:
        return len(self.coefficients)

    def response_at(self, freqs_hz, fs_hz: float) -> np.ndarray:
        """Complex frequency response, evaluated by direct DTFT of the taps."""
        freqs = np.atleast_1d(np.asarray(freqs_hz, dtype=float))
        k = np.arange(self.n_taps)
        phase = -2j * np.pi * np.outer(freqs, k) / fs_hz
        return np.exp(phase) @ self.coefficients


def _hamming(n: int) -> np.ndarray:
    k = np.arange(n)
    return 0.54 - 0.46 * np.cos(2.0 * np.pi * k / (n - 1))


def _lowpass_taps(cutoff_hz: float, fs_hz: float, n_taps: int) -> np.ndarray:
    """Hamming-windowed sinc low-pass, normalized to unity DC gain."""
    m = np.arange(n_taps) - (n_taps - 1) / 2.0
    h = 2.0 * cutoff_hz / fs_hz * np.sinc(2.0 * cutoff_hz * m / fs_hz)
    h *= _hamming(n_taps)
    h /= h.sum()
    # enforce exact coefficient symmetry so a reversed pass equals a forward pass
    return 0.5 * (h + h[::-1])


def _check_band(low_hz: float, high_hz: float, fs_hz: float, n_taps: int) -> None:
    if n_taps % 2 == 0 or n_taps < 3:
        raise ValueError("n_taps must be odd and >= 3")
    if not (0.0 < low_hz < high_hz < fs_hz / 2.0):
        raise ValueError("band edges must satisfy 0 < low < high < Nyquist")


def design_bandpass(low_hz: float, high_hz: float, fs_hz: float = 1000.0,
                    n_taps: int = 501) -> FirFilter:
    _check_band(low_hz, high_hz, fs_hz, n_taps)
    h = _lowpass_taps(high_hz, fs_hz, n_taps) - _lowpass_taps(low_hz, fs_hz, n_taps)
    return FirFilter(h, f"bandpass {low_hz}-{high_hz} Hz, {n_taps} taps")


def design_bandstop(low_hz: float, high_hz: float, fs_hz: float = 1000.0,
                    n_taps: int = 501) -> FirFilter:
    _check_band(low_hz, high_hz, fs_hz, n_taps)
    h = -(_lowpass_taps(high_hz, fs_hz, n_taps) - _lowpass_taps(low_hz, fs_hz, n_taps))
    h[(n_taps - 1) // 2] += 1.0
    return FirFilter(h, f"bandstop {low_hz}-{high_hz} Hz, {n_taps} taps")


def design_fir(kind: str, fs_hz: float = 1000.0, n_taps: int = 501) -> FirFilter:
    """The two filters used by the pipeline: 'bandpass' (1-10 Hz) or 'bandstop' (48-52 Hz)."""
    if kind == "bandpass":
        return design_bandpass(1.0, 10.0, fs_hz, n_taps)
    if kind == "bandstop":
        return design_bandstop(48.0, 52.0, fs_hz, n_taps)
    raise ValueError(f"unknown filter kind {kind!r}")


def _next_fast_len(n: int) -> int:
    best = 1 << int(np.ceil(np.log2(n)))
    size = 1
    while size < best:
        s3 = size
        while s3 < best:
            s5 = s3
            while s5 < best:
                if s5 >= n:
                    best = s5
                s5 *= 5
            s3 *= 3
        size *= 2
    return best


def filter_zero_phase(signal: np.ndarray, fir: FirFilter, method: str = "fft") -> np.ndarray:
    """Forward-backward filtering with reflection padding of one filter length.

    Accepts a 1-D signal or a channels x samples matrix. The two passes
    cancel the linear phase, so features keep their latencies. The 'direct'
    method applies np.convolve literally per pass and exists as the oracle
    for the batched 'fft' path.
    """
    x = np.asarray(signal, dtype=float)
    squeeze = x.ndim == 1
    if squeeze:
        x = x[None, :]
    if x.ndim != 2:
        raise ValueError("signal must be 1-D or 2-D (channels x samples)")
    n = x.shape[1]
    h = fir.coefficients
    n_taps = fir.n_taps
    if n <= n_taps:
        raise ValueError(f"signal length {n} must exceed the filter length {n_taps}")

    pad = n_taps
    xe = np.concatenate([x[:, pad:0:-1], x, x[:, -2:-pad - 2:-1]], axis=1)

    if method == "direct":
        out = np.empty_like(xe)
        for i, row in enumerate(xe):
            fwd = np.convolve(row, h, mode="same")
            out[i] = np.convolve(fwd[::-1], h, mode="same")[::-1]
        y = out[:, pad:pad + n]
    elif method == "fft":
        # forward-backward with symmetric taps equals one convolution with h*h;
        # the 'same' crop of that double convolution starts at offset n_taps - 1.
        # n_fft of just the padded length suffices: circular wraparound only
        # contaminates the first full_len - n_fft <= 2 (n_taps - 1) samples,
        # and the crop starts at (n_taps - 1) + pad = 2 n_taps - 1, past it.
        n_fft = _next_fast_len(xe.shape[1])
        spec = np.fft.rfft(xe, n_fft)
        hf = np.fft.rfft(h, n_fft)
        spec *= hf * hf
        full2 = np.fft.irfft(spec, n_fft)
        start = (n_taps - 1) + pad
        y = full2[:, start:start + n]
    else:
        raise ValueError(f"unknown method {method!r}")
    return y[0] if squeeze else y


def rereference(epoch: Epoch, layout: ChannelLayout) -> Epoch:
    """Subtract the mastoid average from every channel, then drop the mastoids."""
    ref_a, ref_b = layout.reference_channels
    if ref_a not in epoch.channels or ref_b not in epoch.channels:
        raise ValueError(f"epoch lacks reference channels {ref_a}/{ref_b}")
    ia = epoch.channels.index(ref_a)
    ib = epoch.channels.index(ref_b)
    ref = 0.5 * (epoch.data[ia] + epoch.data[ib])
    keep = [i for i in range(len(epoch.channels)) if i not in (ia, ib)]
    data = epoch.data[keep] - ref
    channels = tuple(epoch.channels[i] for i in keep)
    return replace(epoch, data=data, channels=channels)


def baseline_correct(epoch: Epoch) -> Epoch:
    """Remove the per-channel mean of the pre-stimulus interval [t0, 0)."""
    if epoch.t0_ms >= 0:
        raise ValueError("epoch has no pre-stimulus interval")
    mask = epoch.times_ms() < 0
    baseline = epoch.data[:, mask].mean(axis=1, keepdims=True)
    return replace(epoch, data=epoch.data - baseline)


def decimate(epoch: Epoch, factor: int = DECIM_FACTOR) -> Epoch:
    """Keep every factor-th sample starting at the first."""
    if int(factor) != factor or factor < 1:
        raise ValueError("decimation factor must be a positive integer")
    factor = int(factor)
    if epoch.fs_hz % factor != 0:
        raise ValueError(f"fs {epoch.fs_hz} is not divisible by factor {factor}")
    return replace(epoch, data=epoch.data[:, ::factor].copy(), fs_hz=epoch.fs_hz / factor)


def feature_window_channels(layout: ChannelLayout) -> tuple[str, ...]:
    return layout.feature_channels()


def extract_feature_window(epoch: Epoch, layout: ChannelLayout) -> np.ndarray:
    """44 x 40 matrix: retained channels over t in [100, 500) ms at 100 Hz."""
    fs_target = layout.fs_hz / DECIM_FACTOR
    if epoch.fs_hz != fs_target:
        raise ValueError(f"expected a {fs_target:g} Hz epoch, got {epoch.fs_hz:g} Hz")
    times = epoch.times_ms()
    mask = (times >= FEATURE_START_MS) & (times < FEATURE_STOP_MS)
    feature_names = layout.feature_channels()
    wanted = set(feature_names)
    keep = [i for i, name in enumerate(epoch.channels) if name in wanted]
    window = epoch.data[np.ix_(keep, np.flatnonzero(mask))]
    expected = (len(feature_names),
                int((FEATURE_STOP_MS - FEATURE_START_MS) * fs_target / 1000.0))
    if window.shape != expected:
        raise ValueError(f"feature window shape {window.shape}, expected {expected}")
    return window


def preprocess_epoch(epoch: Epoch, layout: ChannelLayout,
                     bandpass: FirFilter, notch: FirFilter) -> Epoch:
    """Full chain on one raw epoch; window extraction is deferred to feature building."""
    filtered = filter_zero_phase(epoch.data, bandpass)
    filtered = filter_zero_phase(filtered, notch)
    out = replace(epoch, data=filtered)
    out = rereference(out, layout)
    out = baseline_correct(out)
    return decimate(out)


def cut_epoch_at(data: np.ndarray, fs: float, channels, stimulus,
                 onset_sample: int, is_target: bool) -> Epoch:
    """One raw epoch spanning -100..+700 ms around a known onset sample."""
    pre = int(EPOCH_PRE_MS * fs / 1000.0)
    post = int(EPOCH_POST_MS * fs / 1000.0)
    start, stop = onset_sample - pre, onset_sample + post + 1
    if start < 0 or stop > data.shape[1]:
        raise ValueError(f"stimulus at {stimulus.onset_ms} ms overruns the recording")
    return Epoch(
        data=data[:, start:stop].copy(),
        t0_ms=-float(EPOCH_PRE_MS),
        fs_hz=fs,
        channels=tuple(channels),
        stimulus=stimulus,
        label=LABEL_TARGET if is_target else LABEL_NONTARGET,
    )


def cut_epochs(recording, layout: ChannelLayout, target: int | None = None) -> EpochSet:
    """Raw epochs spanning -100..+700 ms around every stimulus in a recording.

    Labels come from the recording's ground-truth attended flags; pass
    target to label by schedule target instead (identical whenever the
    subject attends the cue).
    """
    epochs = []
    for event in recording.events:
        if target is None:
            is_target = event.attended
        else:
            is_target = event.stimulus.vibrator == target
        epochs.append(cut_epoch_at(recording.data, recording.fs_hz, recording.channels,
                                   event.stimulus, recording.onset_sample(event.stimulus),
                                   is_target))
    return EpochSet(tuple(epochs))


def preprocess_epochs(epochs: EpochSet, layout: ChannelLayout,
                      bandpass: FirFilter, notch: FirFilter) -> EpochSet:
    """Batched chain: all epochs filtered in one FFT pass per filter."""
    if len(epochs) == 0:
        return epochs
    first = epochs[0]
    stack = epochs.stack()
    n, c, s = stack.shape
    flat = stack.reshape(n * c, s)
    flat = filter_zero_phase(flat, bandpass)
    flat = filter_zero_phase(flat, notch)
    stack = flat.reshape(n, c, s)
    out = []
    for e, data in zip(epochs, stack):
        stage = replace(e, data=data)
        stage = rereference(stage, layout)
        stage = baseline_correct(stage)
        out.append(decimate(stage))
    return EpochSet(tuple(out))
