"""Synthetic multi-channel EEG for a simulated attending subject.

A recording is background noise (1/f spectrum plus 10 Hz rhythm plus 50 Hz
line, phase-randomized per channel) with evoked responses added at
stimulus onsets: a small early response for every stimulus and, for
attended stimuli that are not lapsed, a P300 bump with per-stimulus
amplitude and latency jitter, spread over the scalp by a Cz-centered
topography. All randomness derives from named substreams of one seed, and
the per-stimulus streams do not depend on which vibrator is attended, so
two recordings that differ only in attention differ only in which stimuli
carry the P300.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .layout import ChannelLayout, build_layout
from .profiles import SubjectProfile
from .scheduler import StimulationSchedule, StimulusSpec, check_vibrator

LEAD_IN_MS = 100
TAIL_MS = 500
TEMPLATE_SPAN_MS = 700
EXOGENOUS_LATENCY_MS = 100.0
EXOGENOUS_WIDTH_MS = 60.0
_FWHM_TO_SIGMA = 2.0 * np.sqrt(2.0 * np.log(2.0))

_SYNTH_DOMAIN = 0xEE6


@dataclass(frozen=True)
class StimulusEvent:
    stimulus: StimulusSpec
    attended: bool


@dataclass(frozen=True)
class ContinuousRecording:
    data: np.ndarray               # channels x samples, microvolts
    fs_hz: float
    channels: tuple[str, ...]
    events: tuple[StimulusEvent, ...]
    lead_in_ms: int = LEAD_IN_MS

    @property
    def n_samples(self) -> int:
        return self.data.shape[1]

    def onset_sample(self, stimulus: StimulusSpec) -> int:
        return int(round((self.lead_in_ms + stimulus.onset_ms) * self.fs_hz / 1000.0))


def p300_template(amp_uV: float, latency_ms: float, width_ms: float = 150.0,
                  fs_hz: float = 1000.0) -> np.ndarray:
    """Gaussian bump over 0..700 ms: peak amp_uV at latency_ms, FWHM width_ms.

    Zero outside 3 sigma of the peak.
    """
    params = (amp_uV, latency_ms, width_ms, fs_hz)
    if not all(np.isfinite(p) for p in params):
        raise ValueError("template parameters must be finite")
    if amp_uV < 0:
        raise ValueError("amplitude must be non-negative")
    if not 0.0 < latency_ms < TEMPLATE_SPAN_MS:
        raise ValueError("latency must lie inside (0, 700) ms")
    t = np.arange(int(TEMPLATE_SPAN_MS * fs_hz / 1000.0) + 1) * 1000.0 / fs_hz
    sigma = width_ms / _FWHM_TO_SIGMA
    wave = amp_uV * np.exp(-0.5 * ((t - latency_ms) / sigma) ** 2)
    wave[np.abs(t - latency_ms) > 3.0 * sigma] = 0.0
    return wave


def spatial_topography(layout: ChannelLayout, center: str = "Cz",
                       length_scale: float = 0.9) -> np.ndarray:
    """Per-channel gain: exp(-geodesic distance / length_scale), 1 at the center."""
    if length_scale <= 0:
        raise ValueError("length_scale must be positive")
    c = layout.positions[layout.index(center)]
    d = np.arccos(np.clip(layout.positions @ c, -1.0, 1.0))
    return np.exp(-d / length_scale)


def _as_rng(seed_or_rng) -> np.random.Generator:
    if isinstance(seed_or_rng, np.random.Generator):
        return seed_or_rng
    return np.random.default_rng(seed_or_rng)


def background_noise(profile: SubjectProfile, n_samples: int, n_channels: int,
                     seed_or_rng) -> np.ndarray:
    """1/f noise at profile RMS plus alpha and line sinusoids, per channel."""
    rng = _as_rng(seed_or_rng)
    fs = 1000.0
    freqs = np.fft.rfftfreq(n_samples, d=1.0 / fs)
    shape = np.zeros_like(freqs)
    shape[1:] = 1.0 / np.sqrt(freqs[1:])  # amplitude ~ f^-1/2 gives 1/f power

    # draw order is part of the reproducibility contract: all pink-noise
    # phases (channel-major), then per-channel (alpha, line) phase pairs
    phases = rng.uniform(0.0, 2.0 * np.pi, (n_channels, len(freqs)))
    pink = np.fft.irfft(shape * np.exp(1j * phases), n_samples)
    rms = np.sqrt(np.mean(pink ** 2, axis=1, keepdims=True))
    np.divide(pink, rms, out=pink, where=rms > 0)
    pink *= profile.noise_rms_uV

    sin_phases = rng.uniform(0.0, 2.0 * np.pi, (n_channels, 2))
    t = np.arange(n_samples) / fs
    out = pink
    out += profile.alpha_amp_uV * np.sin(
        2.0 * np.pi * 10.0 * t + sin_phases[:, :1])
    out += profile.line_amp_uV * np.sin(
        2.0 * np.pi * 50.0 * t + sin_phases[:, 1:])
    return out


@dataclass(frozen=True)
class EvokedDraw:
    """Per-stimulus generative draw, independent of the attention state."""

    lapsed: bool
    amp_uV: float
    latency_ms: float


def stimulus_draw(profile: SubjectProfile, seed: int, stim_index: int,
                  run_gain: float) -> EvokedDraw:
    rng = np.random.default_rng(
        np.random.SeedSequence([_SYNTH_DOMAIN, int(seed), 2, int(stim_index)]))
    lapse_u = rng.uniform()
    amp = max(0.0, rng.normal(profile.p300_amp_uV, profile.p300_amp_sd_uV)) * run_gain
    latency = float(np.clip(rng.normal(profile.p300_latency_ms, profile.p300_latency_sd_ms),
                            120.0, 650.0))
    return EvokedDraw(lapsed=lapse_u < profile.lapse_prob, amp_uV=amp, latency_ms=latency)


def run_noise_and_gain(profile: SubjectProfile, seed: int, n_samples: int,
                       n_channels: int) -> tuple[np.ndarray, float]:
    noise_rng = np.random.default_rng(np.random.SeedSequence([_SYNTH_DOMAIN, int(seed), 0]))
    noise = background_noise(profile, n_samples, n_channels, noise_rng)
    run_rng = np.random.default_rng(np.random.SeedSequence([_SYNTH_DOMAIN, int(seed), 1]))
    gain = 1.0
    if profile.run_gain_sd > 0:
        gain = max(0.0, run_rng.normal(1.0, profile.run_gain_sd))
    return noise, gain


def recording_length(schedule: StimulationSchedule, fs_hz: float = 1000.0) -> int:
    return int((LEAD_IN_MS + schedule.duration_ms + TAIL_MS) * fs_hz / 1000.0)


def evoked_gains(layout: ChannelLayout) -> np.ndarray:
    """Topography with the reference mastoids zeroed (they carry no evoked signal)."""
    gains = spatial_topography(layout)
    for name in layout.reference_channels:
        gains[layout.index(name)] = 0.0
    return gains


def place_template(data: np.ndarray, onset_sample: int, template: np.ndarray,
                   gains: np.ndarray) -> None:
    data[:, onset_sample:onset_sample + len(template)] += np.outer(gains, template)


def synthesize_run_flagged(schedule: StimulationSchedule, profile: SubjectProfile,
                           attended_flags, seed: int,
                           layout: ChannelLayout | None = None) -> ContinuousRecording:
    """Recording with an explicit attended flag per stimulus (the general form)."""
    layout = layout or build_layout()
    flags = [bool(f) for f in attended_flags]
    if len(flags) != len(schedule.stimuli):
        raise ValueError("need one attended flag per stimulus")
    fs = layout.fs_hz
    n_samples = recording_length(schedule, fs)
    data, run_gain = run_noise_and_gain(profile, seed, n_samples, layout.n_channels)
    gains = evoked_gains(layout)
    exo = p300_template(profile.exogenous_amp_uV, EXOGENOUS_LATENCY_MS,
                        EXOGENOUS_WIDTH_MS, fs) if profile.exogenous_amp_uV > 0 else None

    events = []
    for k, stim in enumerate(schedule.stimuli):
        onset = int(round((LEAD_IN_MS + stim.onset_ms) * fs / 1000.0))
        if exo is not None:
            place_template(data, onset, exo, gains)
        draw = stimulus_draw(profile, seed, k, run_gain)
        if flags[k] and not draw.lapsed and draw.amp_uV > 0:
            bump = p300_template(draw.amp_uV, draw.latency_ms, profile.p300_width_ms, fs)
            place_template(data, onset, bump, gains)
        events.append(StimulusEvent(stimulus=stim, attended=flags[k]))
    return ContinuousRecording(data=data, fs_hz=fs, channels=layout.names,
                               events=tuple(events))


def synthesize_run(schedule: StimulationSchedule, profile: SubjectProfile,
                   attended: int | None, seed: int,
                   layout: ChannelLayout | None = None) -> ContinuousRecording:
    """Recording where one vibrator (or none) is attended for the whole run."""
    if attended is not None:
        check_vibrator(attended)
    flags = [attended is not None and s.vibrator == attended for s in schedule.stimuli]
    return synthesize_run_flagged(schedule, profile, flags, seed, layout)
