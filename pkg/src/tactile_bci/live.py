"""Incremental run synthesis with a switchable attention state.

A LiveRun advances a simulated clock through one stimulation run,
emitting stimulus onsets as they occur and raw epochs as they complete
(700 ms after each onset). Attention may change between stimuli; per
stimulus draws come from substreams indexed by stimulus position, so a
live run whose attention never changes is bit-identical to the batch
synthesizer's output. The clock is logical milliseconds; pacing, if any,
belongs to the caller.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .layout import ChannelLayout, build_layout
from .preprocess import EPOCH_POST_MS, Epoch, cut_epoch_at
from .profiles import SubjectProfile
from .scheduler import StimulationSchedule, check_vibrator
from .synth import (EXOGENOUS_LATENCY_MS, EXOGENOUS_WIDTH_MS, LEAD_IN_MS,
                    ContinuousRecording, StimulusEvent, evoked_gains, p300_template,
                    recording_length, run_noise_and_gain, stimulus_draw)

EVENT_STIMULUS = "stimulus"
EVENT_EPOCH = "epoch"


@dataclass(frozen=True)
class LiveEvent:
    """One occurrence on the run timeline (times in recording milliseconds)."""

    kind: str
    time_ms: float
    stimulus: object
    attended: bool
    epoch: Epoch | None = None


class LiveRun:
    """One run unfolding in simulated time.

    advance(to_ms) processes everything scheduled up to and including
    to_ms and returns the events in order. set_attention changes which
    vibrator the synthetic subject attends for stimuli that have not yet
    occurred.
    """

    def __init__(self, schedule: StimulationSchedule, profile: SubjectProfile,
                 seed: int, layout: ChannelLayout | None = None,
                 attention: int | None = None):
        if attention is not None:
            check_vibrator(attention)
        self.schedule = schedule
        self.profile = profile
        self.seed = int(seed)
        self.layout = layout or build_layout()
        self.attention = attention

        fs = self.layout.fs_hz
        self._fs = fs
        n_samples = recording_length(schedule, fs)
        self._data, self.run_gain = run_noise_and_gain(profile, self.seed, n_samples,
                                                       self.layout.n_channels)
        self._gains = evoked_gains(self.layout)
        self._exo = (p300_template(profile.exogenous_amp_uV, EXOGENOUS_LATENCY_MS,
                                   EXOGENOUS_WIDTH_MS, fs)
                     if profile.exogenous_amp_uV > 0 else None)

        # timeline: every onset and every epoch completion, chronological;
        # onsets and completions never coincide (400 ms grid vs +700 ms)
        timeline = []
        for k, stim in enumerate(schedule.stimuli):
            onset_ms = LEAD_IN_MS + stim.onset_ms
            timeline.append((float(onset_ms), 0, EVENT_STIMULUS, k))
            timeline.append((float(onset_ms + EPOCH_POST_MS), 1, EVENT_EPOCH, k))
        timeline.sort()
        self._timeline = timeline
        self._cursor = 0
        self._clock_ms = 0.0
        self._flags: list[bool | None] = [None] * len(schedule.stimuli)

    @property
    def clock_ms(self) -> float:
        return self._clock_ms

    @property
    def duration_ms(self) -> float:
        return self._data.shape[1] * 1000.0 / self._fs

    @property
    def finished(self) -> bool:
        return self._cursor >= len(self._timeline)

    def next_event_time_ms(self) -> float:
        """Time of the next unprocessed event, or the run end once drained."""
        if self.finished:
            return self.duration_ms
        return self._timeline[self._cursor][0]

    def set_attention(self, vibrator: int | None) -> None:
        if vibrator is not None:
            check_vibrator(vibrator)
        self.attention = vibrator

    def _onset_sample(self, stim) -> int:
        return int(round((LEAD_IN_MS + stim.onset_ms) * self._fs / 1000.0))

    def _process_stimulus(self, k: int) -> LiveEvent:
        stim = self.schedule.stimuli[k]
        attended = self.attention is not None and stim.vibrator == self.attention
        self._flags[k] = attended
        onset = self._onset_sample(stim)
        # same add order as the batch synthesizer: exogenous, then evoked
        if self._exo is not None:
            self._data[:, onset:onset + len(self._exo)] += np.outer(self._gains, self._exo)
        draw = stimulus_draw(self.profile, self.seed, k, self.run_gain)
        if attended and not draw.lapsed and draw.amp_uV > 0:
            bump = p300_template(draw.amp_uV, draw.latency_ms,
                                 self.profile.p300_width_ms, self._fs)
            self._data[:, onset:onset + len(bump)] += np.outer(self._gains, bump)
        return LiveEvent(kind=EVENT_STIMULUS, time_ms=LEAD_IN_MS + stim.onset_ms,
                         stimulus=stim, attended=attended)

    def _process_epoch(self, k: int) -> LiveEvent:
        stim = self.schedule.stimuli[k]
        attended = self._flags[k]
        epoch = cut_epoch_at(self._data, self._fs, self.layout.names, stim,
                             self._onset_sample(stim), bool(attended))
        return LiveEvent(kind=EVENT_EPOCH, time_ms=LEAD_IN_MS + stim.onset_ms + EPOCH_POST_MS,
                         stimulus=stim, attended=bool(attended), epoch=epoch)

    def advance(self, to_ms: float) -> list[LiveEvent]:
        """Process all events at or before to_ms; the clock never moves back."""
        to_ms = max(float(to_ms), self._clock_ms)
        events = []
        while self._cursor < len(self._timeline):
            time_ms, _, kind, k = self._timeline[self._cursor]
            if time_ms > to_ms:
                break
            self._cursor += 1
            if kind == EVENT_STIMULUS:
                events.append(self._process_stimulus(k))
            else:
                events.append(self._process_epoch(k))
        self._clock_ms = to_ms
        return events

    def run_to_end(self) -> list[LiveEvent]:
        return self.advance(self.duration_ms)

    def recording(self) -> ContinuousRecording:
        """The completed run as a continuous recording (batch-equivalent)."""
        if not self.finished:
            raise ValueError("run is still in progress")
        events = tuple(StimulusEvent(stimulus=s, attended=bool(f))
                       for s, f in zip(self.schedule.stimuli, self._flags))
        return ContinuousRecording(data=self._data, fs_hz=self._fs,
                                   channels=self.layout.names, events=events)

    def attended_flags(self) -> tuple[bool, ...]:
        if not self.finished:
            raise ValueError("run is still in progress")
        return tuple(bool(f) for f in self._flags)
