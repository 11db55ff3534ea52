"""Oddball stimulation schedules: timed rounds of vibrator activations.

Each round activates all four vibrators once, in a pseudorandom order, as
200 ms bursts separated by 200 ms, so one round spans 1.6 s. One vibrator
per run is the target, giving the 1:3 target to non-target ratio.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

N_VIBRATORS = 4
VIBRATOR_IDS = (1, 2, 3, 4)
BURST_MS = 200
ISI_MS = 200
STIM_SPACING_MS = BURST_MS + ISI_MS
ROUND_MS = N_VIBRATORS * STIM_SPACING_MS

_SCHEDULE_DOMAIN = 0x5C4ED


def check_vibrator(vibrator: int) -> int:
    if vibrator not in VIBRATOR_IDS:
        raise ValueError(f"vibrator id must be one of {VIBRATOR_IDS}, got {vibrator!r}")
    return int(vibrator)


@dataclass(frozen=True)
class StimulusSpec:
    vibrator: int
    onset_ms: int
    duration_ms: int = BURST_MS
    round_index: int = 0


@dataclass(frozen=True)
class StimulationSchedule:
    rounds: tuple[tuple[int, ...], ...]
    stimuli: tuple[StimulusSpec, ...]
    target: int
    seed: int

    @property
    def n_rounds(self) -> int:
        return len(self.rounds)

    @property
    def duration_ms(self) -> int:
        return self.n_rounds * ROUND_MS

    def is_target(self, stim: StimulusSpec) -> bool:
        return stim.vibrator == self.target


def build_round(
    rng: np.random.Generator,
    previous_round_last: int | None = None,
    forbid_repeat: bool = True,
) -> tuple[int, ...]:
    """Draw a uniform permutation of the four vibrators.

    With forbid_repeat, permutations starting with previous_round_last are
    re-drawn, so the same vibrator never fires twice in a row across a
    round boundary.
    """
    if previous_round_last is not None:
        check_vibrator(previous_round_last)
    while True:
        perm = tuple(int(v) for v in rng.permutation(VIBRATOR_IDS))
        if not forbid_repeat or previous_round_last is None or perm[0] != previous_round_last:
            return perm


def build_run_schedule(
    target: int,
    n_rounds: int,
    seed: int,
    forbid_repeat: bool = True,
) -> StimulationSchedule:
    """Full run schedule: n_rounds permutation rounds on a 400 ms grid."""
    check_vibrator(target)
    if n_rounds < 1:
        raise ValueError("n_rounds must be >= 1")
    rng = np.random.default_rng(np.random.SeedSequence([_SCHEDULE_DOMAIN, int(seed), int(target)]))
    rounds: list[tuple[int, ...]] = []
    last: int | None = None
    for _ in range(n_rounds):
        perm = build_round(rng, last, forbid_repeat)
        rounds.append(perm)
        last = perm[-1]
    stimuli = [
        StimulusSpec(
            vibrator=vib,
            onset_ms=ROUND_MS * r + STIM_SPACING_MS * k,
            round_index=r,
        )
        for r, perm in enumerate(rounds)
        for k, vib in enumerate(perm)
    ]
    return StimulationSchedule(tuple(rounds), tuple(stimuli), int(target), int(seed))


def schedule_to_text(schedule: StimulationSchedule) -> str:
    """Line-oriented form: header then one `round,onset_ms,vibrator,is_target` per line."""
    lines = [f"# target={schedule.target} seed={schedule.seed} n_rounds={schedule.n_rounds}"]
    for s in schedule.stimuli:
        lines.append(f"{s.round_index},{s.onset_ms},{s.vibrator},{int(schedule.is_target(s))}")
    return "\n".join(lines) + "\n"


def schedule_from_text(text: str) -> StimulationSchedule:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not lines or not lines[0].startswith("#"):
        raise ValueError("schedule text must start with a header line")
    header = dict(kv.split("=", 1) for kv in lines[0].lstrip("# ").split())
    target = check_vibrator(int(header["target"]))
    seed = int(header["seed"])
    n_rounds = int(header["n_rounds"])

    stimuli = []
    for ln in lines[1:]:
        r, onset, vib, is_tgt = (int(tok) for tok in ln.split(","))
        if bool(is_tgt) != (vib == target):
            raise ValueError(f"is_target flag inconsistent with target on line {ln!r}")
        stimuli.append(StimulusSpec(vibrator=check_vibrator(vib), onset_ms=onset, round_index=r))
    if len(stimuli) != N_VIBRATORS * n_rounds:
        raise ValueError("stimulus count does not match header n_rounds")

    rounds = []
    for r in range(n_rounds):
        chunk = stimuli[r * N_VIBRATORS:(r + 1) * N_VIBRATORS]
        if sorted(s.vibrator for s in chunk) != list(VIBRATOR_IDS):
            raise ValueError(f"round {r} is not a permutation of the vibrators")
        for k, s in enumerate(chunk):
            expected = ROUND_MS * r + STIM_SPACING_MS * k
            if s.onset_ms != expected or s.round_index != r:
                raise ValueError(f"onset grid violated at round {r}, position {k}")
        rounds.append(tuple(s.vibrator for s in chunk))
    return StimulationSchedule(tuple(rounds), tuple(stimuli), target, seed)
