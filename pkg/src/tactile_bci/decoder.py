"""The online protocol state machine.

Epochs arrive one stimulus at a time; each vibrator keeps a sliding buffer
of its last four preprocessed windows. From round 4 on, every completed
round yields one decision over the four buffer averages. A trial ends on
target detection (success), non-target detection (failure), or round
exhaustion (failure). After online termination the remaining rounds are
still scored into the trace, flagged as non-decision rounds, so that
retrospective analyses can re-evaluate the full run.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .model import DecoderModel, score_window
from .scheduler import N_VIBRATORS, VIBRATOR_IDS, check_vibrator

AVERAGE_SPAN = 4
FIRST_DECISION_ROUND = 4          # 1-based; rounds 4..n_rounds produce decisions
INTER_RUN_PAUSE_MS = 7000

RESULT_SUCCESS = "success"
RESULT_FAILURE_NONTARGET = "failure_nontarget"
RESULT_FAILURE_EXHAUSTED = "failure_exhausted"
RESULTS = (RESULT_SUCCESS, RESULT_FAILURE_NONTARGET, RESULT_FAILURE_EXHAUSTED)

OUTCOME_HIT = "hit"
OUTCOME_FALSE_POSITIVE = "false_positive"
OUTCOME_MISS = "miss"


class SlidingBuffer:
    """Per-vibrator FIFO of the most recent preprocessed windows (capacity 4)."""

    def __init__(self, span: int = AVERAGE_SPAN):
        self.span = span
        self._queues = {v: deque(maxlen=span) for v in VIBRATOR_IDS}

    def push(self, vibrator: int, window: np.ndarray):
        """Store a window; returns the sliding average once the queue is full."""
        check_vibrator(vibrator)
        q = self._queues[vibrator]
        q.append(np.asarray(window, dtype=float))
        if len(q) < self.span:
            return None
        return np.mean(q, axis=0)

    def average(self, vibrator: int):
        q = self._queues[check_vibrator(vibrator)]
        if len(q) < self.span:
            return None
        return np.mean(q, axis=0)

    def averages(self):
        """Dict of per-vibrator averages; None until a queue is full."""
        return {v: self.average(v) for v in VIBRATOR_IDS}


@dataclass(frozen=True)
class DecodeDecision:
    round_index: int              # 1-based round that completed
    scores: tuple[float, float, float, float]
    detected: int | None
    is_decision_round: bool = True


@dataclass(frozen=True)
class RunOutcome:
    target: int
    result: str
    attempts: int
    decisions: tuple[DecodeDecision, ...]
    threshold: float
    n_rounds: int
    truncated: bool = False

    def decision_rounds(self) -> tuple[DecodeDecision, ...]:
        return tuple(d for d in self.decisions if d.is_decision_round)


def _pick_detected(scores: np.ndarray, threshold: float) -> int | None:
    above = scores > threshold
    if not above.any():
        return None
    masked = np.where(above, scores, -np.inf)
    return int(np.argmax(masked)) + 1  # first max: ties break to the lowest id


def decide_round(averages, model: DecoderModel, round_index: int = 0,
                 is_decision_round: bool = True) -> DecodeDecision:
    """Score the four averaged windows and pick at most one detected vibrator."""
    missing = [v for v in VIBRATOR_IDS if averages.get(v) is None]
    if missing:
        raise ValueError(f"missing averages for vibrators {missing}")
    scores = np.array([score_window(model, averages[v]) for v in VIBRATOR_IDS])
    detected = _pick_detected(scores, model.threshold)
    return DecodeDecision(
        round_index=round_index,
        scores=tuple(float(s) for s in scores),
        detected=detected,
        is_decision_round=is_decision_round,
    )


class OnlineTrialState:
    """Step-wise form of the online trial: feed windows, collect decisions.

    Drives the same rules as run_online_trial but one stimulus at a time,
    so a transport layer can interleave feeding with event delivery.
    """

    def __init__(self, model: DecoderModel, target: int, n_rounds: int = 20):
        check_vibrator(target)
        self.model = model
        self.target = target
        self.n_rounds = n_rounds
        self.buffer = SlidingBuffer()
        self.decisions: list[DecodeDecision] = []
        self.result: str | None = None
        self.attempts = 0
        self._in_round = 0
        self._round_idx = 0

    def push(self, stimulus, window) -> DecodeDecision | None:
        """Feed one preprocessed window; returns a decision when a round ends."""
        self.buffer.push(stimulus.vibrator, window)
        self._in_round += 1
        if self._in_round < N_VIBRATORS:
            return None
        self._in_round = 0
        self._round_idx += 1
        if self._round_idx < FIRST_DECISION_ROUND:
            return None
        decision = decide_round(self.buffer.averages(), self.model, self._round_idx,
                                is_decision_round=self.result is None)
        self.decisions.append(decision)
        if self.result is None:
            self.attempts += 1
            if decision.detected == self.target:
                self.result = RESULT_SUCCESS
            elif decision.detected is not None:
                self.result = RESULT_FAILURE_NONTARGET
        return decision

    def finish(self) -> RunOutcome:
        truncated = self._round_idx < self.n_rounds
        result = self.result if self.result is not None else RESULT_FAILURE_EXHAUSTED
        return RunOutcome(target=self.target, result=result, attempts=self.attempts,
                          decisions=tuple(self.decisions), threshold=self.model.threshold,
                          n_rounds=self.n_rounds, truncated=truncated)


def run_online_trial(model: DecoderModel, stream, target: int,
                     n_rounds: int = 20) -> RunOutcome:
    """Consume (stimulus, window) pairs in schedule order until a terminal state.

    The stream is consumed fully so the trace carries shadow scores for the
    rounds after termination.
    """
    state = OnlineTrialState(model, target, n_rounds)
    for stimulus, window in stream:
        state.push(stimulus, window)
    return state.finish()


@dataclass(frozen=True)
class ContinuousTrace:
    target: int
    decisions: tuple[DecodeDecision, ...]
    outcomes: tuple[str, ...]
    threshold: float

    @property
    def n_windows(self) -> int:
        return len(self.outcomes)

    @property
    def acc_pct(self) -> float:
        return 100.0 * self.outcomes.count(OUTCOME_HIT) / self.n_windows

    @property
    def fpr_pct(self) -> float:
        return 100.0 * self.outcomes.count(OUTCOME_FALSE_POSITIVE) / self.n_windows

    def sustained_runs(self) -> tuple[int, ...]:
        """Lengths of maximal runs of consecutive hits."""
        runs = []
        count = 0
        for outcome in self.outcomes:
            if outcome == OUTCOME_HIT:
                count += 1
            elif count:
                runs.append(count)
                count = 0
        if count:
            runs.append(count)
        return tuple(runs)


class ContinuousState:
    """Step-wise continuous decoding: every window decided, nothing terminates."""

    def __init__(self, model: DecoderModel, target: int, n_rounds: int = 20):
        check_vibrator(target)
        self.model = model
        self.target = target
        self.n_rounds = n_rounds
        self.buffer = SlidingBuffer()
        self.decisions: list[DecodeDecision] = []
        self.outcomes: list[str] = []
        self._in_round = 0
        self._round_idx = 0

    def push(self, stimulus, window) -> DecodeDecision | None:
        self.buffer.push(stimulus.vibrator, window)
        self._in_round += 1
        if self._in_round < N_VIBRATORS:
            return None
        self._in_round = 0
        self._round_idx += 1
        if self._round_idx < FIRST_DECISION_ROUND:
            return None
        decision = decide_round(self.buffer.averages(), self.model, self._round_idx)
        self.decisions.append(decision)
        if decision.detected == self.target:
            self.outcomes.append(OUTCOME_HIT)
        elif decision.detected is not None:
            self.outcomes.append(OUTCOME_FALSE_POSITIVE)
        else:
            self.outcomes.append(OUTCOME_MISS)
        return decision

    def finish(self) -> ContinuousTrace:
        return ContinuousTrace(target=self.target, decisions=tuple(self.decisions),
                               outcomes=tuple(self.outcomes), threshold=self.model.threshold)


def run_continuous(model: DecoderModel, stream, target: int,
                   n_rounds: int = 20) -> ContinuousTrace:
    """Score every decision window without terminating; classify each outcome."""
    state = ContinuousState(model, target, n_rounds)
    for stimulus, window in stream:
        state.push(stimulus, window)
    return state.finish()


def reduce_trace(outcome: RunOutcome, subset) -> tuple[str, int]:
    """Re-evaluate a recorded trace considering only the given vibrators.

    Walks every recorded window (shadow rounds included) and terminates at
    the first window where any subset vibrator fires. Returns (result,
    attempts). The model outputs are reused; nothing is re-decoded.
    """
    subset = tuple(sorted(set(subset)))
    if outcome.target not in subset:
        raise ValueError("subset must contain the target")
    for k, decision in enumerate(outcome.decisions, start=1):
        scores = {v: decision.scores[v - 1] for v in subset}
        fired = {v: s for v, s in scores.items() if s > outcome.threshold}
        if fired:
            best = max(fired, key=lambda v: (fired[v], -v))
            if best == outcome.target:
                return RESULT_SUCCESS, k
            return RESULT_FAILURE_NONTARGET, k
    return RESULT_FAILURE_EXHAUSTED, len(outcome.decisions)


def retrospective_reduce(outcomes, k: int) -> dict:
    """Success statistics when only k of the four vibrators are considered.

    For every trace and every k-subset containing its target, the recorded
    scores are re-thresholded with the other vibrators masked out. Averages
    are over all (trace, subset) evaluations.
    """
    if k not in (1, 2, 3):
        raise ValueError("k must be 1, 2 or 3")
    results = []
    attempts_on_success = []
    for outcome in outcomes:
        others = [v for v in VIBRATOR_IDS if v != outcome.target]
        for extra in combinations(others, k - 1):
            result, attempts = reduce_trace(outcome, (outcome.target, *extra))
            results.append(result)
            if result == RESULT_SUCCESS:
                attempts_on_success.append(attempts)
    n = len(results)
    successes = results.count(RESULT_SUCCESS)
    return {
        "k": k,
        "n_evaluations": n,
        "success_rate_pct": 100.0 * successes / n if n else float("nan"),
        "mean_attempts": float(np.mean(attempts_on_success)) if attempts_on_success else None,
    }
