"""Protocol orchestration: calibration, online sessions, continuous blocks,
full days, archives, and bit-exact replay.

Every run's randomness comes from a named substream of the experiment
seed, so a written archive replays to byte-identical reports from its
config alone. The simulated clock advances by schedule arithmetic (1.6 s
rounds, 7 s inter-run pauses); wall-clock pacing exists only in the
gateway.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from . import fileio
from .classifier import fit_standardizer, standardize, train_linear_svm
from .config import ExperimentConfig
from .decoder import (AVERAGE_SPAN, INTER_RUN_PAUSE_MS, ContinuousTrace, RunOutcome,
                      SlidingBuffer, retrospective_reduce, run_continuous,
                      run_online_trial)
from .fileio import DataError
from .layout import ChannelLayout, build_layout
from .metrics import (ErpMeasurement, SessionReport, aggregate_report, measure_p300)
from .model import DecoderModel, with_threshold
from .preprocess import (EpochSet, FirFilter, LABEL_TARGET, baseline_correct, cut_epochs,
                         design_fir, extract_feature_window, preprocess_epochs, rereference)
from .profiles import SubjectProfile, default_profile, override_profile
from .scheduler import (ROUND_MS, VIBRATOR_IDS, StimulationSchedule, build_run_schedule,
                        schedule_to_text)
from .synth import LEAD_IN_MS, TAIL_MS, synthesize_run
from .xdawn import apply_filters, fit_xdawn

_PHASE_CALIBRATION = 1
_PHASE_ONLINE = 2
_PHASE_CONTINUOUS = 3
_PHASE_ORDER = 4
_PHASE_FUNCTIONAL = 5

_CONDITION_INDEX = {"single": 1, "dual": 2}


def derive_seed(config_seed: int, *path: int) -> int:
    """Stable 63-bit seed for a named point in the experiment tree."""
    ss = np.random.SeedSequence([int(config_seed), *[int(p) for p in path]])
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> 1)


@dataclass(frozen=True)
class PipelineContext:
    """Everything a run needs besides its schedule: layout, filters, profile."""

    layout: ChannelLayout
    bandpass: FirFilter
    notch: FirFilter
    profile: SubjectProfile


def build_context(config: ExperimentConfig, condition: str, day: int) -> PipelineContext:
    layout = build_layout()
    profile = override_profile(default_profile(condition, day),
                               **config.overrides_for(condition, day))
    return PipelineContext(
        layout=layout,
        bandpass=design_fir("bandpass", layout.fs_hz, config.bandpass_taps),
        notch=design_fir("bandstop", layout.fs_hz, config.notch_taps),
        profile=profile,
    )


def run_duration_ms(schedule: StimulationSchedule) -> int:
    return LEAD_IN_MS + schedule.duration_ms + TAIL_MS


@dataclass
class SimulatedRun:
    schedule: StimulationSchedule
    raw_epochs: EpochSet
    windows: list  # (stimulus, feature window) in schedule order
    recording: object


def simulate_run(ctx: PipelineContext, schedule: StimulationSchedule,
                 attended: int | None, seed: int) -> SimulatedRun:
    """Synthesize one run and push it through the preprocessing chain."""
    recording = synthesize_run(schedule, ctx.profile, attended, seed, ctx.layout)
    raw = cut_epochs(recording, ctx.layout, target=schedule.target)
    processed = preprocess_epochs(raw, ctx.layout, ctx.bandpass, ctx.notch)
    windows = [(e.stimulus, extract_feature_window(e, ctx.layout)) for e in processed]
    return SimulatedRun(schedule=schedule, raw_epochs=raw, windows=windows,
                        recording=recording)


def target_average_measurement(raw_epochs: EpochSet, layout: ChannelLayout) -> ErpMeasurement:
    """Evoked peak from the run's target-epoch average.

    Measured on re-referenced, baseline-corrected, unfiltered epochs at the
    native rate: amplitudes stay on the raw microvolt scale and latencies
    keep 1 ms resolution.
    """
    targets = [e for e in raw_epochs if e.label == LABEL_TARGET]
    if not targets:
        raise ValueError("run has no target epochs")
    cleaned = [baseline_correct(rereference(e, layout)) for e in targets]
    avg = np.mean([e.data for e in cleaned], axis=0)
    cz = avg[cleaned[0].channels.index("Cz")]
    return measure_p300(cz, cleaned[0].fs_hz, cleaned[0].t0_ms)


def _training_instances(run: SimulatedRun):
    """Per-vibrator sliding 4-averages over a run's windows, labelled by target."""
    buffer = SlidingBuffer()
    instances = []
    for stimulus, window in run.windows:
        avg = buffer.push(stimulus.vibrator, window)
        if avg is not None:
            label = 1.0 if stimulus.vibrator == run.schedule.target else -1.0
            instances.append((avg, label))
    return instances


@dataclass(frozen=True)
class CalibrationResult:
    model: DecoderModel
    n_epochs: int
    n_target_epochs: int
    n_instances: int
    simulated_ms: int
    runs: tuple[SimulatedRun, ...] = field(repr=False, default=())


def _calibration_targets(runs_per_target: int) -> list[int]:
    # fixed interleaved order: 1,2,3,4,1,2,3,4,...
    return [v for _ in range(runs_per_target) for v in VIBRATOR_IDS]


def run_calibration(condition: str, day: int, config: ExperimentConfig,
                    ctx: PipelineContext | None = None) -> CalibrationResult:
    """Calibration block: runs_per_target runs per vibrator, one decoder out."""
    config.validate()
    ctx = ctx or build_context(config, condition, day)
    cond_idx = _CONDITION_INDEX[condition]

    target_windows = []
    all_windows = []
    instance_features = []
    instance_labels = []
    runs = []
    simulated_ms = 0
    targets = _calibration_targets(config.calibration_runs_per_target)
    for run_idx, target in enumerate(targets):
        seed = derive_seed(config.seed, day, cond_idx, _PHASE_CALIBRATION, run_idx)
        schedule = build_run_schedule(target, config.n_rounds, seed, config.forbid_repeat)
        run = simulate_run(ctx, schedule, attended=target, seed=seed)
        runs.append(run)
        simulated_ms += run_duration_ms(schedule)
        if run_idx:
            simulated_ms += INTER_RUN_PAUSE_MS
        for stimulus, window in run.windows:
            all_windows.append(window)
            if stimulus.vibrator == target:
                target_windows.append(window)
        for avg, label in _training_instances(run):
            instance_features.append(avg)
            instance_labels.append(label)

    model = _fit_decoder(config, target_windows, all_windows,
                         instance_features, instance_labels)
    if config.threshold_mode == "calibrated":
        model = with_threshold(model, _calibrated_threshold(config, runs), "calibrated")
    return CalibrationResult(model=model, n_epochs=len(all_windows),
                             n_target_epochs=len(target_windows),
                             n_instances=len(instance_labels),
                             simulated_ms=simulated_ms, runs=tuple(runs))


def _fit_decoder(config, target_windows, all_windows, instance_features,
                 instance_labels) -> DecoderModel:
    bank = fit_xdawn(target_windows, all_windows, config.n_filters)
    features = np.stack([apply_filters(w, bank).ravel() for w in instance_features])
    labels = np.array(instance_labels, dtype=float)
    stdzr = fit_standardizer(features)
    svm = train_linear_svm(standardize(stdzr, features), labels, c=config.svm_c)
    return DecoderModel(bank=bank, standardizer=stdzr, svm=svm,
                        threshold=config.decision_threshold, threshold_mode="fixed",
                        config_hash=config.config_hash())


def _calibrated_threshold(config: ExperimentConfig, runs) -> float:
    """Threshold maximizing balanced accuracy on held-out calibration scores.

    Runs split into 3 folds round-robin by run index; each fold is scored
    by a decoder fitted on the other two. Ties resolve to the lowest
    candidate so detection stays as permissive as possible.
    """
    from .model import score_window
    scores, labels = [], []
    for fold in range(3):
        held = [run for i, run in enumerate(runs) if i % 3 == fold]
        rest = [run for i, run in enumerate(runs) if i % 3 != fold]
        t_w, a_w, feats, labs = [], [], [], []
        for run in rest:
            for stimulus, window in run.windows:
                a_w.append(window)
                if stimulus.vibrator == run.schedule.target:
                    t_w.append(window)
            for avg, label in _training_instances(run):
                feats.append(avg)
                labs.append(label)
        fold_model = _fit_decoder(config, t_w, a_w, feats, labs)
        for run in held:
            for avg, label in _training_instances(run):
                scores.append(score_window(fold_model, avg))
                labels.append(label)
    scores = np.array(scores)
    labels = np.array(labels)
    order = np.argsort(scores, kind="stable")
    uniq = np.unique(scores[order])
    candidates = np.concatenate([[uniq[0] - 1.0], (uniq[:-1] + uniq[1:]) / 2.0])
    best_t, best_ba = 0.0, -1.0
    n_pos = np.sum(labels > 0)
    n_neg = np.sum(labels < 0)
    for t in candidates:
        detected = scores > t
        tpr = np.sum(detected & (labels > 0)) / n_pos
        tnr = np.sum(~detected & (labels < 0)) / n_neg
        ba = 0.5 * (tpr + tnr)
        if ba > best_ba:
            best_t, best_ba = float(t), ba
    return best_t


def _online_targets(config: ExperimentConfig, day: int, cond_idx: int) -> list[int]:
    """Randomized target order with exactly n_trials/4 trials per vibrator."""
    per = config.n_trials // 4
    pool = np.array([v for v in VIBRATOR_IDS for _ in range(per)])
    rng = np.random.default_rng(
        np.random.SeedSequence([config.seed, day, cond_idx, _PHASE_ORDER]))
    return [int(v) for v in rng.permutation(pool)]


@dataclass(frozen=True)
class OnlineSession:
    report: SessionReport
    outcomes: tuple[RunOutcome, ...]
    measurements: tuple[ErpMeasurement, ...]
    schedules: tuple[StimulationSchedule, ...]
    continuous: tuple[ContinuousTrace, ...] = ()
    simulated_ms: int = 0


def run_online_session(condition: str, day: int, config: ExperimentConfig,
                       model: DecoderModel | None = None,
                       ctx: PipelineContext | None = None,
                       include_continuous: bool = False) -> OnlineSession:
    """The online evaluation: n_trials runs, each vibrator targeted equally often."""
    config.validate()
    ctx = ctx or build_context(config, condition, day)
    if model is None:
        model = run_calibration(condition, day, config, ctx).model
    cond_idx = _CONDITION_INDEX[condition]

    outcomes = []
    measurements = []
    schedules = []
    simulated_ms = 0
    for trial_idx, target in enumerate(_online_targets(config, day, cond_idx)):
        seed = derive_seed(config.seed, day, cond_idx, _PHASE_ONLINE, trial_idx)
        schedule = build_run_schedule(target, config.n_rounds, seed, config.forbid_repeat)
        run = simulate_run(ctx, schedule, attended=target, seed=seed)
        outcomes.append(run_online_trial(model, iter(run.windows), target, config.n_rounds))
        measurements.append(target_average_measurement(run.raw_epochs, ctx.layout))
        schedules.append(schedule)
        simulated_ms += run_duration_ms(schedule)
        if trial_idx:
            simulated_ms += INTER_RUN_PAUSE_MS

    traces = ()
    if include_continuous:
        traces = run_continuous_block(condition, day, config, model, ctx)
    retro = {str(k): retrospective_reduce(outcomes, k) for k in (1, 2, 3)}
    report = aggregate_report(condition, day, outcomes, measurements,
                              continuous_traces=traces, retrospective=retro,
                              config_hash=config.config_hash())
    return OnlineSession(report=report, outcomes=tuple(outcomes),
                         measurements=tuple(measurements), schedules=tuple(schedules),
                         continuous=tuple(traces), simulated_ms=simulated_ms)


def run_continuous_block(condition: str, day: int, config: ExperimentConfig,
                         model: DecoderModel | None = None,
                         ctx: PipelineContext | None = None) -> tuple[ContinuousTrace, ...]:
    """Continuous-decoding runs, each vibrator targeted equally often."""
    config.validate()
    ctx = ctx or build_context(config, condition, day)
    if model is None:
        model = run_calibration(condition, day, config, ctx).model
    cond_idx = _CONDITION_INDEX[condition]
    per = config.n_continuous_runs // 4
    targets = [v for _ in range(per) for v in VIBRATOR_IDS]
    traces = []
    for run_idx, target in enumerate(targets):
        seed = derive_seed(config.seed, day, cond_idx, _PHASE_CONTINUOUS, run_idx)
        schedule = build_run_schedule(target, config.n_rounds, seed, config.forbid_repeat)
        run = simulate_run(ctx, schedule, attended=target, seed=seed)
        traces.append(run_continuous(model, iter(run.windows), target, config.n_rounds))
    return tuple(traces)


@dataclass(frozen=True)
class DayResult:
    day: int
    condition_order: tuple[str, ...]
    sessions: dict  # condition -> OnlineSession
    calibrations: dict  # condition -> CalibrationResult

    def reports(self) -> dict:
        return {c: s.report for c, s in self.sessions.items()}


def run_day(day: int, config: ExperimentConfig,
            include_continuous: bool = False) -> DayResult:
    """Calibration plus online session per condition, order counterbalanced by seed."""
    config.validate()
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, day, 0, _PHASE_ORDER]))
    order = tuple(config.conditions[i] for i in rng.permutation(len(config.conditions)))
    sessions = {}
    calibrations = {}
    for condition in order:
        ctx = build_context(config, condition, day)
        cal = run_calibration(condition, day, config, ctx)
        calibrations[condition] = cal
        sessions[condition] = run_online_session(condition, day, config, cal.model, ctx,
                                                 include_continuous=include_continuous)
    return DayResult(day=day, condition_order=order, sessions=sessions,
                     calibrations=calibrations)


# --- archives ----------------------------------------------------------------

def _day_dir(root: str, day: int) -> str:
    return os.path.join(root, f"day{day}")


def _session_dir(root: str, day: int, condition: str) -> str:
    return os.path.join(_day_dir(root, day), condition)


def write_day_archive(root: str, config: ExperimentConfig, result: DayResult) -> None:
    """Persist config, schedules, models, traces, and reports for one day."""
    chash = config.config_hash()
    fileio.atomic_write_text(os.path.join(root, "config.json"), config.to_json())
    order_lines = [f"# day={result.day} config={chash}"]
    order_lines.extend(result.condition_order)
    fileio.atomic_write_text(os.path.join(_day_dir(root, result.day), "order.txt"),
                             "\n".join(order_lines) + "\n")
    for condition, session in result.sessions.items():
        sdir = _session_dir(root, result.day, condition)
        fileio.save_model(os.path.join(sdir, "model.bin"),
                          result.calibrations[condition].model)
        for i, schedule in enumerate(session.schedules):
            fileio.atomic_write_text(os.path.join(sdir, f"trial{i:02d}.sched"),
                                     schedule_to_text(schedule))
        for i, outcome in enumerate(session.outcomes):
            fileio.atomic_write_text(os.path.join(sdir, f"trial{i:02d}.trace"),
                                     fileio.trace_to_text(outcome, chash))
        fileio.atomic_write_text(os.path.join(sdir, "report.json"),
                                 fileio.report_to_json(session.report))
    reports = [result.sessions[c].report for c in result.condition_order]
    fileio.atomic_write_text(os.path.join(_day_dir(root, result.day), "report.csv"),
                             fileio.reports_to_csv(reports))


def run_and_archive_day(day: int, config: ExperimentConfig,
                        include_continuous: bool = False) -> DayResult:
    result = run_day(day, config, include_continuous=include_continuous)
    write_day_archive(config.output_dir, config, result)
    return result


def _read_text(path: str) -> str:
    try:
        with open(path) as fh:
            return fh.read()
    except FileNotFoundError:
        raise DataError(f"archive file missing: {path}") from None


def check_archive_hashes(root: str, config: ExperimentConfig) -> None:
    """Reject archives whose artifacts were written under a different config."""
    chash = config.config_hash()
    for dirpath, _, names in os.walk(root):
        for name in names:
            path = os.path.join(dirpath, name)
            stamped = None
            if name.endswith(".trace") or name == "order.txt":
                first = _read_text(path).splitlines()[0]
                header = dict(kv.split("=", 1) for kv in first.lstrip("# ").split())
                stamped = header.get("config")
            elif name == "model.bin":
                stamped = fileio.load_model(path).config_hash
            elif name == "report.json":
                import json as _json
                stamped = _json.loads(_read_text(path)).get("config_hash")
            if stamped is not None and stamped != chash:
                raise DataError(f"config hash mismatch in {path}: "
                                f"{stamped} != {chash}")


@dataclass(frozen=True)
class ReplayResult:
    identical: bool
    mismatches: tuple[str, ...]
    regenerated: dict  # relative path -> bytes


def replay(archive_root: str) -> ReplayResult:
    """Re-run an archive from its stored config and compare reports byte-for-byte."""
    from .config import config_from_json
    config = config_from_json(_read_text(os.path.join(archive_root, "config.json")))
    check_archive_hashes(archive_root, config)

    days = []
    for entry in sorted(os.listdir(archive_root)):
        if entry.startswith("day") and entry[3:].isdigit():
            days.append(int(entry[3:]))
    if not days:
        raise DataError(f"archive {archive_root} holds no day directories")

    regenerated = {}
    mismatches = []
    for day in days:
        result = run_day(day, config)
        for condition, session in result.sessions.items():
            rel = os.path.join(f"day{day}", condition, "report.json")
            payload = fileio.report_to_json(session.report).encode()
            regenerated[rel] = payload
            stored_path = os.path.join(archive_root, rel)
            stored = _read_text(stored_path).encode()
            if stored != payload:
                mismatches.append(rel)
        rel = os.path.join(f"day{day}", "report.csv")
        reports = [result.sessions[c].report for c in result.condition_order]
        payload = fileio.reports_to_csv(reports).encode()
        regenerated[rel] = payload
        if _read_text(os.path.join(archive_root, rel)).encode() != payload:
            mismatches.append(rel)
    return ReplayResult(identical=not mismatches, mismatches=tuple(mismatches),
                        regenerated=regenerated)
