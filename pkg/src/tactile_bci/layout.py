"""64-channel EEG cap geometry on an idealized spherical head.

Positions follow standard 10-10 placement: inclination measured from the
vertex in 18 degree (10%) steps, azimuth from the nose, left hemisphere
positive. Intermediate electrodes sit on great-circle arcs between the
midline and the outer ring. Only relative distances matter downstream, so
no attempt is made to model a real head shape.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

FS_HZ = 1000.0

# name -> (inclination deg from vertex, azimuth deg from nose, + = left)
_DIRECT = {
    "Fp1": (72, 18), "Fp2": (72, -18),
    "AF7": (72, 36), "AF8": (72, -36), "AFz": (54, 0),
    "F9": (90, 54), "F7": (72, 54), "Fz": (36, 0), "F8": (72, -54), "F10": (90, -54),
    "FT7": (72, 72), "FCz": (18, 0), "FT8": (72, -72),
    "T7": (72, 90), "Cz": (0, 0), "T8": (72, -90),
    "TP7": (72, 108), "CPz": (18, 180), "TP8": (72, -108),
    "P7": (72, 126), "Pz": (36, 180), "P8": (72, -126),
    "PO7": (72, 144), "POz": (54, 180), "PO8": (72, -144),
    "O1": (72, 162), "Oz": (72, 180), "O2": (72, -162),
    "M1": (100, 100), "M2": (100, -100),
}

# interpolated electrodes: name -> (midline anchor, outer anchor, fraction toward outer)
_INTERP = {
    "AF3": ("AFz", "AF7", 0.5), "AF4": ("AFz", "AF8", 0.5),
    "F1": ("Fz", "F7", 0.25), "F3": ("Fz", "F7", 0.5), "F5": ("Fz", "F7", 0.75),
    "F2": ("Fz", "F8", 0.25), "F4": ("Fz", "F8", 0.5), "F6": ("Fz", "F8", 0.75),
    "FC1": ("FCz", "FT7", 0.25), "FC3": ("FCz", "FT7", 0.5), "FC5": ("FCz", "FT7", 0.75),
    "FC2": ("FCz", "FT8", 0.25), "FC4": ("FCz", "FT8", 0.5), "FC6": ("FCz", "FT8", 0.75),
    "C1": ("Cz", "T7", 0.25), "C3": ("Cz", "T7", 0.5), "C5": ("Cz", "T7", 0.75),
    "C2": ("Cz", "T8", 0.25), "C4": ("Cz", "T8", 0.5), "C6": ("Cz", "T8", 0.75),
    "CP1": ("CPz", "TP7", 0.25), "CP3": ("CPz", "TP7", 0.5), "CP5": ("CPz", "TP7", 0.75),
    "CP2": ("CPz", "TP8", 0.25), "CP4": ("CPz", "TP8", 0.5), "CP6": ("CPz", "TP8", 0.75),
    "P1": ("Pz", "P7", 0.25), "P3": ("Pz", "P7", 0.5), "P5": ("Pz", "P7", 0.75),
    "P2": ("Pz", "P8", 0.25), "P4": ("Pz", "P8", 0.5), "P6": ("Pz", "P8", 0.75),
    "PO3": ("POz", "PO7", 0.5), "PO4": ("POz", "PO8", 0.5),
}

CHANNEL_NAMES = (
    "Fp1", "Fp2",
    "AF7", "AF3", "AFz", "AF4", "AF8",
    "F9", "F7", "F5", "F3", "F1", "Fz", "F2", "F4", "F6", "F8", "F10",
    "FT7", "FC5", "FC3", "FC1", "FCz", "FC2", "FC4", "FC6", "FT8",
    "T7", "C5", "C3", "C1", "Cz", "C2", "C4", "C6", "T8",
    "TP7", "CP5", "CP3", "CP1", "CPz", "CP2", "CP4", "CP6", "TP8",
    "P7", "P5", "P3", "P1", "Pz", "P2", "P4", "P6", "P8",
    "PO7", "PO3", "POz", "PO4", "PO8",
    "O1", "Oz", "O2",
    "M1", "M2",
)

# Fp, AF and F rows carry most ocular contamination and are dropped from
# feature extraction. Fpz is absent from the montage (it is the ground site).
FRONTAL_EXCLUDED = frozenset(
    name for name in CHANNEL_NAMES
    if name.startswith(("Fp", "AF")) or (name[0] == "F" and name[1] not in "CT")
)


def _unit(inc_deg: float, azi_deg: float) -> np.ndarray:
    inc = np.deg2rad(inc_deg)
    azi = np.deg2rad(azi_deg)
    return np.array([np.sin(inc) * np.cos(azi), np.sin(inc) * np.sin(azi), np.cos(inc)])


def _slerp(a: np.ndarray, b: np.ndarray, t: float) -> np.ndarray:
    """Point at fraction t along the great circle from a to b."""
    omega = np.arccos(np.clip(np.dot(a, b), -1.0, 1.0))
    if omega < 1e-12:
        return a.copy()
    return (np.sin((1.0 - t) * omega) * a + np.sin(t * omega) * b) / np.sin(omega)


@dataclass(frozen=True)
class ChannelLayout:
    """Electrode names with unit-sphere positions at a fixed sampling rate."""

    names: tuple[str, ...]
    positions: np.ndarray  # (n_channels, 3) unit vectors
    fs_hz: float
    frontal_excluded: frozenset[str]
    reference_channels: tuple[str, str] = ("M1", "M2")

    @property
    def n_channels(self) -> int:
        return len(self.names)

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise KeyError(f"unknown channel {name!r}") from None

    def feature_channels(self) -> tuple[str, ...]:
        """Channels retained for decoding, in montage order."""
        dropped = self.frontal_excluded | set(self.reference_channels)
        return tuple(n for n in self.names if n not in dropped)

    def geodesic(self, a: str, b: str) -> float:
        """Great-circle distance in radians between two electrodes."""
        pa = self.positions[self.index(a)]
        pb = self.positions[self.index(b)]
        return float(np.arccos(np.clip(np.dot(pa, pb), -1.0, 1.0)))


def build_layout(fs_hz: float = FS_HZ) -> ChannelLayout:
    pos = {name: _unit(*angles) for name, angles in _DIRECT.items()}
    for name, (mid, outer, t) in _INTERP.items():
        pos[name] = _slerp(pos[mid], pos[outer], t)
    positions = np.array([pos[n] for n in CHANNEL_NAMES])
    positions /= np.linalg.norm(positions, axis=1, keepdims=True)
    layout = ChannelLayout(CHANNEL_NAMES, positions, float(fs_hz), FRONTAL_EXCLUDED)
    _validate(layout)
    return layout


def _validate(layout: ChannelLayout) -> None:
    if len(set(layout.names)) != 64:
        raise ValueError("layout must hold 64 distinct channels")
    for required in ("Cz", "M1", "M2"):
        layout.index(required)
    if len(layout.frontal_excluded) != 18:
        raise ValueError("exactly 18 frontal channels must be excluded")
    overlap = layout.frontal_excluded & {"Cz", "M1", "M2"}
    if overlap:
        raise ValueError(f"frontal exclusion may not cover {sorted(overlap)}")
    if len(layout.feature_channels()) != 44:
        raise ValueError("feature set must hold 44 channels")
