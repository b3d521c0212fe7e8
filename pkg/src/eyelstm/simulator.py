"""Seeded stand-in for the eye tracker and the correlation-filter tracker.

A scenario fixes a smooth ground-truth trajectory and the failure modes of
each sensor. Truth, gaze and tracker noise come from three independent
generators split off one seed, so changing the events of one stream never
perturbs the others.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .core_data import EyeSample, FrameDims, TrackBox

SCENARIOS = ("occlusion", "deformation", "illumination", "fast_motion")

_TRUTH, _EYE, _TRACK = 0, 1, 2


@dataclass(frozen=True)
class Scenario:
    """Timing, trajectory and sensor-noise parameters for one simulated sequence.

    Pixel noise for the gaze stream is in display pixels; everything about the
    tracker is in original-video pixels. Event windows are ``(start_frame,
    n_frames)`` pairs.
    """

    name: str = "occlusion"
    duration_s: float = 120.0
    frame_ms: float = 70.0
    eye_ms: float = 18.0
    dims: FrameDims = field(default_factory=FrameDims)
    amplitude_frac: float = 0.8
    period_range_s: tuple = (8.0, 20.0)
    speed: float = 1.0
    sigma_eye_px: float = 60.0
    pursuit_lag_ms: float = 150.0
    blink_rate_hz: float = 0.25
    blink_len_ms: tuple = (100.0, 300.0)
    spike_rate_hz: float = 0.5
    spike_scale: tuple = (3.0, 6.0)
    sigma_track_px: float = 3.0
    box_size_px: tuple = (60.0, 50.0)
    occlusions: tuple = ()
    drift_px: tuple = (1.5, 1.0)
    illuminations: tuple = ()
    illumination_mult: float = 6.0
    deform_amp: float = 0.0
    deform_period_s: float = 3.0
    seed: int = 0

    def __post_init__(self):
        if min(self.duration_s, self.frame_ms, self.eye_ms) <= 0:
            raise ValueError("durations and sampling intervals must be positive")
        if min(self.sigma_eye_px, self.sigma_track_px) < 0 or self.pursuit_lag_ms < 0:
            raise ValueError("noise parameters must be non-negative")
        if min(self.period_range_s) <= 0 or self.speed <= 0:
            raise ValueError("periods and speed must be positive")
        if not 0 <= self.deform_amp < 1:
            raise ValueError("deform_amp must lie in [0, 1)")
        for start, length in (*self.occlusions, *self.illuminations):
            if start < 0 or length <= 0 or start + length > self.n_frames:
                raise ValueError(f"event window ({start}, {length}) outside {self.n_frames} frames")

    @property
    def n_frames(self) -> int:
        return int(self.duration_s * 1000.0 // self.frame_ms)

    @property
    def n_eye_samples(self) -> int:
        return int(self.duration_s * 1000.0 // self.eye_ms) + 1


def _every(n_frames: int, frame_ms: float, first_s: float, every_s: float, length: int) -> tuple:
    out = []
    start = int(first_s * 1000 / frame_ms)
    step = int(every_s * 1000 / frame_ms)
    while start + length <= n_frames:
        out.append((start, length))
        start += step
    return tuple(out)


def make_scenario(name: str, duration_s: float = 120.0, seed: int = 0, **overrides) -> Scenario:
    """One of the four named presets; keyword overrides replace any field.

    Event windows are laid on a fixed schedule scaled to the duration.
    """
    if name not in SCENARIOS:
        raise ValueError(f"unknown scenario {name!r}; choose from {', '.join(SCENARIOS)}")
    base = Scenario(name=name, duration_s=duration_s, seed=seed)
    n, fm = base.n_frames, base.frame_ms
    if name == "occlusion":
        preset = dict(occlusions=_every(n, fm, 3.0, 9.0, 30), drift_px=(1.0, 0.7))
    elif name == "deformation":
        preset = dict(deform_amp=0.4, sigma_track_px=6.0, occlusions=_every(n, fm, 6.0, 12.0, 20), drift_px=(-1.0, 1.0))
    elif name == "illumination":
        preset = dict(illuminations=_every(n, fm, 2.0, 6.0, 30), illumination_mult=6.0)
    else:
        preset = dict(speed=2.0, sigma_track_px=4.0, occlusions=_every(n, fm, 4.0, 9.0, 20), drift_px=(-1.5, 1.5))
    preset.update(overrides)
    return replace(base, **preset)


def gen_truth(s: Scenario) -> np.ndarray:
    """Per-frame target centers (original pixels) as a sum of three sinusoids per axis."""
    rng = np.random.default_rng((s.seed, _TRUTH))
    t = np.arange(s.n_frames) * s.frame_ms / 1000.0
    out = np.empty((s.n_frames, 2))
    for axis, size in enumerate((s.dims.width_px, s.dims.height_px)):
        periods = rng.uniform(*s.period_range_s, size=3) / s.speed
        phases = rng.uniform(0.0, 2 * np.pi, size=3)
        weights = rng.uniform(0.3, 1.0, size=3)
        # sum of |amplitudes| bounded by the half-range that keeps a 5% margin
        amps = weights / weights.sum() * s.amplitude_frac * 0.45 * size
        wave = (amps[:, None] * np.sin(2 * np.pi * t[None] / periods[:, None] + phases[:, None])).sum(axis=0)
        out[:, axis] = size / 2.0 + wave
    return out


def _display_scale(dims: FrameDims) -> np.ndarray:
    return np.array([dims.disp_width_px / dims.width_px, dims.disp_height_px / dims.height_px])


def gen_eye_stream(truth: np.ndarray, s: Scenario) -> list[EyeSample]:
    """Gaze samples every ``eye_ms`` in display pixels.

    The gaze follows the frame that was on screen ``pursuit_lag_ms`` earlier,
    plus Gaussian jitter, occasional one-sample saccade spikes, and blinks
    that invalidate every sample they cover.
    """
    rng = np.random.default_rng((s.seed, _EYE))
    n = s.n_eye_samples
    t = np.arange(n) * s.eye_ms
    frame = np.clip(np.floor((t - s.pursuit_lag_ms) / s.frame_ms).astype(int), 0, len(truth) - 1)
    pos = truth[frame] * _display_scale(s.dims)
    pos = pos + rng.normal(0.0, 1.0, size=(n, 2)) * s.sigma_eye_px

    valid = np.ones(n, dtype=bool)
    total_ms = s.duration_s * 1000.0
    if s.blink_rate_hz > 0:
        start = rng.exponential(1000.0 / s.blink_rate_hz)
        while start < total_ms:
            length = rng.uniform(*s.blink_len_ms)
            valid[(t >= start) & (t < start + length)] = False
            start += length + rng.exponential(1000.0 / s.blink_rate_hz)

    if s.spike_rate_hz > 0:
        hit = rng.random(n) < s.spike_rate_hz * s.eye_ms / 1000.0
        k = int(hit.sum())
        mag = rng.uniform(*s.spike_scale, size=k) * s.sigma_eye_px
        ang = rng.uniform(0.0, 2 * np.pi, size=k)
        pos[hit] += np.column_stack([np.cos(ang), np.sin(ang)]) * mag[:, None]

    return [EyeSample(float(ti), float(x), float(y), True) if ok else EyeSample(float(ti), 0.0, 0.0, False)
            for ti, (x, y), ok in zip(t, pos, valid)]


def _window_mask(n: int, windows) -> np.ndarray:
    mask = np.zeros(n, dtype=bool)
    for start, length in windows:
        mask[start:start + length] = True
    return mask


def gen_track_stream(truth: np.ndarray, s: Scenario) -> list[TrackBox]:
    """One box per frame from a tracker that loses the target now and then.

    Inside an occlusion window the center freezes at the last tracked value
    and drifts by ``drift_px`` per frame; illumination windows multiply the
    noise; deformation only changes the box size.
    """
    rng = np.random.default_rng((s.seed, _TRACK))
    n = len(truth)
    sigma = np.full(n, s.sigma_track_px)
    sigma[_window_mask(n, s.illuminations)] *= s.illumination_mult
    centers = truth + rng.normal(0.0, 1.0, size=(n, 2)) * sigma[:, None]
    drift = np.asarray(s.drift_px, dtype=np.float64)
    for start, length in s.occlusions:
        entry = centers[start - 1] if start > 0 else truth[0]
        centers[start:start + length] = entry + np.arange(1, length + 1)[:, None] * drift

    t = np.arange(n) * s.frame_ms / 1000.0
    w0, h0 = s.box_size_px
    phase = 2 * np.pi * t / s.deform_period_s
    w = w0 * (1.0 + s.deform_amp * np.sin(phase))
    h = h0 * (1.0 - s.deform_amp * np.sin(phase))
    return [TrackBox(k, float(cx - wk / 2), float(cy - hk / 2), float(wk), float(hk))
            for k, ((cx, cy), wk, hk) in enumerate(zip(centers, w, h))]


def simulate(s: Scenario) -> tuple[np.ndarray, list[EyeSample], list[TrackBox]]:
    truth = gen_truth(s)
    return truth, gen_eye_stream(truth, s), gen_track_stream(truth, s)


def noiseless(s: Scenario) -> Scenario:
    """Same trajectory with every sensor error switched off."""
    return replace(s, sigma_eye_px=0.0, pursuit_lag_ms=0.0, blink_rate_hz=0.0, spike_rate_hz=0.0,
                   sigma_track_px=0.0, occlusions=(), illuminations=(), deform_amp=0.0)
