"""Training-set synthesis from the reference closed loop.

A training run closes the loop with the full-state-feedback oracle (u = -P x
from the true state), drives it with a configured excitation moment, and
records at every control step the pair

    (tapped-delay window of IMU channels  ->  true state vector)

The control period equals ``record_stride * dt``, so the stored windows are
exactly what the online buffer produces at the same rate (replay
equivalence).  The first ``transient_skip`` seconds are excluded so the set
reflects the steady excitation, not the startup transient.

Excitation classes: harmonic at a fixed frequency, linear chirp, and a
seeded piecewise-constant Gaussian sequence (hold interval = dt) normalized
to unit variance.  The recommended harmonic frequency is the closed-loop
cutoff of the reference model.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import dynamics as dyn
from .control import CHANNEL_SETS, RegulatorGain, design_gain, regulator_output
from .nn import TappedDelayBuffer
from .seeds import child_seed
from .training import TrainingSet

EXCITATION_KINDS = ("harmonic_fixed", "chirp", "random_normalized")


@dataclass
class Excitation:
    """External moment waveform applied to the configured axes.

    harmonic_fixed: amplitude * sin(2 pi f t).
    chirp: amplitude * sin(2 pi (f_start t + (f_end - f_start) t^2 / (2 D)));
        instantaneous frequency runs f_start -> f_end over ``duration``.
    random_normalized: seeded Gaussian sequence held constant over ``hold_dt``
        intervals, standardized to zero mean / unit variance over the run,
        then scaled by amplitude.  Each applied axis gets an independent
        realization (a common waveform would leave the axes fully correlated
        in the recorded data, hiding the cross-axis structure from training).
    """

    kind: str
    amplitude: float
    frequency: float = 0.0
    f_start: float = 0.0
    f_end: float = 0.0
    duration: float = 0.0
    seed: int = 0
    hold_dt: float = 1e-4
    axes: tuple = (0, 1, 2)
    # harmonic only: phase offset [rad] per applied axis (zeros = the common
    # in-phase disturbance; a stagger exercises independent axis responses)
    axis_phases: tuple = ()
    _table: np.ndarray = field(init=False, default=None, repr=False)

    def __post_init__(self):
        if self.kind not in EXCITATION_KINDS:
            raise ValueError(f"unknown excitation kind {self.kind!r} (expected {EXCITATION_KINDS})")
        if not self.amplitude > 0.0:
            raise ValueError("excitation amplitude must be positive")
        if self.kind == "harmonic_fixed" and not self.frequency > 0.0:
            raise ValueError("harmonic excitation needs frequency > 0")
        if self.kind == "chirp":
            if not (self.f_start > 0.0 and self.f_end > self.f_start):
                raise ValueError("chirp needs 0 < f_start < f_end")
            if not self.duration > 0.0:
                raise ValueError("chirp needs the sweep duration")
        if self.kind == "random_normalized":
            if not (self.hold_dt > 0.0 and self.duration > 0.0):
                raise ValueError("random excitation needs hold_dt and duration")
        axes = tuple(sorted(set(int(a) for a in self.axes)))
        if not axes or any(a not in (0, 1, 2) for a in axes):
            raise ValueError(f"axes must be a nonempty subset of (0, 1, 2), got {self.axes}")
        self.axes = axes
        phases = tuple(float(p) for p in self.axis_phases)
        if phases and len(phases) != len(axes):
            raise ValueError(f"need one phase per applied axis ({len(axes)}), got {len(phases)}")
        if phases and self.kind != "harmonic_fixed":
            raise ValueError("axis_phases only apply to harmonic excitation")
        self.axis_phases = phases

    def _noise_table(self, axis: int) -> np.ndarray:
        if self._table is None:
            n = int(math.ceil(self.duration / self.hold_dt)) + 1
            tables = {}
            for ax in self.axes:
                rng = np.random.default_rng(child_seed(self.seed, "excitation-axis", ax))
                z = rng.standard_normal(n)
                tables[ax] = (z - z.mean()) / z.std()
            self._table = tables
        return self._table[axis]

    def axis_values(self, t, axis: int) -> np.ndarray:
        """Vectorized waveform on one applied axis."""
        t = np.asarray(t, dtype=float)
        if self.kind == "harmonic_fixed":
            phase = self.axis_phases[self.axes.index(axis)] if self.axis_phases else 0.0
            return self.amplitude * np.sin(2.0 * math.pi * self.frequency * t + phase)
        if self.kind == "chirp":
            phase = self.f_start * t + (self.f_end - self.f_start) * t * t / (2.0 * self.duration)
            return self.amplitude * np.sin(2.0 * math.pi * phase)
        table = self._noise_table(axis)
        idx = np.minimum((t / self.hold_dt).astype(int), table.size - 1)
        return self.amplitude * table[idx]

    def values(self, t) -> np.ndarray:
        """Waveform on the first applied axis (the only one for the
        deterministic kinds, which share the waveform across axes)."""
        return self.axis_values(t, self.axes[0])


def excitation_value(exc: Excitation, t: float) -> float:
    """Waveform sample at one instant (t >= 0)."""
    if t < 0.0:
        raise ValueError(f"time must be non-negative, got {t}")
    return float(exc.values(np.asarray([t]))[0])


def harmonic(frequency: float, amplitude: float, axes=(0, 1, 2)) -> Excitation:
    return Excitation("harmonic_fixed", amplitude, frequency=frequency, axes=axes)


@dataclass
class SamplingConfig:
    """How a training run is simulated and recorded."""

    excitation: Excitation
    duration: float = 20.0
    dt: float = 1e-4
    memory_depth: int = 8
    record_stride: int = 10
    channels: str = "gyro_accel"
    imu_seed: int = 0
    noisy_windows: bool = False
    transient_skip: float = 1.0

    def __post_init__(self):
        if not (self.duration > 0.0 and self.dt > 0.0 and self.dt <= dyn.DT_MAX):
            raise ValueError(f"need duration > 0 and 0 < dt <= {dyn.DT_MAX}")
        if self.record_stride < 1:
            raise ValueError("record_stride must be >= 1")
        if self.memory_depth < 0:
            raise ValueError("memory_depth must be >= 0")
        if self.channels not in CHANNEL_SETS:
            raise ValueError(f"unknown channel selection {self.channels!r}")
        if not 0.0 <= self.transient_skip < self.duration:
            raise ValueError("transient_skip must lie inside the run duration")
        n_recorded = int((self.duration - self.transient_skip) / (self.dt * self.record_stride))
        if n_recorded < self.memory_depth + 10:
            raise ValueError(
                f"duration too short: {n_recorded} recorded samples < memory_depth + 10")

    @property
    def control_period(self) -> float:
        return self.dt * self.record_stride


class GenerationError(RuntimeError):
    """Training-set generation failed (loop divergence carries the time)."""


def external_moment_table(excitation: Excitation, n_steps: int, dt: float) -> np.ndarray:
    """External moments on the half-step grid (2*n_steps + 1 rows, 3 axes)."""
    t_half = np.arange(2 * n_steps + 1) * (0.5 * dt)
    table = np.zeros((2 * n_steps + 1, 3))
    for axis in excitation.axes:
        table[:, axis] = excitation.axis_values(t_half, axis)
    return table


def generate_training_set(plant: dyn.PlantParams, imu: dyn.ImuParams, gain: RegulatorGain,
                          cfg: SamplingConfig) -> TrainingSet:
    """Record (window -> true state) pairs from the oracle-stabilized loop.

    Deterministic for identical inputs and seeds.  Raises GenerationError on
    loop divergence (the oracle loop must hold the excited plant inside the
    gimbal limit) and warns on a degenerate (zero-excitation) set.
    """
    model = dyn.linearize(plant, dyn.PlantState.zero(), imu)
    closed = model.a - model.b @ gain.p
    if np.max(np.linalg.eigvals(closed).real) >= 0.0:
        raise GenerationError("reference closed loop is unstable at the origin")

    n_steps = int(round(cfg.duration / cfg.dt))
    stride = cfg.record_stride
    n_ctrl = n_steps // stride
    m_ext = external_moment_table(cfg.excitation, n_steps, cfg.dt)
    p_arr = plant.as_array()

    channel_names = CHANNEL_SETS[cfg.channels]
    n_ch = len(channel_names)
    buf = TappedDelayBuffer(cfg.memory_depth, n_ch)
    imu_clean = dyn.ImuParams(imu.gyro_gain, imu.accel_gain)
    noise_rng = np.random.default_rng(child_seed(cfg.imu_seed, "imu-noise"))

    windows = []
    targets = []
    stream = []
    y = np.zeros(6)
    for i in range(n_ctrl):
        t = i * stride * cfg.dt
        state = dyn.PlantState.from_vector(y)
        reading = dyn.imu_measure(state, imu if cfg.noisy_windows else imu_clean, noise_rng)
        if cfg.channels == "gyro":
            sample = reading.u_g
        else:
            sample = np.concatenate([reading.u_g, reading.u_a])
        window = buf.push(sample)
        if t >= cfg.transient_skip:
            windows.append(window)
            targets.append(y.copy())
            stream.append(sample)
        u = regulator_output(gain, y)
        status, step_done = dyn._rk4_span(
            y, p_arr, m_ext[2 * i * stride: 2 * (i + 1) * stride + 1],
            u[0], u[1], u[2], cfg.dt, stride, dyn.ANGLE_LIMIT)
        if status == 2:
            raise GenerationError(
                f"singular acceleration matrix at t = {t + step_done * cfg.dt:.6g} s")
        if status == 1:
            raise GenerationError(
                f"reference loop diverged at t = {t + (step_done + 1) * cfg.dt:.6g} s")

    windows = np.asarray(windows)
    targets = np.asarray(targets)
    stream = np.asarray(stream)

    mean = stream.mean(axis=0)
    std = stream.std(axis=0)
    degenerate = std < 1e-12 * (np.abs(mean) + 1.0)
    if np.any(degenerate):
        bad = [channel_names[i] for i in np.nonzero(degenerate)[0]]
        warnings.warn(f"degenerate training set: no variation on channels {bad}", stacklevel=2)
        std = np.where(degenerate, 1.0, std)

    exc = cfg.excitation
    metadata = {
        "excitation_kind": exc.kind,
        "excitation_amplitude": repr(exc.amplitude),
        "excitation_frequency": repr(exc.frequency),
        "excitation_f_start": repr(exc.f_start),
        "excitation_f_end": repr(exc.f_end),
        "excitation_seed": str(exc.seed),
        "excitation_axes": ",".join(str(a) for a in exc.axes),
        "duration": repr(cfg.duration),
        "dt": repr(cfg.dt),
        "record_stride": str(cfg.record_stride),
        "memory_depth": str(cfg.memory_depth),
        "channels": cfg.channels,
        "imu_seed": str(cfg.imu_seed),
        "noisy_windows": str(cfg.noisy_windows),
        "transient_skip": repr(cfg.transient_skip),
        "degenerate": str(bool(np.any(degenerate))),
    }
    return TrainingSet(windows, targets, channel_names, mean, std, metadata)


def regulator_cloning_targets(training_set: TrainingSet, gain: RegulatorGain) -> TrainingSet:
    """Derived set for training a network-as-regulator: targets u = -P x."""
    u = np.clip(-(training_set.targets @ gain.p.T), -gain.saturation, gain.saturation)
    meta = dict(training_set.metadata)
    meta["targets"] = "oracle_control_moments"
    return TrainingSet(training_set.windows, u, training_set.channel_names,
                       training_set.channel_mean, training_set.channel_std, meta)


def recommend_frequency(model: dyn.LinearModel, gain: RegulatorGain | None = None,
                        poles=None) -> float:
    """Training excitation frequency [Hz]: the closed-loop cutoff on axis 1."""
    if gain is None:
        from .reference import reference_poles
        gain = design_gain(model, poles if poles is not None else reference_poles())
    return dyn.cutoff_frequency(model, gain.p, axis=0)


# --------------------------------------------------------------------------
# Training-set CSV + sidecar metadata
# --------------------------------------------------------------------------

def window_column_names(channel_names, memory_depth: int) -> list[str]:
    return [f"{ch}_k{lag}" for lag in range(memory_depth + 1) for ch in channel_names]


def save_training_set(path, training_set: TrainingSet) -> None:
    """CSV with named window/target columns plus a ``<path>.meta`` sidecar."""
    names = window_column_names(training_set.channel_names, training_set.memory_depth)
    header = ",".join(names + [f"x{i}" for i in range(1, training_set.targets.shape[1] + 1)])
    data = np.hstack([training_set.windows, training_set.targets])
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(header + "\n")
        for row in data:
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")

    from .kv import write_kv_file
    meta = dict(training_set.metadata)
    meta["n_samples"] = str(training_set.n_samples)
    meta["channel_names"] = ",".join(training_set.channel_names)
    for name, m, s in zip(training_set.channel_names, training_set.channel_mean,
                          training_set.channel_std):
        meta[f"norm_mean_{name}"] = repr(float(m))
        meta[f"norm_std_{name}"] = repr(float(s))
    write_kv_file(str(path) + ".meta", meta, header="training set metadata")


def load_training_set(path) -> TrainingSet:
    from .kv import read_kv_file
    meta = read_kv_file(str(path) + ".meta")
    channel_names = tuple(meta.pop("channel_names").split(","))
    mean = np.array([float(meta.pop(f"norm_mean_{name}")) for name in channel_names])
    std = np.array([float(meta.pop(f"norm_std_{name}")) for name in channel_names])
    meta.pop("n_samples", None)

    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        data = np.array([[float(tok) for tok in line.split(",")] for line in fh if line.strip()])
    n_targets = sum(1 for name in header if name.startswith("x") and name[1:].isdigit())
    n_window = len(header) - n_targets
    return TrainingSet(data[:, :n_window], data[:, n_window:], channel_names, mean, std, dict(meta))
