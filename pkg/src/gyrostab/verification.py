"""Closed-loop verification: simulation, stability classification, sweeps.

A trained network can only be judged inside the loop, so verification runs
the full nonlinear plant with the candidate controller and classifies the
trace.  A run is UNSTABLE when any gimbal angle leaves the physical limit
(pi/2) or the arithmetic goes non-finite; otherwise the headline metric is
the maximum pumping angle |a1| in arcminutes.

The standard verification disturbance is a step moment on the platform axis
plus the training-class harmonic, both at the training amplitude: the step
probes transient/off-training behavior, the harmonic the steady regime.

Three sweep experiments mirror the study design:
  - sweep_frequency: training-excitation frequency vs (epochs, max angle);
  - sweep_architecture: hidden-neuron count x memory depth x activation grid,
    several seeds per cell;
  - compare_trainers: loss histories of the three optimizers from identical
    initial weights.

Every sweep cell is a self-contained recipe (ObserverCell) whose fields are
plain scalars plus the plant/IMU/gain records; a manifest row captures the
recipe, and re-running a cell from its manifest reproduces the CSV row byte
for byte.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import dynamics as dyn
from .control import (CHANNEL_SETS, LoopTopology, RegulatorGain, full_state_feedback,
                      nn_observer, select_channels)
from .nn import Activation, Mlp, TappedDelayBuffer, forward, init_mlp, Layer
from .sampling import (Excitation, SamplingConfig, external_moment_table,
                       generate_training_set, harmonic)
from .seeds import child_seed
from .training import TrainerConfig, TrainingReport, TrainingSet, train

RAD_TO_ARCMIN = 180.0 * 60.0 / math.pi

UNSTABLE_MARKER = "UNSTABLE"


@dataclass(frozen=True)
class SimTrace:
    """Closed-loop trace sampled on the control grid.

    Divergence is checked at every integration substep; ``diverged`` is set
    iff the gimbal limit was breached or values went non-finite, with the
    breach time in ``divergence_time``.
    """

    time: np.ndarray
    states: np.ndarray      # (n, 6)
    controls: np.ndarray    # (n, 3)
    x_hat: np.ndarray | None
    diverged: bool
    divergence_time: float | None

    def __post_init__(self):
        n = self.time.shape[0]
        if self.states.shape != (n, 6) or self.controls.shape != (n, 3):
            raise ValueError("trace series lengths disagree")
        if self.x_hat is not None and self.x_hat.shape != (n, 6):
            raise ValueError("estimate series length disagrees")


def max_pumping_angle(trace: SimTrace) -> float:
    """Max |a1| over the trace in arcminutes; +inf marks an UNSTABLE run."""
    if trace.diverged:
        return math.inf
    if trace.time.size == 0:
        return 0.0
    return float(np.max(np.abs(trace.states[:, 0]))) * RAD_TO_ARCMIN


def breaches_limit(trace: SimTrace, angle_limit: float = dyn.ANGLE_LIMIT) -> bool:
    """Threshold-crossing classifier; monotone in the limit by construction."""
    if trace.diverged:
        return True
    if trace.time.size == 0:
        return False
    return bool(np.max(np.abs(trace.states[:, :3])) > angle_limit)


@dataclass(frozen=True)
class Disturbance:
    """Verification forcing: summed excitation waveforms plus a step moment."""

    excitation: Excitation | tuple | None
    step_amplitude: float = 0.0
    step_time: float = 0.0
    step_axis: int = 0

    def parts(self) -> tuple:
        if self.excitation is None:
            return ()
        if isinstance(self.excitation, Excitation):
            return (self.excitation,)
        return tuple(self.excitation)

    def table(self, n_steps: int, dt: float) -> np.ndarray:
        table = np.zeros((2 * n_steps + 1, 3))
        for part in self.parts():
            table += external_moment_table(part, n_steps, dt)
        if self.step_amplitude != 0.0:
            t_half = np.arange(2 * n_steps + 1) * (0.5 * dt)
            table[:, self.step_axis] += np.where(t_half >= self.step_time,
                                                 self.step_amplitude, 0.0)
        return table


def standard_disturbance(frequency: float, amplitude: float, axes=(0, 1, 2),
                         step_scale: float = 1.0, step_time: float = 0.5) -> Disturbance:
    """Step on the platform axis plus the training-class harmonic."""
    return Disturbance(harmonic(frequency, amplitude, axes),
                       step_amplitude=step_scale * amplitude, step_time=step_time, step_axis=0)


def simulate_closed_loop(plant: dyn.PlantParams, imu: dyn.ImuParams, topology: LoopTopology,
                         disturbance: Disturbance, duration: float, dt: float = 1e-4,
                         control_stride: int = 10, use_noise: bool = False, noise_seed: int = 0,
                         shadow_net: Mlp | None = None) -> SimTrace:
    """Integrate the plant with the controller in the loop.

    The IMU is sampled once per control step (period control_stride * dt) and
    the control moment is held between updates.  ``shadow_net`` rides along
    without closing the loop: it is fed the same measurement windows and its
    estimates are recorded (used to evaluate observers against an oracle-
    driven trajectory).  Deterministic given seeds; stops early on
    divergence, recording the breach time.
    """
    if not (duration > 0.0 and 0.0 < dt <= dyn.DT_MAX and control_stride >= 1):
        raise ValueError("need duration > 0, 0 < dt <= DT_MAX, control_stride >= 1")
    n_steps = int(round(duration / dt))
    n_ctrl = n_steps // control_stride
    m_ext = disturbance.table(n_steps, dt)
    p_arr = plant.as_array()
    topology.reset()

    imu_loop = imu if use_noise else dyn.ImuParams(imu.gyro_gain, imu.accel_gain)
    rng = np.random.default_rng(child_seed(noise_seed, "verify-imu-noise"))

    shadow_buf = None
    if shadow_net is not None:
        ch = shadow_net.meta.get("channels", "gyro_accel")
        depth = int(shadow_net.meta.get("memory_depth", 0))
        shadow_buf = TappedDelayBuffer(depth, len(CHANNEL_SETS[ch]))

    want_xhat = topology.has_observer or shadow_net is not None
    times = np.empty(n_ctrl)
    states = np.empty((n_ctrl, 6))
    controls = np.empty((n_ctrl, 3))
    x_hats = np.empty((n_ctrl, 6)) if want_xhat else None

    y = np.zeros(6)
    diverged = False
    div_time = None
    recorded = 0
    stride = control_stride
    from .control import controller_step

    for i in range(n_ctrl):
        t = i * stride * dt
        state = dyn.PlantState.from_vector(y)
        reading = dyn.imu_measure(state, imu_loop, rng)
        u, x_hat = controller_step(topology, reading, true_state=y)
        if shadow_net is not None:
            window = shadow_buf.push(select_channels(reading, shadow_net.meta.get("channels", "gyro_accel")))
            x_hat = forward(shadow_net, window)
        times[i] = t
        states[i] = y
        controls[i] = u
        if want_xhat:
            x_hats[i] = x_hat
        recorded = i + 1

        status, step_done = dyn._rk4_span(
            y, p_arr, m_ext[2 * i * stride: 2 * (i + 1) * stride + 1],
            u[0], u[1], u[2], dt, stride, dyn.ANGLE_LIMIT)
        if status == 2:
            raise dyn.SingularAccelerationMatrixError(y)
        if status == 1:
            diverged = True
            div_time = t + (step_done + 1) * dt
            break

    return SimTrace(times[:recorded], states[:recorded], controls[:recorded],
                    x_hats[:recorded] if want_xhat else None, diverged, div_time)


def save_trace_csv(path, trace: SimTrace) -> None:
    cols = ["t", "alpha1", "alpha2", "alpha3", "rate1", "rate2", "rate3", "u1", "u2", "u3"]
    blocks = [trace.time[:, None], trace.states, trace.controls]
    if trace.x_hat is not None:
        cols += [f"xhat{i}" for i in range(1, 7)]
        blocks.append(trace.x_hat)
    data = np.hstack(blocks)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(cols) + "\n")
        for row in data:
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


# --------------------------------------------------------------------------
# Observer training cells (the unit of sweep work)
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ObserverCell:
    """Complete recipe for one sweep cell: data -> training -> verification.

    Targets are trained in per-component standardized units (equal weight for
    angles and rates); the scaling is folded back into the final purelin
    layer, so the stored network maps windows to raw state units.
    """

    plant: dyn.PlantParams
    imu: dyn.ImuParams
    gain: RegulatorGain
    frequency: float
    amplitude: float
    hidden_neurons: int
    memory_depth: int
    activation: str = "tansig"
    axes: tuple = (0, 1, 2)
    channels: str = "gyro_accel"
    train_duration: float = 12.0
    dt: float = 1e-4
    record_stride: int = 10
    transient_skip: float = 1.0
    noisy_windows: bool = True
    n_train: int = 1200
    loss_goal_rel: float = 1e-3
    max_epochs: int = 300
    verify_duration: float = 4.0
    step_scale: float = 1.0
    step_time: float = 0.5
    # verify_mode: "standard" = step + training-class harmonic; "class" =
    # training-class harmonic only; "probe_pair" = class harmonic plus a
    # phase-staggered copy probing independent axis responses (architecture
    # sweeps: unstable if either run breaches, angle taken from the staggered
    # run).  The class run uses verify_duration (long, so slowly growing
    # marginal modes are caught); the probe run uses probe_duration (short,
    # so the angle reflects the quasi-static response, not wander growth).
    verify_mode: str = "standard"
    probe_duration: float = 2.5
    # run the verification sims with seeded measurement noise (the loop sees
    # the same sensor model it trained on); keeps runs deterministic
    verify_noise: bool = False
    probe_phases: tuple = (0.0, 2.0943951023931953, 4.1887902047863905)  # 0, 2pi/3, 4pi/3
    net_seed: int = 1
    shuffle_seed: int = 2
    imu_seed: int = 3
    seed_rep: int = 0

    def sampling_config(self) -> SamplingConfig:
        return SamplingConfig(
            excitation=harmonic(self.frequency, self.amplitude, self.axes),
            duration=self.train_duration, dt=self.dt, memory_depth=self.memory_depth,
            record_stride=self.record_stride, channels=self.channels,
            imu_seed=self.imu_seed, noisy_windows=self.noisy_windows,
            transient_skip=self.transient_skip)

    def disturbance(self) -> Disturbance:
        return standard_disturbance(self.frequency, self.amplitude, self.axes,
                                    step_scale=self.step_scale, step_time=self.step_time)

    def class_disturbance(self) -> Disturbance:
        """Training-class harmonic only (the in-sweep regulation check)."""
        return Disturbance(harmonic(self.frequency, self.amplitude, self.axes))

    def probe_disturbance(self) -> Disturbance:
        """Same class and amplitude with per-axis phase stagger."""
        return Disturbance(Excitation("harmonic_fixed", self.amplitude,
                                      frequency=self.frequency, axes=self.axes,
                                      axis_phases=self.probe_phases[:len(self.axes)]))


@dataclass
class SweepRecord:
    """One sweep outcome; max_angle_arcmin = +inf encodes UNSTABLE."""

    kind: str
    frequency: float
    hidden_neurons: int
    memory_depth: int
    activation: str
    seed_rep: int
    epochs: int = 0
    converged: bool = False
    final_loss: float = math.nan
    max_angle_arcmin: float = math.nan
    error: str | None = None

    @property
    def unstable(self) -> bool:
        return math.isinf(self.max_angle_arcmin)


# Worker-local cache of generated training sets, keyed by everything that
# determines the recorded data.  Sweep cells sharing a data recipe (same
# seed/frequency/depth) then pay for one simulation per worker process.
_GENERATION_CACHE: dict = {}


def _generation_key(cell: ObserverCell) -> tuple:
    imu = cell.imu
    return (
        tuple(cell.plant.as_array()), tuple(imu.gyro_gain), tuple(imu.accel_gain),
        tuple(imu.gyro_noise_std), tuple(imu.accel_noise_std),
        tuple(map(tuple, cell.gain.p)), cell.gain.saturation,
        cell.frequency, cell.amplitude, cell.axes, cell.channels,
        cell.train_duration, cell.dt, cell.record_stride, cell.transient_skip,
        cell.noisy_windows, cell.memory_depth, cell.imu_seed,
    )


def _cell_training_set(cell: ObserverCell) -> TrainingSet:
    key = _generation_key(cell)
    cached = _GENERATION_CACHE.get(key)
    if cached is None:
        cached = generate_training_set(cell.plant, cell.imu, cell.gain, cell.sampling_config())
        if len(_GENERATION_CACHE) > 8:
            _GENERATION_CACHE.clear()
        _GENERATION_CACHE[key] = cached
    return cached


def standardize_targets(training_set: TrainingSet):
    """Per-component standardized copy plus the (mean, std) to fold back."""
    t_mean = training_set.targets.mean(axis=0)
    t_std = training_set.targets.std(axis=0)
    t_std = np.where(t_std < 1e-300, 1.0, t_std)
    scaled = TrainingSet(training_set.windows, (training_set.targets - t_mean) / t_std,
                         training_set.channel_names, training_set.channel_mean,
                         training_set.channel_std, dict(training_set.metadata))
    return scaled, t_mean, t_std


def fold_output_scaling(net: Mlp, t_mean: np.ndarray, t_std: np.ndarray) -> Mlp:
    """Rescale the final purelin layer so outputs are in raw target units."""
    last = net.layers[-1]
    if last.activation is not Activation.PURELIN:
        raise ValueError("output scaling can only be folded into a purelin layer")
    w = last.weights * t_std[:, None]
    b = last.bias * t_std + t_mean
    layers = list(net.layers[:-1]) + [Layer(w, b, last.activation)]
    return Mlp(layers, net.input_mean, net.input_std, dict(net.meta))


def train_observer_for_cell(cell: ObserverCell, training_set: TrainingSet | None = None):
    """Generate/subsample data, train in standardized units, return raw-unit net.

    Returns (net, report, goal): the network estimates raw states, the report
    is the standardized-space training trace, and goal is the absolute loss
    goal derived from cell.loss_goal_rel (relative to the variance baseline,
    i.e. the loss of the best constant predictor).
    """
    if training_set is None:
        training_set = _cell_training_set(cell)
    if cell.n_train < training_set.n_samples:
        idx = np.linspace(0, training_set.n_samples - 1, cell.n_train).astype(int)
        training_set = training_set.subset(idx)

    scaled, t_mean, t_std = standardize_targets(training_set)
    n_ch = len(CHANNEL_SETS[cell.channels])
    widths = [n_ch * (cell.memory_depth + 1), cell.hidden_neurons, 6]
    net = init_mlp(widths, [cell.activation, "purelin"], seed=cell.net_seed,
                   input_mean=scaled.window_mean(), input_std=scaled.window_std(),
                   meta={"channels": cell.channels, "memory_depth": str(cell.memory_depth)})

    # baseline = loss of predicting the mean; with unit-variance targets it
    # is output_width / 2, but compute it from the data to stay exact
    baseline = float(np.sum(scaled.targets ** 2)) / (2.0 * scaled.n_samples)
    goal = cell.loss_goal_rel * baseline
    config = TrainerConfig(algorithm="levenberg_marquardt", loss_goal=goal,
                           max_epochs=cell.max_epochs, shuffle_seed=cell.shuffle_seed)
    trained, report = train(net, scaled, config)
    return fold_output_scaling(trained, t_mean, t_std), report, goal


def run_observer_cell(cell: ObserverCell) -> SweepRecord:
    """Full cell: data -> train -> closed-loop verification -> record.

    The verification disturbance follows cell.verify_mode; see ObserverCell.
    """
    record = SweepRecord(kind="observer", frequency=cell.frequency,
                         hidden_neurons=cell.hidden_neurons, memory_depth=cell.memory_depth,
                         activation=cell.activation, seed_rep=cell.seed_rep)
    try:
        net, report, _ = train_observer_for_cell(cell)
        record.epochs = report.epochs_used
        record.converged = report.converged
        record.final_loss = report.final_loss
        topology = nn_observer(net, cell.gain)

        def run(disturbance, duration=None):
            return simulate_closed_loop(cell.plant, cell.imu, topology, disturbance,
                                        duration=duration or cell.verify_duration,
                                        dt=cell.dt, control_stride=cell.record_stride,
                                        use_noise=cell.verify_noise,
                                        noise_seed=child_seed(cell.imu_seed, "verify-noise"))

        if cell.verify_mode == "probe_pair":
            class_angle = max_pumping_angle(run(cell.class_disturbance()))
            probe_angle = max_pumping_angle(run(cell.probe_disturbance(),
                                                duration=cell.probe_duration))
            record.max_angle_arcmin = math.inf if math.isinf(class_angle) else probe_angle
        elif cell.verify_mode == "class":
            record.max_angle_arcmin = max_pumping_angle(run(cell.class_disturbance()))
        else:
            record.max_angle_arcmin = max_pumping_angle(run(cell.disturbance()))
    except Exception as exc:  # per-cell failures recorded, sweep continues
        record.error = f"{type(exc).__name__}: {exc}"
    return record


def oracle_baseline_angle(cell: ObserverCell) -> float:
    """Max pumping angle of the full-state-feedback loop on the same disturbance."""
    trace = simulate_closed_loop(cell.plant, cell.imu, full_state_feedback(cell.gain),
                                 cell.disturbance(), duration=cell.verify_duration,
                                 dt=cell.dt, control_stride=cell.record_stride)
    return max_pumping_angle(trace)


def _run_cells(cells: list[ObserverCell], jobs: int) -> list[SweepRecord]:
    if jobs <= 1 or len(cells) <= 1:
        return [run_observer_cell(cell) for cell in cells]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(run_observer_cell, cells, chunksize=max(1, len(cells) // (4 * jobs))))


# --------------------------------------------------------------------------
# Sweeps
# --------------------------------------------------------------------------

def frequency_cells(base: ObserverCell, frequencies, master_seed: int) -> list[ObserverCell]:
    """One cell per frequency; identical seeds across the sweep so the
    frequency is the only independent variable."""
    seeds = dict(net_seed=child_seed(master_seed, "freq-net"),
                 shuffle_seed=child_seed(master_seed, "freq-shuffle"),
                 imu_seed=child_seed(master_seed, "freq-imu"))
    return [replace(base, frequency=float(f), seed_rep=0, **seeds) for f in frequencies]


def sweep_frequency(base: ObserverCell, frequencies, master_seed: int = 0,
                    jobs: int = 1) -> list[SweepRecord]:
    records = _run_cells(frequency_cells(base, frequencies, master_seed), jobs)
    for rec in records:
        rec.kind = "frequency"
    return records


def architecture_cells(base: ObserverCell, hidden_sizes, memory_depths, activations,
                       seeds_per_cell: int, master_seed: int) -> list[ObserverCell]:
    cells = []
    for rep in range(seeds_per_cell):
        imu_seed = child_seed(master_seed, "arch-imu", rep)
        shuffle_seed = child_seed(master_seed, "arch-shuffle", rep)
        for act in activations:
            for m in hidden_sizes:
                for k in memory_depths:
                    cells.append(replace(
                        base, hidden_neurons=int(m), memory_depth=int(k), activation=str(act),
                        seed_rep=rep, imu_seed=imu_seed, shuffle_seed=shuffle_seed,
                        net_seed=child_seed(master_seed, f"arch-net-{act}-{m}-{k}", rep)))
    return cells


def sweep_architecture(base: ObserverCell, hidden_sizes, memory_depths, activations=("tansig",),
                       seeds_per_cell: int = 3, master_seed: int = 0,
                       jobs: int = 1) -> list[SweepRecord]:
    if not (len(list(hidden_sizes)) and len(list(memory_depths)) and len(list(activations))):
        raise ValueError("sweep grids must be nonempty")
    cells = architecture_cells(base, hidden_sizes, memory_depths, activations,
                               seeds_per_cell, master_seed)
    records = _run_cells(cells, jobs)
    for rec in records:
        rec.kind = "architecture"
    return records


def compare_trainers(training_set: TrainingSet, architectures, algorithms,
                     base_config: TrainerConfig, init_seed: int = 0):
    """Loss histories of each algorithm from identical initial weights.

    ``architectures`` is a list of (label, layer_widths, activations); the
    same seeded initial network is used for every algorithm within an
    architecture.  Per-algorithm failures are recorded as (label, algorithm,
    None) entries.
    """
    results = []
    for label, widths, acts in architectures:
        init = init_mlp(widths, acts, seed=child_seed(init_seed, f"compare-{label}"))
        for algorithm in algorithms:
            config = replace(base_config, algorithm=algorithm)
            try:
                _, report = train(init.copy(), training_set, config)
            except Exception:
                report = None
            results.append((label, algorithm, report))
    return results


@dataclass(frozen=True)
class CellSummary:
    """Per-grid-cell aggregate over seed repetitions (majority stability)."""

    hidden_neurons: int
    memory_depth: int
    activation: str
    n_seeds: int
    n_unstable: int
    median_angle_arcmin: float  # median over stable seeds; +inf if none

    @property
    def unstable(self) -> bool:
        return 2 * self.n_unstable > self.n_seeds


def summarize_architecture(records: list[SweepRecord]) -> list[CellSummary]:
    """Majority-vote stability and median stable angle per (m, k, activation)."""
    groups: dict = {}
    for rec in records:
        if rec.error is not None:
            continue
        key = (rec.hidden_neurons, rec.memory_depth, rec.activation)
        groups.setdefault(key, []).append(rec)
    out = []
    for (m, k, act), recs in sorted(groups.items()):
        finite = sorted(r.max_angle_arcmin for r in recs if not r.unstable)
        median = float(np.median(finite)) if finite else math.inf
        out.append(CellSummary(m, k, act, len(recs),
                               sum(1 for r in recs if r.unstable), median))
    return out


def unstable_fraction_split(summaries: list[CellSummary]):
    """UNSTABLE cell fraction among m >= k cells vs among m < k cells."""
    ge = [s for s in summaries if s.hidden_neurons >= s.memory_depth]
    lt = [s for s in summaries if s.hidden_neurons < s.memory_depth]
    if not ge or not lt:
        raise ValueError("grid does not straddle the m = k diagonal")
    frac_ge = sum(1 for s in ge if s.unstable) / len(ge)
    frac_lt = sum(1 for s in lt if s.unstable) / len(lt)
    return frac_ge, frac_lt


# --------------------------------------------------------------------------
# CSV output and manifests
# --------------------------------------------------------------------------

def _angle_field(value: float) -> str:
    return UNSTABLE_MARKER if math.isinf(value) else f"{value:.17g}"

def format_record_row(record: SweepRecord) -> str:
    fields = [
        record.kind, f"{record.frequency:.17g}", str(record.hidden_neurons),
        str(record.memory_depth), record.activation, str(record.seed_rep),
        str(record.epochs), str(int(record.converged)),
        "nan" if math.isnan(record.final_loss) else f"{record.final_loss:.17g}",
        "nan" if math.isnan(record.max_angle_arcmin) else _angle_field(record.max_angle_arcmin),
        record.error or "",
    ]
    return ",".join(fields)


SWEEP_CSV_HEADER = ("kind,frequency_hz,hidden_neurons,memory_depth,activation,seed,"
                    "epochs,converged,final_loss,max_angle_arcmin,error")


def save_sweep_csv(path, records: list[SweepRecord]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(SWEEP_CSV_HEADER + "\n")
        for record in records:
            fh.write(format_record_row(record) + "\n")


_MANIFEST_FIELDS = ("frequency", "hidden_neurons", "memory_depth", "activation",
                    "seed_rep", "net_seed", "shuffle_seed", "imu_seed")

MANIFEST_CSV_HEADER = ",".join(_MANIFEST_FIELDS)


def save_manifest_csv(path, cells: list[ObserverCell]) -> None:
    """Per-cell seed/coordinate manifest; a row plus the experiment config
    reconstructs and re-runs the cell exactly."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(MANIFEST_CSV_HEADER + "\n")
        for cell in cells:
            row = [repr(getattr(cell, f)) if f == "frequency" else str(getattr(cell, f))
                   for f in _MANIFEST_FIELDS]
            fh.write(",".join(row) + "\n")


def cell_from_manifest_row(base: ObserverCell, row: str) -> ObserverCell:
    tokens = row.strip().split(",")
    if len(tokens) != len(_MANIFEST_FIELDS):
        raise ValueError(f"manifest row has {len(tokens)} fields, expected {len(_MANIFEST_FIELDS)}")
    values = dict(zip(_MANIFEST_FIELDS, tokens))
    return replace(base,
                   frequency=float(values["frequency"]),
                   hidden_neurons=int(values["hidden_neurons"]),
                   memory_depth=int(values["memory_depth"]),
                   activation=values["activation"],
                   seed_rep=int(values["seed_rep"]),
                   net_seed=int(values["net_seed"]),
                   shuffle_seed=int(values["shuffle_seed"]),
                   imu_seed=int(values["imu_seed"]))
