"""Batch command-line front end.

Commands (all take --config PATH, plus --out/--seed/--jobs/--strict):

    gen-data        simulate the reference loop and write a training-set CSV
    train           generate or load a set, train a network, save net + report
    simulate        run one closed-loop simulation, write the trace CSV
    sweep-freq      excitation-frequency sweep (epochs + max angle per point)
    sweep-arch      hidden-neurons x memory-depth grid sweep
    sweep-trainers  loss histories of the three optimizers from shared init

The config file is flat ``key = value`` text with dotted section prefixes
(plant.*, imu.*, control.*, net.*, sampling.*, trainer.*, verify.*, sweep.*).
Unknown keys are rejected; referenced files must exist at load time.  Every
output is fully determined by (config, master seed); sweeps additionally
write a manifest of per-cell seeds sufficient to re-run any single cell.

Exit codes: 0 success, 1 validation error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from dataclasses import replace

import numpy as np

from . import dynamics as dyn
from . import reference
from .control import (RegulatorGain, design_gain, conjugate_pair_poles, full_state_feedback,
                      load_gain_csv, nn_observer, nn_regulator, save_gain_csv)
from .kv import KvError, read_kv_file
from .nn import init_mlp, load_mlp, save_mlp
from .sampling import (Excitation, SamplingConfig, generate_training_set, harmonic,
                       load_training_set, recommend_frequency, save_training_set)
from .seeds import child_seed
from .training import ALGORITHMS, TrainerConfig, TrainingSet, train, save_report_csv
from .verification import (Disturbance, ObserverCell, SweepRecord, compare_trainers,
                           fold_output_scaling, format_record_row, max_pumping_angle,
                           save_manifest_csv, save_sweep_csv, save_trace_csv,
                           simulate_closed_loop, standard_disturbance, standardize_targets,
                           summarize_architecture, sweep_architecture, sweep_frequency,
                           UNSTABLE_MARKER)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2


class ConfigError(ValueError):
    """Invalid experiment configuration."""


_ALLOWED_KEYS = {
    "seed", "out",
    "plant.file", "imu.file",
    "control.pole_frequencies", "control.pole_damping", "control.saturation",
    "control.gain_file",
    "net.hidden", "net.memory_depth", "net.activation", "net.channels", "net.file",
    "sampling.excitation", "sampling.frequency", "sampling.f_start", "sampling.f_end",
    "sampling.amplitude", "sampling.axes", "sampling.duration", "sampling.dt",
    "sampling.record_stride", "sampling.transient_skip", "sampling.noisy_windows",
    "sampling.n_train", "sampling.set_file",
    "trainer.algorithm", "trainer.learning_rate", "trainer.loss_goal_rel",
    "trainer.max_epochs",
    "verify.duration", "verify.topology", "verify.disturbance",
    "verify.step_scale", "verify.step_time",
    "sweep.frequencies", "sweep.m_values", "sweep.k_values", "sweep.activations",
    "sweep.seeds_per_cell", "sweep.algorithms",
}

_FILE_KEYS = ("plant.file", "imu.file", "control.gain_file", "net.file", "sampling.set_file")


class Experiment:
    """Parsed configuration plus lazily-built model objects."""

    def __init__(self, raw: dict, base_dir: str):
        unknown = sorted(set(raw) - _ALLOWED_KEYS)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        self.raw = raw
        self.base_dir = base_dir
        for key in _FILE_KEYS:
            if key in raw and not os.path.exists(self._path(raw[key])):
                raise ConfigError(f"{key} refers to missing file: {raw[key]}")

    def _path(self, value: str) -> str:
        return value if os.path.isabs(value) else os.path.join(self.base_dir, value)

    def get(self, key, default=None):
        return self.raw.get(key, default)

    def get_float(self, key, default=None):
        if key not in self.raw:
            if default is None:
                raise ConfigError(f"missing required config key {key}")
            return float(default)
        try:
            return float(self.raw[key])
        except ValueError:
            raise ConfigError(f"{key} is not a number: {self.raw[key]!r}") from None

    def get_int(self, key, default=None):
        value = self.get_float(key, default)
        if value != int(value):
            raise ConfigError(f"{key} must be an integer, got {value}")
        return int(value)

    def get_bool(self, key, default=False):
        raw = self.raw.get(key)
        if raw is None:
            return default
        lowered = raw.strip().lower()
        if lowered in ("true", "1", "yes", "on"):
            return True
        if lowered in ("false", "0", "no", "off"):
            return False
        raise ConfigError(f"{key} must be a boolean, got {raw!r}")

    def get_list(self, key, default=None, cast=float):
        raw = self.raw.get(key)
        if raw is None:
            if default is None:
                raise ConfigError(f"missing required config key {key}")
            return list(default)
        try:
            values = [cast(tok.strip()) for tok in raw.split(",") if tok.strip()]
        except ValueError:
            raise ConfigError(f"{key} is not a comma list: {raw!r}") from None
        if not values:
            raise ConfigError(f"{key} is empty")
        return values

    # -- model objects ------------------------------------------------------

    def plant(self) -> dyn.PlantParams:
        if "plant.file" in self.raw:
            return dyn.load_plant_params(self._path(self.raw["plant.file"]))
        return reference.reference_plant()

    def imu(self, default=None) -> dyn.ImuParams:
        if "imu.file" in self.raw:
            return dyn.load_imu_params(self._path(self.raw["imu.file"]))
        return default if default is not None else reference.reference_imu()

    def gain(self, plant=None) -> RegulatorGain:
        if "control.gain_file" in self.raw:
            return load_gain_csv(self._path(self.raw["control.gain_file"]))
        plant = plant if plant is not None else self.plant()
        model = dyn.linearize(plant, dyn.PlantState.zero(), self.imu())
        freqs = self.get_list("control.pole_frequencies",
                              reference.REFERENCE_POLE_FREQUENCIES)
        damping = self.get_float("control.pole_damping", reference.REFERENCE_POLE_DAMPING)
        saturation = self.get_float("control.saturation", reference.REFERENCE_SATURATION_NM)
        return design_gain(model, conjugate_pair_poles(freqs, damping), saturation=saturation)

    def master_seed(self, override=None) -> int:
        if override is not None:
            return int(override)
        if "seed" not in self.raw:
            raise ConfigError("master seed required: set 'seed' in the config or pass --seed")
        return self.get_int("seed")

    def excitation(self, master_seed: int) -> Excitation:
        kind = self.get("sampling.excitation", "harmonic")
        amplitude = self.get_float("sampling.amplitude", reference.REFERENCE_AMPLITUDE_NM)
        axes = tuple(self.get_list("sampling.axes", (0, 1, 2), cast=int))
        duration = self.get_float("sampling.duration", 9.0)
        if kind in ("harmonic", "harmonic_fixed"):
            return harmonic(self.get_float("sampling.frequency",
                                           reference.RECOMMENDED_FREQUENCY_HZ),
                            amplitude, axes)
        if kind == "chirp":
            return Excitation("chirp", amplitude, f_start=self.get_float("sampling.f_start"),
                              f_end=self.get_float("sampling.f_end"), duration=duration,
                              axes=axes)
        if kind in ("random", "random_normalized"):
            return Excitation("random_normalized", amplitude, duration=duration,
                              hold_dt=self.get_float("sampling.dt", 1e-4),
                              seed=child_seed(master_seed, "excitation"), axes=axes)
        raise ConfigError(f"unknown sampling.excitation {kind!r}")

    def sampling_config(self, master_seed: int) -> SamplingConfig:
        return SamplingConfig(
            excitation=self.excitation(master_seed),
            duration=self.get_float("sampling.duration", 9.0),
            dt=self.get_float("sampling.dt", 1e-4),
            memory_depth=self.get_int("net.memory_depth", 8),
            record_stride=self.get_int("sampling.record_stride", 10),
            channels=self.get("net.channels", "gyro_accel"),
            imu_seed=child_seed(master_seed, "imu-noise"),
            noisy_windows=self.get_bool("sampling.noisy_windows", False),
            transient_skip=self.get_float("sampling.transient_skip", 1.0))

    def trainer_config(self, master_seed: int, baseline: float) -> TrainerConfig:
        algorithm = self.get("trainer.algorithm", "levenberg_marquardt")
        if algorithm not in ALGORITHMS:
            raise ConfigError(f"trainer.algorithm must be one of {ALGORITHMS}")
        return TrainerConfig(
            algorithm=algorithm,
            learning_rate=self.get_float("trainer.learning_rate", 0.05),
            loss_goal=self.get_float("trainer.loss_goal_rel", 1e-4) * baseline,
            max_epochs=self.get_int("trainer.max_epochs", 200),
            shuffle_seed=child_seed(master_seed, "shuffle"))


def load_experiment(path: str) -> Experiment:
    try:
        raw = read_kv_file(path)
    except (OSError, KvError) as exc:
        raise ConfigError(str(exc)) from exc
    return Experiment(raw, os.path.dirname(os.path.abspath(path)))


def _out_dir(args) -> str:
    out = args.out or "."
    os.makedirs(out, exist_ok=True)
    return out


def _load_or_generate_set(exp: Experiment, master_seed: int) -> TrainingSet:
    if "sampling.set_file" in exp.raw:
        return load_training_set(exp._path(exp.raw["sampling.set_file"]))
    plant = exp.plant()
    training_set = generate_training_set(plant, exp.imu(), exp.gain(plant),
                                         exp.sampling_config(master_seed))
    n_train = exp.get_int("sampling.n_train", 0)
    if 0 < n_train < training_set.n_samples:
        idx = np.linspace(0, training_set.n_samples - 1, n_train).astype(int)
        training_set = training_set.subset(idx)
    return training_set


def _train_network(exp: Experiment, master_seed: int):
    """Shared train pipeline: standardized-target training, raw-unit network."""
    training_set = _load_or_generate_set(exp, master_seed)
    scaled, t_mean, t_std = standardize_targets(training_set)
    hidden = exp.get_int("net.hidden", 6)
    activation = exp.get("net.activation", "tansig")
    depth = scaled.memory_depth
    widths = [scaled.windows.shape[1], hidden, scaled.targets.shape[1]]
    net = init_mlp(widths, [activation, "purelin"], seed=child_seed(master_seed, "net-init"),
                   input_mean=scaled.window_mean(), input_std=scaled.window_std(),
                   meta={"channels": exp.get("net.channels", "gyro_accel"),
                         "memory_depth": str(depth)})
    baseline = float(np.sum(scaled.targets ** 2)) / (2.0 * scaled.n_samples)
    config = exp.trainer_config(master_seed, baseline)
    trained, report = train(net, scaled, config)
    return fold_output_scaling(trained, t_mean, t_std), report, training_set


def _disturbance(exp: Experiment) -> Disturbance:
    frequency = exp.get_float("sampling.frequency", reference.RECOMMENDED_FREQUENCY_HZ)
    amplitude = exp.get_float("sampling.amplitude", reference.REFERENCE_AMPLITUDE_NM)
    axes = tuple(exp.get_list("sampling.axes", (0, 1, 2), cast=int))
    kind = exp.get("verify.disturbance", "standard")
    if kind == "standard":
        return standard_disturbance(frequency, amplitude, axes,
                                    step_scale=exp.get_float("verify.step_scale", 1.0),
                                    step_time=exp.get_float("verify.step_time", 0.5))
    if kind == "class":
        return Disturbance(harmonic(frequency, amplitude, axes))
    raise ConfigError(f"unknown verify.disturbance {kind!r}")


# --------------------------------------------------------------------------
# Commands
# --------------------------------------------------------------------------

def cmd_gen_data(exp: Experiment, args) -> int:
    master = exp.master_seed(args.seed)
    training_set = _load_or_generate_set(exp, master)
    out = os.path.join(_out_dir(args), "training_set.csv")
    save_training_set(out, training_set)
    print(f"wrote {training_set.n_samples} samples to {out}")
    return EXIT_OK


def cmd_train(exp: Experiment, args) -> int:
    master = exp.master_seed(args.seed)
    net, report, _ = _train_network(exp, master)
    out = _out_dir(args)
    net_path = os.path.join(out, "network.txt")
    report_path = os.path.join(out, "report.csv")
    save_mlp(net_path, net)
    save_report_csv(report_path, report)
    status = "converged" if report.converged else "not-converged"
    print(f"{status} after {report.epochs_used} epochs, final loss {report.final_loss:.6g}")
    print(f"wrote {net_path} and {report_path}")
    if args.strict and not report.converged:
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_simulate(exp: Experiment, args) -> int:
    master = exp.master_seed(args.seed)
    plant = exp.plant()
    gain = exp.gain(plant)
    kind = exp.get("verify.topology", "oracle")
    if kind == "oracle":
        topology = full_state_feedback(gain)
    elif kind in ("observer", "regulator"):
        if "net.file" not in exp.raw:
            raise ConfigError(f"verify.topology={kind} requires net.file")
        net = load_mlp(exp._path(exp.raw["net.file"]))
        topology = nn_observer(net, gain) if kind == "observer" else \
            nn_regulator(net, saturation=gain.saturation)
    else:
        raise ConfigError(f"unknown verify.topology {kind!r}")

    duration = exp.get_float("verify.duration", 4.0)
    if duration <= 0:
        raise ConfigError("verify.duration must be positive")
    trace = simulate_closed_loop(plant, exp.imu(), topology, _disturbance(exp),
                                 duration=duration,
                                 dt=exp.get_float("sampling.dt", 1e-4),
                                 control_stride=exp.get_int("sampling.record_stride", 10),
                                 noise_seed=child_seed(master, "verify"))
    out = os.path.join(_out_dir(args), "trace.csv")
    save_trace_csv(out, trace)
    angle = max_pumping_angle(trace)
    verdict = UNSTABLE_MARKER if math.isinf(angle) else "STABLE"
    angle_text = "inf" if math.isinf(angle) else f"{angle:.4f}"
    print(f"{verdict} max_pumping_angle_arcmin={angle_text} trace={out}")
    if args.strict and trace.diverged:
        return EXIT_RUNTIME
    return EXIT_OK


def _sweep_base_cell(exp: Experiment, template) -> ObserverCell:
    plant = exp.plant()
    cell = template(plant=plant, gain=exp.gain(plant))
    overrides = {}
    if "imu.file" in exp.raw:
        overrides["imu"] = exp.imu()
    if "sampling.amplitude" in exp.raw:
        overrides["amplitude"] = exp.get_float("sampling.amplitude")
    if "sampling.frequency" in exp.raw:
        overrides["frequency"] = exp.get_float("sampling.frequency")
    if "sampling.duration" in exp.raw:
        overrides["train_duration"] = exp.get_float("sampling.duration")
    if "sampling.n_train" in exp.raw:
        overrides["n_train"] = exp.get_int("sampling.n_train")
    if "trainer.loss_goal_rel" in exp.raw:
        overrides["loss_goal_rel"] = exp.get_float("trainer.loss_goal_rel")
    if "trainer.max_epochs" in exp.raw:
        overrides["max_epochs"] = exp.get_int("trainer.max_epochs")
    if "net.hidden" in exp.raw:
        overrides["hidden_neurons"] = exp.get_int("net.hidden")
    if "net.memory_depth" in exp.raw:
        overrides["memory_depth"] = exp.get_int("net.memory_depth")
    if "net.activation" in exp.raw:
        overrides["activation"] = exp.get("net.activation")
    if "verify.duration" in exp.raw:
        overrides["verify_duration"] = exp.get_float("verify.duration")
    return replace(cell, **overrides) if overrides else cell


def cmd_sweep_freq(exp: Experiment, args) -> int:
    master = exp.master_seed(args.seed)
    frequencies = exp.get_list("sweep.frequencies", (0.5, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0))
    base = _sweep_base_cell(exp, reference.frequency_sweep_cell)
    from .verification import frequency_cells, _run_cells
    cells = frequency_cells(base, frequencies, master)
    records = _run_cells(cells, args.jobs)
    for rec in records:
        rec.kind = "frequency"
    out = _out_dir(args)
    save_sweep_csv(os.path.join(out, "sweep_frequency.csv"), records)
    save_manifest_csv(os.path.join(out, "sweep_frequency.manifest.csv"), cells)
    failures = [r for r in records if r.error]
    for rec in records:
        print(format_record_row(rec))
    if failures:
        print(f"{len(failures)} of {len(records)} points failed", file=sys.stderr)
    return EXIT_RUNTIME if len(failures) == len(records) else EXIT_OK


def cmd_sweep_arch(exp: Experiment, args) -> int:
    master = exp.master_seed(args.seed)
    m_values = exp.get_list("sweep.m_values", range(1, 13), cast=int)
    k_values = exp.get_list("sweep.k_values", range(1, 13), cast=int)
    activations = [a.strip() for a in exp.get("sweep.activations", "tansig").split(",") if a.strip()]
    seeds_per_cell = exp.get_int("sweep.seeds_per_cell", 3)
    base = _sweep_base_cell(exp, reference.architecture_sweep_cell)
    from .verification import architecture_cells, _run_cells
    cells = architecture_cells(base, m_values, k_values, activations, seeds_per_cell, master)
    records = _run_cells(cells, args.jobs)
    for rec in records:
        rec.kind = "architecture"
    out = _out_dir(args)
    save_sweep_csv(os.path.join(out, "sweep_architecture.csv"), records)
    save_manifest_csv(os.path.join(out, "sweep_architecture.manifest.csv"), cells)
    summaries = summarize_architecture(records)
    summary_path = os.path.join(out, "sweep_architecture_summary.csv")
    with open(summary_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("hidden_neurons,memory_depth,activation,n_seeds,n_unstable,verdict,median_angle_arcmin\n")
        for s in summaries:
            angle = UNSTABLE_MARKER if math.isinf(s.median_angle_arcmin) else f"{s.median_angle_arcmin:.6g}"
            verdict = UNSTABLE_MARKER if s.unstable else "STABLE"
            fh.write(f"{s.hidden_neurons},{s.memory_depth},{s.activation},"
                     f"{s.n_seeds},{s.n_unstable},{verdict},{angle}\n")
    failures = [r for r in records if r.error]
    print(f"{len(records)} cells -> {summary_path}")
    if failures:
        print(f"{len(failures)} cells failed", file=sys.stderr)
    return EXIT_RUNTIME if len(failures) == len(records) else EXIT_OK


def cmd_sweep_trainers(exp: Experiment, args) -> int:
    master = exp.master_seed(args.seed)
    training_set = _load_or_generate_set(exp, master)
    scaled, _, _ = standardize_targets(training_set)
    baseline = float(np.sum(scaled.targets ** 2)) / (2.0 * scaled.n_samples)
    config = exp.trainer_config(master, baseline)
    hidden = exp.get_int("net.hidden", 6)
    activation = exp.get("net.activation", "tansig")
    widths = [scaled.windows.shape[1], hidden, scaled.targets.shape[1]]
    architectures = [(f"{activation}-{hidden}", widths, [activation, "purelin"])]
    algorithms = [a.strip() for a in exp.get("sweep.algorithms", "").split(",") if a.strip()]
    if not algorithms:
        algorithms = list(ALGORITHMS)
    bad = [a for a in algorithms if a not in ALGORITHMS]
    if bad:
        raise ConfigError(f"unknown algorithms in sweep.algorithms: {bad}")
    results = compare_trainers(scaled, architectures, algorithms, config,
                               init_seed=child_seed(master, "compare"))
    out = os.path.join(_out_dir(args), "trainer_comparison.csv")
    failures = 0
    with open(out, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("architecture,algorithm,epoch,loss\n")
        for label, algorithm, report in results:
            if report is None:
                failures += 1
                continue
            for epoch, value in enumerate(report.loss_history):
                fh.write(f"{label},{algorithm},{epoch},{value:.17g}\n")
    print(f"wrote {out}")
    return EXIT_RUNTIME if failures == len(results) else EXIT_OK


COMMANDS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "simulate": cmd_simulate,
    "sweep-freq": cmd_sweep_freq,
    "sweep-arch": cmd_sweep_arch,
    "sweep-trainers": cmd_sweep_trainers,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gyrostab",
                                     description="gyro stabilizer neural-observer toolkit")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="experiment config file")
        p.add_argument("--out", default=None, help="output directory (default: cwd)")
        p.add_argument("--seed", type=int, default=None, help="master seed override")
        p.add_argument("--jobs", type=int, default=os.cpu_count() or 1,
                       help="parallel sweep workers")
        p.add_argument("--strict", action="store_true",
                       help="nonzero exit on divergence / non-convergence")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        exp = load_experiment(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return COMMANDS[args.command](exp, args)
    except (ConfigError, KvError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
