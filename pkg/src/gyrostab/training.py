"""Network training: quadratic loss, gradient / Gauss-Newton / Levenberg-Marquardt.

The loss over a training set of N (window -> target state) pairs is

    E(theta) = 1 / (2 N) * sum over samples and components of (target - output)^2

All three optimizers take full-set (batch) steps so their per-epoch costs are
comparable: gradient descent follows -lr * dE/dtheta; the Newton step is the
Gauss-Newton solve (J'J) d = -J'r; Levenberg-Marquardt solves
(J'J + lambda I) d = -J'r with the classical accept/reject damping schedule.
J'J and J'r are accumulated in fixed-size sample chunks, so memory stays
O(chunk * outputs * n_params) and the arithmetic order is deterministic.

An epoch = seeded shuffle of the sample order + one optimizer pass.  The
recorded loss history starts with the initial loss (entry 0), so a run with
an epoch budget of zero still reports its starting point.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .nn import Mlp, batch_jacobian, flatten_params, forward_batch, set_params

_CHUNK = 1024


class TrainingAbortedError(RuntimeError):
    """Loss became non-finite; carries the epoch index where it happened."""

    def __init__(self, epoch: int):
        self.epoch = epoch
        super().__init__(f"non-finite loss at epoch {epoch}")


@dataclass(frozen=True)
class TrainingSet:
    """Paired (measurement window -> true state) samples plus channel stats.

    ``windows`` are raw (unnormalized) buffer outputs, one row per sample;
    ``channel_mean``/``channel_std`` are per-measurement-channel statistics
    of the recorded stream, replicated across delay slots when applied to a
    window.  ``metadata`` records provenance: excitation, frequency, dt,
    stride and seeds.
    """

    windows: np.ndarray
    targets: np.ndarray
    channel_names: tuple
    channel_mean: np.ndarray
    channel_std: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        w = np.asarray(self.windows, dtype=float)
        t = np.asarray(self.targets, dtype=float)
        if w.ndim != 2 or t.ndim != 2 or w.shape[0] != t.shape[0]:
            raise ValueError(f"inconsistent sample arrays: windows {w.shape}, targets {t.shape}")
        if w.shape[0] == 0:
            raise ValueError("training set is empty")
        n_ch = len(self.channel_names)
        if n_ch == 0 or w.shape[1] % n_ch != 0:
            raise ValueError(f"window width {w.shape[1]} not divisible by {n_ch} channels")
        object.__setattr__(self, "windows", w)
        object.__setattr__(self, "targets", t)
        object.__setattr__(self, "channel_names", tuple(self.channel_names))
        object.__setattr__(self, "channel_mean", np.asarray(self.channel_mean, dtype=float).reshape(n_ch))
        object.__setattr__(self, "channel_std", np.asarray(self.channel_std, dtype=float).reshape(n_ch))

    @property
    def n_samples(self) -> int:
        return self.windows.shape[0]

    @property
    def memory_depth(self) -> int:
        return self.windows.shape[1] // len(self.channel_names) - 1

    def window_mean(self) -> np.ndarray:
        """Per-window-column mean (channel stats tiled across delay slots)."""
        return np.tile(self.channel_mean, self.memory_depth + 1)

    def window_std(self) -> np.ndarray:
        return np.tile(self.channel_std, self.memory_depth + 1)

    def subset(self, indices) -> "TrainingSet":
        """Sample subset sharing the parent's normalization stats."""
        indices = np.asarray(indices)
        meta = dict(self.metadata)
        meta["subset_of"] = str(self.n_samples)
        return TrainingSet(self.windows[indices], self.targets[indices],
                           self.channel_names, self.channel_mean, self.channel_std, meta)


ALGORITHMS = ("gradient", "newton", "levenberg_marquardt")


@dataclass
class TrainerConfig:
    algorithm: str = "levenberg_marquardt"
    learning_rate: float = 0.05
    lm_damping_init: float = 1e-3
    lm_damping_up: float = 10.0
    lm_damping_down: float = 0.1
    lm_max_retries: int = 30
    lm_damping_max: float = 1e12
    loss_goal: float = 1e-6
    max_epochs: int = 30000
    shuffle_seed: int = 0

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"algorithm must be one of {ALGORITHMS}, got {self.algorithm!r}")
        if not self.learning_rate > 0.0:
            raise ValueError("learning_rate must be positive")
        if not self.lm_damping_up > 1.0:
            raise ValueError("lm_damping_up must exceed 1")
        if not 0.0 < self.lm_damping_down < 1.0:
            raise ValueError("lm_damping_down must be in (0, 1)")
        if not self.loss_goal > 0.0:
            raise ValueError("loss_goal must be positive")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")


@dataclass
class TrainingReport:
    """Per-epoch loss trace; entry 0 is the loss before any step."""

    loss_history: list
    converged: bool
    wall_time: float
    stalled: bool = False

    @property
    def epochs_used(self) -> int:
        return len(self.loss_history) - 1

    @property
    def final_loss(self) -> float:
        return self.loss_history[-1]


def save_report_csv(path, report: TrainingReport) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("epoch,loss\n")
        for epoch, value in enumerate(report.loss_history):
            fh.write(f"{epoch},{value:.17g}\n")


def _check_dims(net: Mlp, training_set: TrainingSet) -> None:
    if training_set.windows.shape[1] != net.input_width:
        raise ValueError(
            f"window width {training_set.windows.shape[1]} != network input {net.input_width}")
    if training_set.targets.shape[1] != net.output_width:
        raise ValueError(
            f"target width {training_set.targets.shape[1]} != network output {net.output_width}")


def loss(net: Mlp, training_set: TrainingSet) -> float:
    """E = 1/(2N) * sum of squared residuals over samples and components."""
    _check_dims(net, training_set)
    return _loss_on(net, training_set.windows, training_set.targets)


def _loss_on(net: Mlp, windows: np.ndarray, targets: np.ndarray) -> float:
    n = windows.shape[0]
    total = 0.0
    for start in range(0, n, _CHUNK):
        out = forward_batch(net, windows[start:start + _CHUNK])
        r = out - targets[start:start + _CHUNK]
        total += float(np.sum(r * r))
    return total / (2.0 * n)


def _accumulate(net: Mlp, windows: np.ndarray, targets: np.ndarray, want_hessian: bool):
    """Chunked pass: returns (E, grad, JtJ or None), all normalized by N."""
    n, n_params = windows.shape[0], net.n_params
    grad = np.zeros(n_params)
    jtj = np.zeros((n_params, n_params)) if want_hessian else None
    sq = 0.0
    for start in range(0, n, _CHUNK):
        w = windows[start:start + _CHUNK]
        t = targets[start:start + _CHUNK]
        out, jac = batch_jacobian(net, w)
        r = out - t
        sq += float(np.sum(r * r))
        jflat = jac.reshape(-1, n_params)
        grad += jflat.T @ r.reshape(-1)
        if want_hessian:
            jtj += jflat.T @ jflat
    grad /= n
    if want_hessian:
        jtj /= n
    return sq / (2.0 * n), grad, jtj


def loss_gradient(net: Mlp, training_set: TrainingSet) -> np.ndarray:
    """dE/dtheta, exact (reverse-mode), same flattening as flatten_params."""
    _check_dims(net, training_set)
    _, grad, _ = _accumulate(net, training_set.windows, training_set.targets, want_hessian=False)
    return grad


def _solve_spd(lhs: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Cholesky solve with diagonal-jitter then least-squares fallback."""
    try:
        return scipy.linalg.cho_solve(scipy.linalg.cho_factor(lhs, lower=True), rhs)
    except np.linalg.LinAlgError:
        pass
    except scipy.linalg.LinAlgError:
        pass
    n = lhs.shape[0]
    jitter = 1e-12 * (np.trace(lhs) / n + 1.0)
    try:
        return scipy.linalg.cho_solve(
            scipy.linalg.cho_factor(lhs + jitter * np.eye(n), lower=True), rhs)
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError):
        return np.linalg.lstsq(lhs, rhs, rcond=None)[0]


def gradient_step(net: Mlp, training_set: TrainingSet, learning_rate: float) -> Mlp:
    """theta <- theta - lr * dE/dtheta."""
    _check_dims(net, training_set)
    grad = loss_gradient(net, training_set)
    return set_params(net, flatten_params(net) - learning_rate * grad)


def _newton_delta(grad: np.ndarray, jtj: np.ndarray) -> np.ndarray:
    eigvals = np.linalg.eigvalsh(jtj)
    if eigvals[0] <= 0.0 or eigvals[-1] / max(eigvals[0], 1e-300) > 1e10:
        return -np.linalg.pinv(jtj, rcond=1e-10, hermitian=True) @ grad
    return _solve_spd(jtj, -grad)


def newton_step(net: Mlp, training_set: TrainingSet) -> Mlp:
    """Gauss-Newton step: solve (J'J) d = -J'r, pseudo-inverse on rank deficiency.

    J'J is rank-deficient whenever the data manifold is thin; the Cholesky
    solve then produces huge steps along the near-null directions, so on bad
    conditioning the step falls back to the truncated pseudo-inverse
    (minimum-norm solution over the informative subspace).
    """
    _check_dims(net, training_set)
    _, grad, jtj = _accumulate(net, training_set.windows, training_set.targets, want_hessian=True)
    return set_params(net, flatten_params(net) + _newton_delta(grad, jtj))


def lm_step(net: Mlp, training_set: TrainingSet, damping: float,
            damping_up: float = 10.0, damping_down: float = 0.1,
            max_retries: int = 30, damping_max: float = 1e12,
            reference_loss: float | None = None):
    """One Levenberg-Marquardt step with accept/reject damping adaptation.

    Solves (J'J + damping*I) d = -J'r; accepts when the loss strictly
    decreases (then damping shrinks), otherwise raises damping and retries.
    Returns (net, damping, accepted); on rejection the original network is
    returned untouched.  Damping overflow past ``damping_max`` stops the
    retries (a stall, reported through accepted=False).  ``reference_loss``
    overrides the internally computed current loss as the bar to beat (the
    epoch loop passes its recorded history value).
    """
    _check_dims(net, training_set)
    windows, targets = training_set.windows, training_set.targets
    e0, grad, jtj = _accumulate(net, windows, targets, want_hessian=True)
    if reference_loss is not None:
        e0 = reference_loss
    theta = flatten_params(net)
    eye = np.eye(jtj.shape[0])
    lam = float(damping)
    for _ in range(max_retries + 1):
        delta = _solve_spd(jtj + lam * eye, -grad)
        candidate = set_params(net, theta + delta)
        e_new = _loss_on(candidate, windows, targets)
        if math.isfinite(e_new) and e_new < e0:
            return candidate, max(lam * damping_down, 1e-300), True
        lam *= damping_up
        if lam > damping_max:
            break
    return net, lam, False


def train(net: Mlp, training_set: TrainingSet, config: TrainerConfig):
    """Epoch loop: seeded shuffle + one optimizer pass, until the loss goal.

    Stops with converged=True once E <= loss_goal, or converged=False at
    max_epochs (or on a Levenberg-Marquardt damping stall).  Deterministic
    for identical inputs and seeds.  Raises TrainingAbortedError if the loss
    goes non-finite.
    """
    _check_dims(net, training_set)
    t_start = time.perf_counter()
    rng = np.random.default_rng(config.shuffle_seed)
    current = net.copy()
    e = loss(current, training_set)
    if not math.isfinite(e):
        raise TrainingAbortedError(0)
    history = [e]
    converged = e <= config.loss_goal
    stalled = False
    damping = config.lm_damping_init

    while not converged and len(history) - 1 < config.max_epochs:
        perm = rng.permutation(training_set.n_samples)
        windows = training_set.windows[perm]
        targets = training_set.targets[perm]

        if config.algorithm == "gradient":
            grad = _accumulate(current, windows, targets, want_hessian=False)[1]
            current = set_params(current, flatten_params(current) - config.learning_rate * grad)
            e = _loss_on(current, windows, targets)
        elif config.algorithm == "newton":
            _, grad, jtj = _accumulate(current, windows, targets, want_hessian=True)
            current = set_params(current, flatten_params(current) + _newton_delta(grad, jtj))
            e = _loss_on(current, windows, targets)
        else:
            shuffled = TrainingSet(windows, targets, training_set.channel_names,
                                   training_set.channel_mean, training_set.channel_std)
            stepped, damping, accepted = lm_step(
                current, shuffled, damping,
                damping_up=config.lm_damping_up, damping_down=config.lm_damping_down,
                max_retries=config.lm_max_retries, damping_max=config.lm_damping_max,
                reference_loss=history[-1])
            if accepted:
                current = stepped
                e = _loss_on(current, windows, targets)
            else:
                # rejected: weights unchanged, loss unchanged; record and stop
                history.append(history[-1])
                stalled = True
                break

        if not math.isfinite(e):
            raise TrainingAbortedError(len(history))
        history.append(e)
        converged = e <= config.loss_goal

    return current, TrainingReport(history, converged, time.perf_counter() - t_start, stalled)
