"""State-feedback regulator u = -P x and the closed-loop controller topologies.

Three feedback paths close the loop around the plant:

  - full_state_feedback: u = -P x from the true simulator state (the oracle
    reference loop used to record training data and as the verification
    baseline);
  - nn_observer: measurement window -> network -> state estimate -> u = -P x_hat
    (network as observer in front of the regulator);
  - nn_regulator: measurement window -> network -> control moments directly
    (network as the regulator itself; its output width is the number of
    actuator channels).

Gain design is pole placement on the origin-linearized plant.  Control
moments are clamped per axis to the actuator saturation limit carried by the
gain record.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.signal import place_poles

from .dynamics import ImuReading, LinearModel
from .nn import Mlp, TappedDelayBuffer, forward

N_CONTROL = 3
N_STATE = 6

TOPOLOGY_KINDS = ("full_state_feedback", "nn_as_observer_plus_P", "nn_as_regulator")

# Measurement channel selections feeding the tapped-delay buffer.
CHANNEL_SETS = {
    "gyro": ("u_g1", "u_g2", "u_g3"),
    "gyro_accel": ("u_g1", "u_g2", "u_g3", "u_a1", "u_a2", "u_a3"),
}


def select_channels(reading: ImuReading, channels: str) -> np.ndarray:
    """Measurement sample vector for the configured channel selection."""
    if channels == "gyro":
        return reading.u_g.copy()
    if channels == "gyro_accel":
        return np.concatenate([reading.u_g, reading.u_a])
    raise ValueError(f"unknown channel selection {channels!r} (expected one of {tuple(CHANNEL_SETS)})")


@dataclass(frozen=True)
class RegulatorGain:
    """Gain matrix P (control channels x state dim) plus actuator saturation [N*m]."""

    p: np.ndarray
    saturation: float = 1.0

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float)
        if p.ndim != 2:
            raise ValueError(f"gain must be a matrix, got shape {p.shape}")
        if not np.all(np.isfinite(p)):
            raise ValueError("gain entries must be finite")
        if not self.saturation > 0.0:
            raise ValueError("saturation limit must be positive")
        object.__setattr__(self, "p", p.copy())


def conjugate_pair_poles(natural_frequencies, damping: float) -> np.ndarray:
    """Complex-conjugate pole pairs with common damping ratio."""
    poles = []
    for wn in natural_frequencies:
        if wn <= 0.0:
            raise ValueError(f"natural frequency must be positive, got {wn}")
        re = -damping * wn
        im = wn * np.sqrt(1.0 - damping * damping)
        poles.extend([complex(re, im), complex(re, -im)])
    return np.array(poles)


def design_gain(model: LinearModel, desired_poles, saturation: float = 1.0,
                tol: float = 1e-6) -> RegulatorGain:
    """Pole placement: P such that eig(A - B P) matches ``desired_poles``.

    The pole set must be closed under conjugation and strictly in the left
    half-plane; placement accuracy is verified post-hoc against ``tol``.
    """
    desired = np.sort_complex(np.atleast_1d(np.asarray(desired_poles, dtype=complex)))
    if desired.size != model.a.shape[0]:
        raise ValueError(f"need {model.a.shape[0]} poles, got {desired.size}")
    if np.max(desired.real) >= 0.0:
        raise ValueError("desired poles must lie in the open left half-plane")
    conj_sorted = np.sort_complex(desired.conj())
    if not np.allclose(desired, conj_sorted, rtol=0.0, atol=1e-12):
        raise ValueError("desired pole set must be closed under conjugation")

    try:
        result = place_poles(model.a, model.b, desired)
    except ValueError as exc:
        raise ValueError(f"pole placement failed (uncontrollable pair?): {exc}") from exc
    p = np.asarray(result.gain_matrix, dtype=float)

    achieved = np.sort_complex(np.linalg.eigvals(model.a - model.b @ p))
    if np.max(np.abs(achieved - desired)) > tol * (1.0 + np.max(np.abs(desired))):
        raise ValueError(
            f"pole placement inaccurate: requested {desired.tolist()}, achieved {achieved.tolist()}")
    return RegulatorGain(p, saturation)


def regulator_output(gain: RegulatorGain, x_hat) -> np.ndarray:
    """u = -P x_hat, clamped per channel to the saturation limit."""
    x_hat = np.asarray(x_hat, dtype=float).reshape(-1)
    if x_hat.size != gain.p.shape[1]:
        raise ValueError(f"state estimate length {x_hat.size} != gain columns {gain.p.shape[1]}")
    u = -gain.p @ x_hat
    return np.clip(u, -gain.saturation, gain.saturation)


@dataclass
class LoopTopology:
    """A validated feedback configuration plus its single-owner buffer.

    Construction rejects component mismatches (missing network/gain, wrong
    network output width, window length vs network input), so a topology
    that builds is guaranteed to run.
    """

    kind: str
    gain: RegulatorGain | None = None
    net: Mlp | None = None
    channels: str = "gyro_accel"
    memory_depth: int = 0
    buffer: TappedDelayBuffer = field(init=False, default=None, repr=False)

    def __post_init__(self):
        if self.kind not in TOPOLOGY_KINDS:
            raise ValueError(f"unknown topology {self.kind!r} (expected one of {TOPOLOGY_KINDS})")
        if self.kind == "full_state_feedback":
            if self.gain is None:
                raise ValueError("full_state_feedback requires a gain")
            if self.gain.p.shape != (N_CONTROL, N_STATE):
                raise ValueError(f"gain must be {N_CONTROL}x{N_STATE}, got {self.gain.p.shape}")
            return

        if self.net is None:
            raise ValueError(f"{self.kind} requires a network")
        if self.channels not in CHANNEL_SETS:
            raise ValueError(f"unknown channel selection {self.channels!r}")
        n_ch = len(CHANNEL_SETS[self.channels])
        expect_in = n_ch * (self.memory_depth + 1)
        if self.net.input_width != expect_in:
            raise ValueError(
                f"network input width {self.net.input_width} != "
                f"{n_ch} channels x (depth {self.memory_depth} + 1) = {expect_in}")
        if self.kind == "nn_as_observer_plus_P":
            if self.gain is None:
                raise ValueError("nn_as_observer_plus_P requires both a network and a gain")
            if self.gain.p.shape != (N_CONTROL, N_STATE):
                raise ValueError(f"gain must be {N_CONTROL}x{N_STATE}, got {self.gain.p.shape}")
            if self.net.output_width != N_STATE:
                raise ValueError(
                    f"observer network must output {N_STATE} states, got {self.net.output_width}")
        else:  # nn_as_regulator
            if self.net.output_width != N_CONTROL:
                raise ValueError(
                    f"regulator network must output {N_CONTROL} moments, got {self.net.output_width}")
            if self.gain is None:
                raise ValueError("nn_as_regulator needs a gain record for the saturation limit")
        self.buffer = TappedDelayBuffer(self.memory_depth, n_ch)

    @property
    def has_observer(self) -> bool:
        return self.kind == "nn_as_observer_plus_P"

    def reset(self) -> None:
        if self.buffer is not None:
            self.buffer.reset()


def full_state_feedback(gain: RegulatorGain) -> LoopTopology:
    return LoopTopology("full_state_feedback", gain=gain)


def nn_observer(net: Mlp, gain: RegulatorGain, channels: str | None = None,
                memory_depth: int | None = None) -> LoopTopology:
    """Fig.-2 style loop; channel/depth default to the network's metadata."""
    channels = channels if channels is not None else net.meta.get("channels", "gyro_accel")
    if memory_depth is None:
        memory_depth = int(net.meta.get("memory_depth", 0))
    return LoopTopology("nn_as_observer_plus_P", gain=gain, net=net,
                        channels=channels, memory_depth=memory_depth)


def nn_regulator(net: Mlp, saturation: float = 1.0, channels: str | None = None,
                 memory_depth: int | None = None) -> LoopTopology:
    """Fig.-1 style loop; the network output is the control moment vector."""
    channels = channels if channels is not None else net.meta.get("channels", "gyro_accel")
    if memory_depth is None:
        memory_depth = int(net.meta.get("memory_depth", 0))
    gain = RegulatorGain(np.zeros((N_CONTROL, N_STATE)), saturation)
    return LoopTopology("nn_as_regulator", gain=gain, net=net,
                        channels=channels, memory_depth=memory_depth)


def controller_step(topology: LoopTopology, reading: ImuReading | None,
                    true_state=None) -> tuple[np.ndarray, np.ndarray | None]:
    """One control update; returns (control moments, state estimate or None).

    full_state_feedback consumes ``true_state`` (6-vector); the network paths
    consume the IMU reading through the topology's tapped-delay buffer.
    """
    if topology.kind == "full_state_feedback":
        if true_state is None:
            raise ValueError("full_state_feedback requires the true state")
        return regulator_output(topology.gain, true_state), None

    if reading is None:
        raise ValueError(f"{topology.kind} requires an IMU reading")
    window = topology.buffer.push(select_channels(reading, topology.channels))
    if topology.kind == "nn_as_observer_plus_P":
        x_hat = forward(topology.net, window)
        return regulator_output(topology.gain, x_hat), x_hat
    u = forward(topology.net, window)
    return np.clip(u, -topology.gain.saturation, topology.gain.saturation), None


# --------------------------------------------------------------------------
# Gain matrix CSV import/export
# --------------------------------------------------------------------------

def save_gain_csv(path, gain: RegulatorGain) -> None:
    rows, cols = gain.p.shape
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# gain matrix {rows}x{cols}, row-major; saturation_nm={gain.saturation!r}\n")
        for row in gain.p:
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


def load_gain_csv(path) -> RegulatorGain:
    saturation = 1.0
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                marker = "saturation_nm="
                if marker in line:
                    saturation = float(line.split(marker, 1)[1].strip())
                continue
            rows.append([float(tok) for tok in line.split(",")])
    if not rows:
        raise ValueError(f"{path}: no gain rows found")
    return RegulatorGain(np.array(rows), saturation)
