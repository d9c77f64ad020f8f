"""Uniaxial gyro stabilizer plant model, IMU model, integration and linearization.

The plant is a three-gimbal rigid-body system: platform (angle a1), internal
frame (a2) and external frame (a3), with a spinning gyro unit of kinetic
moment H mounted between platform and internal frame.  The implemented
equations of motion, with ``r_i = da_i/dt``:

    A1(a)*dd_a1 - g12(a)*dd_a2            + h*r1 + (J_ze - J_xp)*r2*r3 - H*r2*cos(a2) = M1 + Mc1
    A2(a)*dd_a2 - g21(a)*dd_a1            + h*r2 + (J_xp - J_ye)*r3*r1 + H*r1*cos(a2) = M2 + Mc2
    A3   *dd_a3 - g31(a)*dd_a1            + h3*r3 + (J_zp - J_yi)*r1*r2               = M3 + Mc3

    A1(a) = J_ye + J_yi*cos^2(a2) + J_zi*sin^2(a2)
                 + J_yp*cos^2(a2)*cos^2(a3) + J_xp*cos^2(a2)*sin^2(a3)
    A2(a) = J_xi + J_xp*cos^2(a3) + J_yp*sin^2(a3)
    A3    = J_zp
    g12(a) = (J_xp - J_yp)/2 * cos(a2) * sin(2*a2)
    g21(a) = (J_ye - J_xe)/2 * cos(a2) * sin(2*a2)
    g31(a) = J_ze * sin(a3)

Model conventions (see docs/model_notes in README):
  - Each axis equation carries the rate product of the two complementary
    axes (Euler-equation structure), so the coupling terms vanish whenever
    the complementary inertia moments are equal.
  - The gyro-unit coupling is the classical workless antisymmetric pair
    between platform and internal frame (-H*r2*cos a2 / +H*r1*cos a2); it
    injects no energy for any trajectory.
  - Angles are radians, rates rad/s, moments N*m throughout.  User-facing
    reports convert the pumping angle a1 to arcminutes.

Acceleration solve: the three equations form M(a) * dd_a = b with

    M(a) = [[ A1,  -g12, 0  ],
            [-g21,  A2,  0  ],
            [-g31,  0,   A3 ]]

which is solved in closed form via the 2x2 platform/internal block followed
by back-substitution into the external-frame row (A3 = J_zp > 0 always).

The gimbal limit ``|a_i| > pi/2`` (or any non-finite value) classifies a
trajectory as diverged; integration reports the breach time instead of
propagating garbage.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .kv import KvError, read_kv_file, reject_unknown, require_keys, parse_float, write_kv_file

try:
    from numba import njit
except Exception:  # pragma: no cover - numba is an optional accelerator
    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]

        def deco(fn):
            return fn

        return deco


# Gimbal limit: any |angle| beyond this is a diverged (UNSTABLE) run.
ANGLE_LIMIT = math.pi / 2.0

# Largest step the fixed-step RK4 integrator accepts.
DT_MAX = 1e-2


class SingularAccelerationMatrixError(RuntimeError):
    """Acceleration-coefficient matrix M(a) is numerically singular."""

    def __init__(self, state_vector):
        self.state_vector = np.asarray(state_vector, dtype=float)
        super().__init__(
            f"singular acceleration-coefficient matrix at state {self.state_vector.tolist()}"
        )


class DivergenceError(RuntimeError):
    """Trajectory left the gimbal limit or produced non-finite values."""

    def __init__(self, time: float):
        self.time = float(time)
        super().__init__(f"trajectory diverged at t = {self.time:.6g} s")


def _require_finite(arr, name: str) -> np.ndarray:
    out = np.asarray(arr, dtype=float)
    if not np.all(np.isfinite(out)):
        raise ValueError(f"{name} must be finite, got {out.tolist()}")
    return out


@dataclass(frozen=True)
class PlantParams:
    """Physical constants of the gyro stabilizer.

    H is the gyro-unit kinetic moment [N*m*s]; J_* are moments of inertia
    [kg*m^2] of platform (p), internal frame (i) and external frame (e);
    h, h3 are viscous damping coefficients [N*m*s/rad].
    """

    H: float
    J_xp: float
    J_yp: float
    J_zp: float
    J_xi: float
    J_yi: float
    J_zi: float
    J_xe: float
    J_ye: float
    J_ze: float
    h: float
    h3: float

    def __post_init__(self):
        for name in ("J_xp", "J_yp", "J_zp", "J_xi", "J_yi", "J_zi", "J_xe", "J_ye", "J_ze"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0.0):
                raise ValueError(f"inertia moment {name} must be strictly positive, got {value}")
        for name in ("h", "h3"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value >= 0.0):
                raise ValueError(f"damping {name} must be non-negative, got {value}")
        if not (math.isfinite(self.H) and self.H >= 0.0):
            raise ValueError(f"kinetic moment H must be non-negative, got {self.H}")

    def as_array(self) -> np.ndarray:
        """Pack for the integration kernels; order matches _PARAM_ORDER."""
        return np.array([getattr(self, name) for name in _PARAM_ORDER], dtype=float)


_PARAM_ORDER = ("H", "J_xp", "J_yp", "J_zp", "J_xi", "J_yi", "J_zi", "J_xe", "J_ye", "J_ze", "h", "h3")


def load_plant_params(path) -> PlantParams:
    """Read a plant parameter file (flat key=value, keys = field names)."""
    found = read_kv_file(path)
    keys = set(_PARAM_ORDER)
    reject_unknown(found, keys, str(path))
    require_keys(found, keys, str(path))
    values = {name: parse_float(found, name, str(path)) for name in _PARAM_ORDER}
    return PlantParams(**values)


def save_plant_params(path, params: PlantParams, header: str = "gyro stabilizer plant parameters") -> None:
    write_kv_file(path, {name: repr(getattr(params, name)) for name in _PARAM_ORDER}, header=header)


@dataclass(frozen=True)
class PlantState:
    """Gimbal angles [rad] and rates [rad/s]; always finite by construction."""

    alpha: np.ndarray  # shape (3,)
    rate: np.ndarray   # shape (3,)

    def __post_init__(self):
        object.__setattr__(self, "alpha", _require_finite(self.alpha, "alpha").reshape(3).copy())
        object.__setattr__(self, "rate", _require_finite(self.rate, "rate").reshape(3).copy())

    @classmethod
    def zero(cls) -> "PlantState":
        return cls(np.zeros(3), np.zeros(3))

    @classmethod
    def from_vector(cls, vec) -> "PlantState":
        vec = _require_finite(vec, "state vector").reshape(6)
        return cls(vec[:3], vec[3:])

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.alpha, self.rate])


@dataclass(frozen=True)
class MomentInput:
    """External disturbance moments and control moments per axis [N*m]."""

    external: np.ndarray = field(default_factory=lambda: np.zeros(3))
    control: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        object.__setattr__(self, "external", _require_finite(self.external, "external").reshape(3).copy())
        object.__setattr__(self, "control", _require_finite(self.control, "control").reshape(3).copy())

    def total(self) -> np.ndarray:
        return self.external + self.control


@dataclass(frozen=True)
class ImuParams:
    """IMU channel model: u_g = gyro_gain * rate, u_a = accel_gain * tilt.

    The tilt angle of axis i is taken equal to the pumping angle a_i (platform
    misalignment from the horizon at zero base motion).  Noise is additive
    Gaussian per channel, standard deviation in output units; a zero std
    disables it.
    """

    gyro_gain: np.ndarray = field(default_factory=lambda: np.ones(3))       # V*s/rad
    accel_gain: np.ndarray = field(default_factory=lambda: np.ones(3))      # V/rad
    gyro_noise_std: np.ndarray = field(default_factory=lambda: np.zeros(3))
    accel_noise_std: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        for name in ("gyro_gain", "accel_gain", "gyro_noise_std", "accel_noise_std"):
            object.__setattr__(self, name, _require_finite(getattr(self, name), name).reshape(3).copy())
        if np.any(self.gyro_gain == 0.0) or np.any(self.accel_gain == 0.0):
            raise ValueError("IMU gains must be nonzero on every axis")
        if np.any(self.gyro_noise_std < 0.0) or np.any(self.accel_noise_std < 0.0):
            raise ValueError("noise standard deviations must be non-negative")


_IMU_KEYS = tuple(
    f"{base}_{axis}"
    for base in ("gyro_gain", "accel_gain", "gyro_noise_std", "accel_noise_std")
    for axis in (1, 2, 3)
)


def load_imu_params(path) -> ImuParams:
    found = read_kv_file(path)
    keys = set(_IMU_KEYS)
    reject_unknown(found, keys, str(path))
    require_keys(found, keys, str(path))

    def vec(base):
        return np.array([parse_float(found, f"{base}_{axis}", str(path)) for axis in (1, 2, 3)])

    return ImuParams(vec("gyro_gain"), vec("accel_gain"), vec("gyro_noise_std"), vec("accel_noise_std"))


def save_imu_params(path, imu: ImuParams, header: str = "IMU parameters") -> None:
    items = {}
    for base in ("gyro_gain", "accel_gain", "gyro_noise_std", "accel_noise_std"):
        values = getattr(imu, base)
        for axis in (1, 2, 3):
            items[f"{base}_{axis}"] = repr(float(values[axis - 1]))
    write_kv_file(path, items, header=header)


@dataclass(frozen=True)
class ImuReading:
    """One IMU sample: three gyro channels and three accelerometer channels."""

    u_g: np.ndarray
    u_a: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "u_g", _require_finite(self.u_g, "u_g").reshape(3).copy())
        object.__setattr__(self, "u_a", _require_finite(self.u_a, "u_a").reshape(3).copy())


@dataclass(frozen=True)
class LinearModel:
    """Small-signal model x' = A x + B u, y = C x about ``op_point``.

    State ordering is [a1 a2 a3 r1 r2 r3]; inputs are the three control
    moment channels; outputs are the six noise-free IMU channels
    [u_g1..3, u_a1..3].
    """

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    op_point: PlantState

    def __post_init__(self):
        a = _require_finite(self.a, "A")
        b = _require_finite(self.b, "B")
        c = _require_finite(self.c, "C")
        n = a.shape[0]
        if a.shape != (n, n) or b.shape[0] != n or c.shape[1] != n:
            raise ValueError(f"inconsistent linear model dimensions A{a.shape} B{b.shape} C{c.shape}")
        object.__setattr__(self, "a", a.copy())
        object.__setattr__(self, "b", b.copy())
        object.__setattr__(self, "c", c.copy())


# --------------------------------------------------------------------------
# Integration kernels (numba-compiled when available; the pure-Python path
# runs the identical code, so both give the same arithmetic).
# --------------------------------------------------------------------------

@njit(cache=True)
def _accel(p, a2, a3, r1, r2, r3, m1, m2, m3):
    """Solve M(a) * dd_a = b in closed form. Returns (ok, dd_a1, dd_a2, dd_a3)."""
    H = p[0]
    J_xp = p[1]; J_yp = p[2]; J_zp = p[3]
    J_xi = p[4]; J_yi = p[5]; J_zi = p[6]
    J_xe = p[7]; J_ye = p[8]; J_ze = p[9]
    h = p[10]; h3 = p[11]

    c2 = math.cos(a2)
    s2 = math.sin(a2)
    s22 = math.sin(2.0 * a2)
    c3 = math.cos(a3)
    s3 = math.sin(a3)

    A1 = J_ye + J_yi * c2 * c2 + J_zi * s2 * s2 + J_yp * c2 * c2 * c3 * c3 + J_xp * c2 * c2 * s3 * s3
    A2 = J_xi + J_xp * c3 * c3 + J_yp * s3 * s3
    A3 = J_zp

    g12 = 0.5 * (J_xp - J_yp) * c2 * s22
    g21 = 0.5 * (J_ye - J_xe) * c2 * s22
    g31 = J_ze * s3

    b1 = m1 - h * r1 - (J_ze - J_xp) * r2 * r3 + H * r2 * c2
    b2 = m2 - h * r2 - (J_xp - J_ye) * r3 * r1 - H * r1 * c2
    b3 = m3 - h3 * r3 - (J_zp - J_yi) * r1 * r2

    det2 = A1 * A2 - g12 * g21
    scale = abs(A1 * A2) + abs(g12 * g21) + 1e-300
    if abs(det2) <= 1e-12 * scale:
        return False, 0.0, 0.0, 0.0

    dd1 = (b1 * A2 + g12 * b2) / det2
    dd2 = (A1 * b2 + g21 * b1) / det2
    dd3 = (b3 + g31 * dd1) / A3
    return True, dd1, dd2, dd3


@njit(cache=True)
def _rk4_span(y, p, m_half, mc1, mc2, mc3, dt, n_steps, angle_limit):
    """Advance ``n_steps`` RK4 steps in place.

    m_half holds external moments on the half-step grid: row j is the moment
    at t0 + j*dt/2, so a span needs 2*n_steps + 1 rows.  Control moments are
    held constant over the span (zero-order hold).

    Returns (status, steps_done): status 0 = ok, 1 = diverged (gimbal limit
    or non-finite), 2 = singular acceleration matrix.
    """
    k = np.empty((4, 6))
    yt = np.empty(6)
    for step in range(n_steps):
        for stage in range(4):
            if stage == 0:
                row = 2 * step
                for i in range(6):
                    yt[i] = y[i]
            elif stage == 1:
                row = 2 * step + 1
                for i in range(6):
                    yt[i] = y[i] + 0.5 * dt * k[0, i]
            elif stage == 2:
                row = 2 * step + 1
                for i in range(6):
                    yt[i] = y[i] + 0.5 * dt * k[1, i]
            else:
                row = 2 * step + 2
                for i in range(6):
                    yt[i] = y[i] + dt * k[2, i]
            ok, dd1, dd2, dd3 = _accel(
                p, yt[1], yt[2], yt[3], yt[4], yt[5],
                m_half[row, 0] + mc1, m_half[row, 1] + mc2, m_half[row, 2] + mc3,
            )
            if not ok:
                return 2, step
            k[stage, 0] = yt[3]
            k[stage, 1] = yt[4]
            k[stage, 2] = yt[5]
            k[stage, 3] = dd1
            k[stage, 4] = dd2
            k[stage, 5] = dd3
        for i in range(6):
            y[i] = y[i] + dt / 6.0 * (k[0, i] + 2.0 * k[1, i] + 2.0 * k[2, i] + k[3, i])
        for i in range(6):
            if not math.isfinite(y[i]):
                return 1, step
        if abs(y[0]) > angle_limit or abs(y[1]) > angle_limit or abs(y[2]) > angle_limit:
            return 1, step
    return 0, n_steps


def derivative_vector(y: np.ndarray, params_array: np.ndarray, total_moment: np.ndarray) -> np.ndarray:
    """d/dt of the packed state [a1 a2 a3 r1 r2 r3] under a total moment."""
    ok, dd1, dd2, dd3 = _accel(
        params_array, y[1], y[2], y[3], y[4], y[5],
        total_moment[0], total_moment[1], total_moment[2],
    )
    if not ok:
        raise SingularAccelerationMatrixError(y)
    return np.array([y[3], y[4], y[5], dd1, dd2, dd3])


def plant_derivative(state: PlantState, params: PlantParams, moments: MomentInput) -> np.ndarray:
    """Time derivative of the six-component state vector.

    Raises SingularAccelerationMatrixError when M(a) cannot be inverted at
    this state (the error carries the offending state vector).
    """
    return derivative_vector(state.as_vector(), params.as_array(), moments.total())


def step_rk4(state: PlantState, params: PlantParams, moment_fn, t: float, dt: float,
             dt_max: float = DT_MAX) -> PlantState:
    """One classical RK4 step from t to t + dt.

    ``moment_fn(time) -> MomentInput`` is sampled at t, t + dt/2 and t + dt.
    Deterministic for identical inputs; raises DivergenceError (carrying the
    breach time) if the step leaves the gimbal limit or goes non-finite.
    """
    if not (dt > 0.0 and dt <= dt_max):
        raise ValueError(f"dt must be in (0, {dt_max}], got {dt}")
    m_half = np.empty((3, 3))
    for j, tau in enumerate((t, t + 0.5 * dt, t + dt)):
        m_half[j] = moment_fn(tau).total()
    y = state.as_vector()
    status, _ = _rk4_span(y, params.as_array(), m_half, 0.0, 0.0, 0.0, dt, 1, ANGLE_LIMIT)
    if status == 2:
        raise SingularAccelerationMatrixError(y)
    if status == 1:
        raise DivergenceError(t + dt)
    return PlantState.from_vector(y)


def imu_measure(state: PlantState, imu: ImuParams, rng) -> ImuReading:
    """Sample the IMU: u_g = gain * rate, u_a = gain * tilt, plus optional noise.

    ``rng`` is an integer seed or a numpy Generator; with all noise stds zero
    the reading is a pure function of the state and rng is unused.
    """
    u_g = imu.gyro_gain * state.rate
    u_a = imu.accel_gain * state.alpha  # tilt convention: gamma_i = a_i
    if np.any(imu.gyro_noise_std > 0.0) or np.any(imu.accel_noise_std > 0.0):
        gen = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
        u_g = u_g + gen.normal(0.0, 1.0, 3) * imu.gyro_noise_std
        u_a = u_a + gen.normal(0.0, 1.0, 3) * imu.accel_noise_std
    return ImuReading(u_g, u_a)


def imu_output_matrix(imu: ImuParams) -> np.ndarray:
    """Noise-free measurement matrix C: [u_g; u_a] = C [a; r]."""
    c = np.zeros((6, 6))
    c[0:3, 3:6] = np.diag(imu.gyro_gain)
    c[3:6, 0:3] = np.diag(imu.accel_gain)
    return c


def linearize(params: PlantParams, op_point: PlantState, imu: ImuParams | None = None,
              step: float = 1e-6) -> LinearModel:
    """Small-signal (A, B, C) by central finite differences at ``op_point``.

    A = d f / d x and B = d f / d u_control, both at zero moments; C comes
    from the IMU gain structure (identity gains when ``imu`` is None).
    """
    p = params.as_array()
    y0 = op_point.as_vector()
    zero = np.zeros(3)
    derivative_vector(y0, p, zero)  # raises if singular at the operating point

    a = np.zeros((6, 6))
    for j in range(6):
        dy = np.zeros(6)
        dy[j] = step
        f_plus = derivative_vector(y0 + dy, p, zero)
        f_minus = derivative_vector(y0 - dy, p, zero)
        a[:, j] = (f_plus - f_minus) / (2.0 * step)

    b = np.zeros((6, 3))
    for j in range(3):
        du = np.zeros(3)
        du[j] = step
        f_plus = derivative_vector(y0, p, du)
        f_minus = derivative_vector(y0, p, -du)
        b[:, j] = (f_plus - f_minus) / (2.0 * step)

    c = imu_output_matrix(imu if imu is not None else ImuParams())
    return LinearModel(a, b, c, op_point)


class NoCutoffError(RuntimeError):
    """The scanned band contains no -3 dB crossing."""


def closed_loop_matrix(model: LinearModel, gain_matrix: np.ndarray | None) -> np.ndarray:
    if gain_matrix is None:
        return model.a.copy()
    gain_matrix = np.asarray(gain_matrix, dtype=float)
    return model.a - model.b @ gain_matrix


def cutoff_frequency(model: LinearModel, gain_matrix: np.ndarray | None = None, axis: int = 0,
                     f_min: float = 1e-3, f_max: float = 1e4) -> float:
    """-3 dB frequency [Hz] of the closed-loop moment -> angle response.

    The disturbance enters the ``axis`` moment channel and the response is
    the same axis angle.  The -3 dB point is relative to the DC gain, located
    on a log-spaced scan and refined by bisection.  Requires the closed-loop
    matrix to be Hurwitz.
    """
    acl = closed_loop_matrix(model, gain_matrix)
    eigs = np.linalg.eigvals(acl)
    if np.max(eigs.real) >= 0.0:
        raise ValueError(f"closed loop is not stable (max Re eig = {np.max(eigs.real):.3g})")
    n = acl.shape[0]
    b_d = model.b[:, axis]
    sel = np.zeros(n)
    sel[axis] = 1.0

    def mag(f_hz: float) -> float:
        s = 2j * math.pi * f_hz
        return abs(sel @ np.linalg.solve(s * np.eye(n) - acl, b_d))

    g0 = abs(sel @ np.linalg.solve(-acl, b_d))
    if g0 == 0.0:
        raise NoCutoffError("zero DC response on the requested axis")
    threshold = g0 / math.sqrt(2.0)

    freqs = np.geomspace(f_min, f_max, 600)
    mags = np.array([mag(f) for f in freqs])
    above = np.nonzero(mags >= threshold)[0]
    if len(above) == 0:
        # response everywhere below -3 dB of DC: crossing is left of the band
        raise NoCutoffError(f"no -3 dB crossing found in [{f_min}, {f_max}] Hz")
    last = above[-1]
    if last == len(freqs) - 1:
        raise NoCutoffError(f"response still above -3 dB at {f_max} Hz")

    lo, hi = freqs[last], freqs[last + 1]
    for _ in range(80):
        mid = math.sqrt(lo * hi)
        if mag(mid) >= threshold:
            lo = mid
        else:
            hi = mid
    return math.sqrt(lo * hi)
