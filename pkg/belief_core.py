"""
Poses, controls and Gaussian beliefs for a planar robot, with the odometry
motion model, the range-bearing landmark model, their Jacobians and the
EKF predict/update cycle.

Every operation is a pure function of its inputs. Randomness enters only
through an explicit numpy Generator.
"""

import math
from dataclasses import dataclass, InitVar

import numpy as np


TWO_PI = 2.0 * math.pi
SYMMETRY_TOL = 1e-9
PSD_TOL = 1e-9
MIN_RANGE = 1e-9
MAX_CONDITION = 1e12


class BeliefError(ValueError):
    """Invalid pose, control, belief or model parameters."""


class DegenerateGeometryError(BeliefError):
    """Robot and landmark coincide, so range and bearing are undefined."""


class NumericalDegeneracyError(RuntimeError):
    """Innovation covariance too ill-conditioned to solve."""


# ===== ANGLES =====

def wrap_angle(theta: float) -> float:
    """Map an angle onto (-pi, pi]."""
    if not math.isfinite(theta):
        raise BeliefError(f"angle must be finite, got {theta!r}")
    wrapped = math.remainder(theta, TWO_PI)
    if wrapped <= -math.pi:
        return math.pi
    return wrapped


# ===== VALUE TYPES =====

@dataclass(frozen=True)
class Pose:
    x: float
    y: float
    theta: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise BeliefError(f"pose position must be finite, got ({self.x!r}, {self.y!r})")
        object.__setattr__(self, 'x', float(self.x))
        object.__setattr__(self, 'y', float(self.y))
        object.__setattr__(self, 'theta', wrap_angle(float(self.theta)))

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.theta])

    @classmethod
    def from_array(cls, values) -> "Pose":
        return cls(float(values[0]), float(values[1]), float(values[2]))

    def distance_to(self, x: float, y: float) -> float:
        return math.hypot(x - self.x, y - self.y)


@dataclass(frozen=True)
class Control:
    d_rot1: float
    d_trans: float
    d_rot2: float

    def __post_init__(self):
        if not math.isfinite(self.d_trans) or self.d_trans < 0.0:
            raise BeliefError(f"d_trans must be a finite value >= 0, got {self.d_trans!r}")
        object.__setattr__(self, 'd_trans', float(self.d_trans))
        object.__setattr__(self, 'd_rot1', wrap_angle(float(self.d_rot1)))
        object.__setattr__(self, 'd_rot2', wrap_angle(float(self.d_rot2)))


@dataclass(frozen=True, eq=False)
class GaussianBelief:
    """Mean pose plus 3x3 covariance, stored read-only.

    ``check=False`` skips the eigenvalue test for covariances produced by
    the filter itself, which are symmetrized on every step.
    """

    mean: Pose
    cov: np.ndarray
    check: InitVar[bool] = True

    def __post_init__(self, check):
        cov = np.array(self.cov, dtype=float)
        if cov.shape != (3, 3):
            raise BeliefError(f"covariance must be 3x3, got shape {cov.shape}")
        if check:
            if not np.all(np.isfinite(cov)):
                raise BeliefError("covariance contains non-finite entries")
            if not np.allclose(cov, cov.T, rtol=0.0, atol=SYMMETRY_TOL):
                raise BeliefError("covariance is not symmetric")
            scale = max(1.0, float(np.max(np.abs(cov))))
            if float(np.linalg.eigvalsh(cov).min()) < -PSD_TOL * scale:
                raise BeliefError("covariance is not positive semi-definite")
        cov.setflags(write=False)
        object.__setattr__(self, 'cov', cov)

    @property
    def trace(self) -> float:
        return float(np.trace(self.cov))


@dataclass(frozen=True)
class MotionNoiseParams:
    alpha1: float = 0.0
    alpha2: float = 0.0
    alpha3: float = 0.0
    alpha4: float = 0.0

    def __post_init__(self):
        for name in ('alpha1', 'alpha2', 'alpha3', 'alpha4'):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0.0:
                raise BeliefError(f"{name} must be a finite value >= 0, got {value!r}")

    @property
    def is_zero(self) -> bool:
        return self.alpha1 == self.alpha2 == self.alpha3 == self.alpha4 == 0.0


@dataclass(frozen=True)
class SensorParams:
    q_range_var: float = 0.01
    q_bearing_var: float = 0.0025
    max_range: float = 5.0

    def __post_init__(self):
        if not (self.q_range_var > 0.0 and self.q_bearing_var > 0.0):
            raise BeliefError("sensor variances must be > 0")
        if not self.max_range > 0.0:
            raise BeliefError("sensor max_range must be > 0")

    @property
    def Q(self) -> np.ndarray:
        return np.diag([self.q_range_var, self.q_bearing_var])


@dataclass(frozen=True)
class Landmark:
    id: str
    x: float
    y: float


def symmetrize(m: np.ndarray) -> np.ndarray:
    return (m + m.T) / 2.0


# ===== MOTION MODEL =====

def motion_step(p: Pose, u: Control) -> Pose:
    """Rotate by d_rot1, translate by d_trans, rotate by d_rot2."""
    heading = p.theta + u.d_rot1
    return Pose(
        p.x + u.d_trans * math.cos(heading),
        p.y + u.d_trans * math.sin(heading),
        p.theta + u.d_rot1 + u.d_rot2,
    )


def motion_noise_cov(u: Control, n: MotionNoiseParams) -> np.ndarray:
    """Diagonal covariance W of the control perturbation (rot1, trans, rot2)."""
    r1sq = u.d_rot1 ** 2
    tsq = u.d_trans ** 2
    r2sq = u.d_rot2 ** 2
    return np.diag([
        n.alpha1 * r1sq + n.alpha2 * tsq,
        n.alpha3 * tsq + n.alpha4 * (r1sq + r2sq),
        n.alpha2 * tsq + n.alpha1 * r2sq,
    ])


def motion_jacobians(p: Pose, u: Control, n: MotionNoiseParams):
    """
    Linearization of motion_step at (p, u).

    Returns:
        (F, V, R): state Jacobian, control Jacobian and R = V W V^T.
    """
    heading = p.theta + u.d_rot1
    s = math.sin(heading)
    c = math.cos(heading)
    dt = u.d_trans

    F = np.array([
        [1.0, 0.0, -dt * s],
        [0.0, 1.0, dt * c],
        [0.0, 0.0, 1.0],
    ])
    V = np.array([
        [-dt * s, c, 0.0],
        [dt * c, s, 0.0],
        [1.0, 0.0, 1.0],
    ])
    W = motion_noise_cov(u, n)
    R = symmetrize(V @ W @ V.T)
    return F, V, R


def ekf_predict(b: GaussianBelief, u: Control, n: MotionNoiseParams) -> GaussianBelief:
    F, _, R = motion_jacobians(b.mean, u, n)
    cov = symmetrize(F @ b.cov @ F.T + R)
    return GaussianBelief(motion_step(b.mean, u), cov, check=False)


# ===== OBSERVATION MODEL =====

def observe_nominal(p: Pose, l: Landmark):
    """
    Noise-free range and bearing from p to l with the measurement Jacobian.

    Returns:
        (range, bearing, H) where H is 2x3.
    """
    dx = l.x - p.x
    dy = l.y - p.y
    r = math.hypot(dx, dy)
    if r <= MIN_RANGE:
        raise DegenerateGeometryError(
            f"pose ({p.x:.6g}, {p.y:.6g}) coincides with landmark {l.id!r}"
        )
    bearing = wrap_angle(math.atan2(dy, dx) - p.theta)
    q = r * r
    H = np.array([
        [-dx / r, -dy / r, 0.0],
        [dy / q, -dx / q, -1.0],
    ])
    return r, bearing, H


def simulate_observation(rng: np.random.Generator, p: Pose, l: Landmark, s: SensorParams):
    """Nominal observation plus sensor noise, or None when l is out of range."""
    if p.distance_to(l.x, l.y) > s.max_range:
        return None
    r, bearing, _ = observe_nominal(p, l)
    noise = rng.standard_normal(2)
    return (
        r + math.sqrt(s.q_range_var) * float(noise[0]),
        wrap_angle(bearing + math.sqrt(s.q_bearing_var) * float(noise[1])),
    )


def ekf_update(b: GaussianBelief, z, l: Landmark, s: SensorParams) -> GaussianBelief:
    z_range, z_bearing = float(z[0]), float(z[1])
    if not (math.isfinite(z_range) and math.isfinite(z_bearing)):
        raise BeliefError("observation must be finite")

    r_hat, bearing_hat, H = observe_nominal(b.mean, l)
    sigma = b.cov
    S = symmetrize(H @ sigma @ H.T + s.Q)
    if np.linalg.cond(S) > MAX_CONDITION:
        raise NumericalDegeneracyError(
            f"innovation covariance is singular for landmark {l.id!r}"
        )

    # K = Sigma H^T S^-1, computed as a solve on the symmetric S
    K = np.linalg.solve(S, H @ sigma).T
    innovation = np.array([z_range - r_hat, wrap_angle(z_bearing - bearing_hat)])
    mean = b.mean.as_array() + K @ innovation
    cov = symmetrize((np.eye(3) - K @ H) @ sigma)
    return GaussianBelief(Pose.from_array(mean), cov, check=False)


# ===== STEERING =====

def steering_control(start: Pose, to_point, final_heading: float) -> Control:
    """Rotate to face to_point, drive there, rotate to final_heading."""
    tx, ty = float(to_point[0]), float(to_point[1])
    distance = math.hypot(tx - start.x, ty - start.y)
    if distance == 0.0:
        return Control(0.0, 0.0, wrap_angle(final_heading - start.theta))
    heading = math.atan2(ty - start.y, tx - start.x)
    return Control(
        wrap_angle(heading - start.theta),
        distance,
        wrap_angle(final_heading - heading),
    )
