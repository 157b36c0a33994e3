"""Fixed-step simulation of the delayed network and envelope checks.

Integration is classic RK4.  Delayed states are read from the stored
history by cubic Hermite interpolation of ``(z, z')`` between grid points;
before ``t = 0`` the history is the constant ``z0``.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateWindow, InvalidParams, NonFinite, StepTooLarge
from .model import NetworkModel

DEFAULT_DT = 1e-3
DEFAULT_T_END = 30.0
MIN_WINDOW_SAMPLES = 10


@dataclass(frozen=True)
class DelayFunction:
    """``h(t) = h0 + amplitude * sin(frequency * t)``."""

    h0: float
    amplitude: float = 0.0
    frequency: float = 0.0

    def __post_init__(self):
        if not self.amplitude >= 0:
            raise InvalidParams(f"delay amplitude must be >= 0, got {self.amplitude}")
        if not self.h0 >= self.amplitude:
            raise InvalidParams(f"need h0 >= amplitude so that h(t) >= 0, got h0={self.h0}")
        if not self.frequency >= 0:
            raise InvalidParams(f"delay frequency must be >= 0, got {self.frequency}")

    def __call__(self, t):
        return self.h0 + self.amplitude * np.sin(self.frequency * t)

    @property
    def h_min(self):
        return self.h0 - self.amplitude

    @property
    def h_max(self):
        return self.h0 + self.amplitude

    @property
    def rate_bound(self):
        """Largest ``|h'(t)|``."""
        return self.amplitude * self.frequency

    def admissible(self, h, mu):
        return self.h_max <= h and self.rate_bound <= mu

    def to_dict(self):
        return {"h0": self.h0, "amplitude": self.amplitude, "frequency": self.frequency}


@dataclass
class Trajectory:
    t: np.ndarray
    z: np.ndarray  # (len(t), n)
    h: np.ndarray  # delay value at each sample
    z0: np.ndarray
    metadata: dict = field(default_factory=dict)

    @property
    def dt(self):
        return float(self.t[1] - self.t[0])

    @property
    def norms(self):
        return np.linalg.norm(self.z, axis=1)

    @property
    def history_norm(self):
        """``max ||phi||`` over the (constant) initial history."""
        return float(np.linalg.norm(self.z0))

    def header(self):
        n = self.z.shape[1]
        return ["t", *(f"z_{i + 1}" for i in range(n)), "norm", "h"]

    def write_csv(self, path, every=1):
        norms = self.norms
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.header())
            for i in range(0, len(self.t), every):
                w.writerow([_fmt(self.t[i]), *(_fmt(v) for v in self.z[i]), _fmt(norms[i]), _fmt(self.h[i])])

    def sidecar(self):
        return {
            **self.metadata,
            "z0": self.z0.tolist(),
            "samples": int(len(self.t)),
            "columns": self.header(),
        }

    def write_sidecar(self, path):
        with open(path, "w") as fh:
            json.dump(self.sidecar(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def _fmt(v):
    return format(float(v), ".12g")


def _hermite(t, t0, dt, z0, z1, f0, f1):
    s = (t - t0) / dt
    s2, s3 = s * s, s * s * s
    return ((2 * s3 - 3 * s2 + 1) * z0 + (s3 - 2 * s2 + s) * dt * f0
            + (-2 * s3 + 3 * s2) * z1 + (s3 - s2) * dt * f1)


def simulate(model: NetworkModel, delay: DelayFunction, z0, t_end=DEFAULT_T_END, dt=DEFAULT_DT) -> Trajectory:
    """Integrate ``z' = -C z + A f(z) + B f(z(t - h(t)))`` on ``[0, t_end]``."""
    z0 = np.asarray(z0, dtype=float).ravel()
    if z0.shape != (model.n,):
        raise InvalidParams(f"z0 has {z0.size} entries, model has n = {model.n}")
    if not dt > 0 or not t_end > 0:
        raise InvalidParams(f"need dt > 0 and t_end > 0, got dt={dt}, t_end={t_end}")
    if dt > delay.h_min / 4:
        raise StepTooLarge(f"dt={dt} exceeds h_min/4 = {delay.h_min / 4}")

    steps = int(math.ceil(t_end / dt - 1e-9))
    t = dt * np.arange(steps + 1)
    Z = np.empty((steps + 1, model.n))
    F = np.empty_like(Z)
    C = np.diag(model.C)
    A, B = model.A, model.B
    act = model.activation

    def delayed(s):
        td = s - delay(s)
        if td <= 0.0:
            return z0
        j = min(int(td / dt), steps - 1)
        return _hermite(td, t[j], dt, Z[j], Z[j + 1], F[j], F[j + 1])

    def rhs(s, z):
        return -C * z + A @ act(z) + B @ act(delayed(s))

    Z[0] = z0
    # overflow is caught by the finiteness check below
    with np.errstate(over="ignore", invalid="ignore"):
        F[0] = rhs(0.0, z0)
        for i in range(steps):
            ti, zi = t[i], Z[i]
            k1 = F[i]
            k2 = rhs(ti + 0.5 * dt, zi + 0.5 * dt * k1)
            k3 = rhs(ti + 0.5 * dt, zi + 0.5 * dt * k2)
            k4 = rhs(ti + dt, zi + dt * k3)
            Z[i + 1] = zi + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
            F[i + 1] = rhs(t[i + 1], Z[i + 1])
            if not (np.all(np.isfinite(Z[i + 1])) and np.all(np.isfinite(F[i + 1]))):
                raise NonFinite(f"state became non-finite at t={t[i + 1]:g}")

    meta = {
        "model": model.to_dict(),
        "delay": delay.to_dict(),
        "dt": dt,
        "t_end": float(t[-1]),
        "integrator": "rk4",
        "history": "constant",
    }
    return Trajectory(t, Z, delay(t), z0, meta)


def estimate_decay_rate(traj: Trajectory, window=None):
    """Least-squares slope of ``-log ||z(t)||`` over ``window = (t_start, t_end)``."""
    t0, t1 = window if window is not None else (traj.t[0], traj.t[-1])
    mask = (traj.t >= t0) & (traj.t <= t1)
    if mask.sum() < MIN_WINDOW_SAMPLES:
        raise DegenerateWindow(f"window ({t0}, {t1}) holds {int(mask.sum())} samples, need {MIN_WINDOW_SAMPLES}")
    norms = traj.norms[mask]
    if np.any(norms <= 0):
        raise DegenerateWindow("zero-norm sample in the window")
    slope = np.polyfit(traj.t[mask], -np.log(norms), 1)[0]
    return float(slope)


@dataclass
class EnvelopeCheck:
    H: float
    k: float
    violations: list

    @property
    def passed(self):
        return not self.violations

    def to_dict(self):
        return {"H": self.H, "k": self.k, "passed": self.passed, "violations": self.violations[:100],
                "violation_count": len(self.violations)}


def check_envelope(traj: Trajectory, H, k, rtol=1e-12) -> EnvelopeCheck:
    """Times where ``||z(t)|| > H ||phi|| exp(-k t)``."""
    if not H >= 1 or not k > 0:
        raise InvalidParams(f"need H >= 1 and k > 0, got H={H}, k={k}")
    bound = H * traj.history_norm * np.exp(-k * traj.t)
    bad = traj.norms > bound * (1 + rtol)
    return EnvelopeCheck(float(H), float(k), traj.t[bad].tolist())


def sector_ratios(model: NetworkModel, z):
    """``f_j(z_j) / z_j`` for the non-zero entries of ``z`` (flattened)."""
    z = np.atleast_2d(z)
    nz = z != 0
    ratio = model.activation(z) / np.where(nz, z, 1.0)
    return ratio[nz], np.broadcast_to(model.L, z.shape)[nz]
