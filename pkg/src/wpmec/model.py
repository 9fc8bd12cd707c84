"""Physical model of a wireless powered MEC network.

Holds the parameter types and the closed-form energy / rate expressions
that every solver evaluates.  Rates are in bits per second and do not
depend on the frame length ``T``; ``T`` only enters quantities that are
absolute (energy in joules, durations in seconds).
"""

import json
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import lambertw

from .errors import FeasibilityError, InvalidInputError

#: Absolute slack allowed on ``a + sum(tau) <= 1``.
FEAS_TOL = 1e-9

SPEED_OF_LIGHT = 3e8


def _positive(name, value):
    if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
        raise InvalidInputError(f"{name} must be a positive finite number, got {value!r}")


@dataclass(frozen=True)
class SystemParams:
    """Constants shared by every device.

    Attributes
    ----------
    P : AP transmit power [W].
    mu : energy harvesting efficiency, in (0, 1).
    T : frame length [s].
    B : uplink bandwidth [Hz].
    v_u : offloading overhead factor (>= 1).
    N0 : receiver noise power [W].
    phi : CPU cycles needed per bit.
    """

    P: float = 3.0
    mu: float = 0.51
    T: float = 1.0
    B: float = 2e6
    v_u: float = 1.1
    N0: float = 1e-10
    phi: float = 100.0

    def __post_init__(self):
        for name in ("P", "T", "B", "N0", "phi"):
            _positive(name, getattr(self, name))
        if not 0 < self.mu < 1:
            raise InvalidInputError(f"mu must lie in (0, 1), got {self.mu!r}")
        if not (math.isfinite(self.v_u) and self.v_u >= 1):
            raise InvalidInputError(f"v_u must be >= 1, got {self.v_u!r}")

    @property
    def eta1(self):
        return (self.mu * self.P) ** (1.0 / 3.0) / self.phi

    @property
    def eta2(self):
        return self.mu * self.P / self.N0

    @property
    def epsilon(self):
        return self.B / (self.v_u * math.log(2))


@dataclass(frozen=True)
class ChannelModel:
    """Free-space path loss ``h = A_d (c / (4 pi f_c d))**d_e``."""

    A_d: float = 4.11
    f_c: float = 915e6
    d_e: float = 2.8

    def __post_init__(self):
        _positive("A_d", self.A_d)
        _positive("f_c", self.f_c)
        if not (math.isfinite(self.d_e) and self.d_e >= 2):
            raise InvalidInputError(f"d_e must be >= 2, got {self.d_e!r}")


@dataclass(frozen=True)
class DeviceParams:
    """Per-device parameters: channel gain, rate weight, chip coefficient."""

    h: float
    w: float = 1.0
    k: float = 1e-26
    d: Optional[float] = None

    def __post_init__(self):
        _positive("h", self.h)
        _positive("w", self.w)
        _positive("k", self.k)
        if self.d is not None:
            _positive("d", self.d)


@dataclass(frozen=True)
class Instance:
    system: SystemParams
    devices: tuple

    def __post_init__(self):
        devices = tuple(self.devices)
        if not devices:
            raise InvalidInputError("an instance needs at least one device")
        for dev in devices:
            if not isinstance(dev, DeviceParams):
                raise InvalidInputError(f"expected DeviceParams, got {type(dev).__name__}")
        object.__setattr__(self, "devices", devices)

    @property
    def N(self):
        return len(self.devices)

    @property
    def h(self):
        return np.array([d.h for d in self.devices])

    @property
    def w(self):
        return np.array([d.w for d in self.devices])

    @property
    def k(self):
        return np.array([d.k for d in self.devices])

    @property
    def rho(self):
        """Effective offloading SNR coefficient ``eta2 * h**2`` per device."""
        return self.system.eta2 * self.h ** 2

    @property
    def local_coeff(self):
        """``eta1 * (h/k)**(1/3)``: local rate at ``a = 1`` per device."""
        return self.system.eta1 * np.cbrt(self.h / self.k)

    def permuted(self, order):
        return Instance(self.system, tuple(self.devices[i] for i in order))


@dataclass(frozen=True)
class ModeAssignment:
    """Binary computing modes: 0 = local computing, 1 = offloading."""

    m: tuple

    def __post_init__(self):
        m = tuple(int(v) for v in self.m)
        if any(v not in (0, 1) for v in m):
            raise InvalidInputError(f"modes must be 0 or 1, got {self.m!r}")
        object.__setattr__(self, "m", m)

    def __len__(self):
        return len(self.m)

    def __iter__(self):
        return iter(self.m)

    def __getitem__(self, i):
        return self.m[i]

    @property
    def bits(self):
        return "".join(str(v) for v in self.m)

    @classmethod
    def coerce(cls, modes, n=None):
        out = modes if isinstance(modes, cls) else cls(tuple(modes))
        if n is not None and len(out) != n:
            raise InvalidInputError(f"mode vector has length {len(out)}, expected {n}")
        return out


@dataclass(frozen=True)
class Allocation:
    """WPT fraction ``a`` and per-device offloading fractions ``tau``."""

    a: float
    tau: tuple

    def __post_init__(self):
        object.__setattr__(self, "a", float(self.a))
        object.__setattr__(self, "tau", tuple(float(t) for t in self.tau))

    def used_time(self, modes):
        modes = ModeAssignment.coerce(modes, len(self.tau))
        return math.fsum([self.a] + [t for t, m in zip(self.tau, modes) if m == 1])

    def check_feasible(self, modes, tol=FEAS_TOL):
        if not (math.isfinite(self.a) and self.a >= 0):
            raise FeasibilityError(f"a = {self.a!r} is negative or not finite", "a >= 0")
        for i, t in enumerate(self.tau):
            if not (math.isfinite(t) and t >= 0):
                raise FeasibilityError(f"tau[{i}] = {t!r} is negative or not finite",
                                       f"tau[{i}] >= 0")
        if self.a > 1 + tol:
            raise FeasibilityError(f"a = {self.a!r} exceeds 1", "a <= 1")
        used = self.used_time(modes)
        if used > 1 + tol:
            raise FeasibilityError(f"a + sum(tau) = {used!r} exceeds 1", "a + sum(tau) <= 1")


@dataclass(frozen=True)
class DevicePlan:
    E: float
    f_star: float
    t_star: float
    p_tx_star: float
    rate: float


# ---------------------------------------------------------------------------
# closed-form physics


def channel_gain(d, cm=ChannelModel()):
    """Free-space path-loss power gain at distance ``d`` metres."""
    if not (math.isfinite(d) and d > 0):
        raise InvalidInputError(f"distance must be positive, got {d!r}")
    return cm.A_d * (SPEED_OF_LIGHT / (4 * math.pi * cm.f_c * d)) ** cm.d_e


def _check_fraction(a):
    if not (math.isfinite(a) and 0 <= a <= 1):
        raise InvalidInputError(f"time fraction must lie in [0, 1], got {a!r}")


def harvested_energy(inst, i, a):
    _check_fraction(a)
    s = inst.system
    return s.mu * s.P * inst.devices[i].h * a * s.T


def local_rate(inst, i, a):
    """Best local computing rate: the device computes over the whole frame."""
    _check_fraction(a)
    dev = inst.devices[i]
    return inst.system.eta1 * (dev.h / dev.k) ** (1.0 / 3.0) * a ** (1.0 / 3.0)


def _offload(eps, rho, a, tau):
    if tau <= 0 or a <= 0:
        return 0.0
    return eps * tau * math.log1p(rho * a / tau)


def offload_rate(inst, i, a, tau):
    """Offloading rate ``eps * tau * ln(1 + eta2 h^2 a / tau)``, zero at ``tau = 0``."""
    if not (math.isfinite(a) and math.isfinite(tau)) or a < 0 or tau < 0:
        raise InvalidInputError(f"a and tau must be non-negative, got a={a!r}, tau={tau!r}")
    s = inst.system
    return _offload(s.epsilon, s.eta2 * inst.devices[i].h ** 2, a, tau)


def offload_rate_log2(inst, i, a, tau):
    """Same rate written as Shannon capacity with the transmit power spent fully."""
    if a < 0 or tau < 0:
        raise InvalidInputError(f"a and tau must be non-negative, got a={a!r}, tau={tau!r}")
    if tau == 0 or a == 0:
        return 0.0
    s = inst.system
    h = inst.devices[i].h
    snr = s.mu * s.P * a * h * h / (tau * s.N0)
    return s.B * tau / s.v_u * math.log2(1 + snr)


def weighted_sum_rate(inst, modes, alloc):
    """Weighted sum computation rate of a feasible (modes, allocation) pair."""
    modes = ModeAssignment.coerce(modes, inst.N)
    if len(alloc.tau) != inst.N:
        raise InvalidInputError(f"tau has length {len(alloc.tau)}, expected {inst.N}")
    alloc.check_feasible(modes)
    a = min(alloc.a, 1.0)
    terms = []
    for i, (dev, m) in enumerate(zip(inst.devices, modes)):
        if m == 0:
            terms.append(dev.w * local_rate(inst, i, a))
        else:
            terms.append(dev.w * offload_rate(inst, i, a, alloc.tau[i]))
    return math.fsum(terms)


def device_plan(inst, i, mode, a, tau=0.0):
    """Operating point of device ``i``: energy, CPU speed / time, transmit power, rate."""
    s = inst.system
    dev = inst.devices[i]
    E = harvested_energy(inst, i, a)
    if mode == 0:
        f_star = (E / (dev.k * s.T)) ** (1.0 / 3.0)
        return DevicePlan(E=E, f_star=f_star, t_star=s.T, p_tx_star=0.0,
                          rate=f_star * s.T / (s.phi * s.T))
    if mode != 1:
        raise InvalidInputError(f"mode must be 0 or 1, got {mode!r}")
    if tau <= 0:
        return DevicePlan(E=E, f_star=0.0, t_star=0.0, p_tx_star=0.0, rate=0.0)
    return DevicePlan(E=E, f_star=0.0, t_star=0.0, p_tx_star=E / (tau * s.T),
                      rate=offload_rate(inst, i, a, tau))


# ---------------------------------------------------------------------------
# marginal-rate helpers shared by the solvers
#
# With s = rho * a / tau the offloading rate is eps * tau * ln(1 + s) and its
# partial derivative in tau is eps * psi(s), psi(s) = ln(1 + s) - s / (1 + s).


def psi(s):
    s = np.asarray(s, dtype=float)
    shape = s.shape
    s = np.atleast_1d(s)
    with np.errstate(invalid="ignore"):
        out = np.log1p(s) - s / (1 + s)
    small = s < 1e-3
    if np.any(small):
        ss = s[small]
        out[small] = ss ** 2 * (0.5 - ss * (2.0 / 3 - ss * (0.75 - ss * (0.8 - ss * 5.0 / 6))))
    big = np.isinf(s)
    if np.any(big):
        out[big] = np.inf
    return out.reshape(shape)


def psi_log(u):
    """``psi(e**u)`` evaluated without overflow for large ``u``."""
    u = np.asarray(u, dtype=float)
    hi = u > 30
    if not np.any(hi):
        return psi(np.exp(u))
    out = psi(np.exp(np.minimum(u, 30.0)))
    uh = u[hi]
    out[hi] = uh + np.log1p(np.exp(-uh)) - 1.0 / (1.0 + np.exp(-uh))
    return out


def psi_log_slope(u):
    """Derivative of ``psi(e**u)`` with respect to ``u``: ``(s/(1+s))**2``."""
    with np.errstate(over="ignore"):
        return 1.0 / (1.0 + np.exp(-np.asarray(u, dtype=float))) ** 2


def psi_inverse_log(y):
    """``log`` of the solution of ``psi(s) = y`` (``y > 0``, vectorized)."""
    y = np.asarray(y, dtype=float)
    if np.any(y <= 0):
        raise InvalidInputError("psi_inverse_log needs y > 0")
    # psi(s) = t - 1 - ln t with t = 1/(1+s), i.e. t = -W0(-exp(-1-y))
    mid = (y > 1e-6) & (y < 500)
    if np.all(mid):
        t = -lambertw(-np.exp(-1.0 - y)).real
        u = np.log(1.0 / t - 1.0)
    else:
        ym = np.where(mid, y, 1.0)
        t = -lambertw(-np.exp(-1.0 - ym)).real
        u = np.where(mid, np.log(1.0 / t - 1.0),
                     np.where(y >= 500, y + 1.0, 0.5 * np.log(2 * y)))
    # Newton on log(psi(e^u)) = log(y); near-linear in u on both tails
    logy = np.log(y)
    for _ in range(2):
        p = psi_log(u)
        u = u - (np.log(p) - logy) * p / psi_log_slope(u)
    return u


def psi_inverse(y):
    """Solve ``psi(s) = y`` for ``s >= 0`` (vectorized); ``y = 0`` maps to 0."""
    y = np.asarray(y, dtype=float)
    if np.any(y < 0):
        raise InvalidInputError("psi_inverse needs y >= 0")
    pos = y > 0
    u = psi_inverse_log(np.where(pos, y, 1.0))
    with np.errstate(over="ignore"):
        return np.where(pos, np.exp(u), 0.0)


# ---------------------------------------------------------------------------
# simulation defaults and JSON I/O


def default_system():
    """Constants of the simulated network: 3 W Powercast source, 2 MHz uplink."""
    return SystemParams()


def default_channel(d_e=2.8):
    return ChannelModel(d_e=d_e)


def instance_from_distances(distances, weights, system=None, channel=None, k=1e-26):
    system = system or default_system()
    channel = channel or default_channel()
    devices = tuple(DeviceParams(h=channel_gain(float(d), channel), w=float(w), k=k, d=float(d))
                    for d, w in zip(distances, weights))
    return Instance(system, devices)


_SYSTEM_KEYS = {"P", "mu", "T", "B", "v_u", "N0", "phi"}
_CHANNEL_KEYS = {"A_d", "f_c", "d_e"}
_DEVICE_KEYS = {"h", "d", "w", "k"}


def _reject_unknown(obj, allowed, where):
    if not isinstance(obj, dict):
        raise InvalidInputError(f"{where}: expected an object")
    extra = sorted(set(obj) - allowed)
    if extra:
        raise InvalidInputError(f"{where}: unknown key(s) {', '.join(extra)}")


def _num(obj, key, where):
    val = obj[key]
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise InvalidInputError(f"{where}.{key}: expected a number, got {val!r}")
    return float(val)


def instance_from_dict(doc):
    _reject_unknown(doc, {"system", "devices", "channel"}, "instance")
    if "system" not in doc or "devices" not in doc:
        raise InvalidInputError("instance: 'system' and 'devices' are required")
    sysd = doc["system"]
    _reject_unknown(sysd, _SYSTEM_KEYS, "system")
    missing = sorted(_SYSTEM_KEYS - set(sysd))
    if missing:
        raise InvalidInputError(f"system: missing key(s) {', '.join(missing)}")
    system = SystemParams(**{k: _num(sysd, k, "system") for k in sysd})
    channel = None
    if "channel" in doc:
        _reject_unknown(doc["channel"], _CHANNEL_KEYS, "channel")
        channel = ChannelModel(**{k: _num(doc["channel"], k, "channel") for k in doc["channel"]})
    if not isinstance(doc["devices"], list):
        raise InvalidInputError("devices: expected an array")
    devices = []
    for j, dd in enumerate(doc["devices"]):
        where = f"devices[{j}]"
        _reject_unknown(dd, _DEVICE_KEYS, where)
        vals = {k: _num(dd, k, where) for k in dd}
        if "h" not in vals:
            if "d" not in vals:
                raise InvalidInputError(f"{where}: one of 'h' or 'd' is required")
            if channel is None:
                raise InvalidInputError(f"{where}.d: a 'channel' block is required to derive h")
            vals["h"] = channel_gain(vals["d"], channel)
        if "w" not in vals or "k" not in vals:
            raise InvalidInputError(f"{where}: 'w' and 'k' are required")
        devices.append(DeviceParams(**vals))
    return Instance(system, tuple(devices))


def instance_to_dict(inst):
    s = inst.system
    return {
        "system": {"P": s.P, "mu": s.mu, "T": s.T, "B": s.B, "v_u": s.v_u,
                   "N0": s.N0, "phi": s.phi},
        "devices": [{"h": d.h, "w": d.w, "k": d.k} for d in inst.devices],
    }


def load_instance(path):
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InvalidInputError(f"{path}: malformed JSON ({exc})") from exc
    return instance_from_dict(doc)
