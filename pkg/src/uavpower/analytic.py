"""Closed-form power models for multirotor drones.

Five steady-flight models are provided (D'Andrea, with and without headwind,
Dorling, Stolaroff, Kirchstein and the reduced Tseng regression) together with
the thrust and momentum-theory induced-velocity sub-computations they share.

All public functions take SI inputs (kg, m/s, radians) and return watts, with
the single exception of :func:`power_tseng`, whose regression coefficients
expect the payload in grams.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace
from importlib import resources
from pathlib import Path
from typing import Optional, Union

from .errors import InvalidParameterError, NumericError, SingularConfigurationError

# D'Andrea's formula is written for speed in km/h and power in kW. The public
# API takes m/s and returns W; flip both constants to (1.0, 1.0) to evaluate
# the formula on raw SI numbers instead.
DANDREA_SPEED_CONVERSION = 3.6
DANDREA_UNIT_SCALE = 1000.0
DANDREA_CONSTANT = 370.0

INDUCED_TOL = 1e-10
INDUCED_MAX_ITER = 200
INDUCED_DAMPING = 0.5


def _finite(name: str, value: float) -> float:
    value = float(value)
    if not math.isfinite(value):
        raise InvalidParameterError(f"{name} must be finite, got {value!r}")
    return value


@dataclass(frozen=True)
class DroneParams:
    """Physical constants and masses feeding the analytic models.

    Model-specific constants may be ``None``; a model that needs a missing
    constant raises :class:`InvalidParameterError` naming it.
    """

    m_body: float
    m_battery: float
    m_payload: float = 0.0
    eta: float = 0.5
    g: float = 9.81
    rho: float = 1.225
    n_rotors: int = 4
    avionics_power: float = 0.0
    lift_to_drag: Optional[float] = None
    rotor_area: Optional[float] = None
    drag_coeffs: Optional[tuple[float, float, float]] = None
    ref_areas: Optional[tuple[float, float, float]] = None
    kappa: Optional[float] = None
    kappa2: Optional[float] = None
    kappa3: Optional[float] = None
    downwash: Optional[float] = None
    eta_charge: Optional[float] = None

    def __post_init__(self) -> None:
        for name in ("m_body", "m_battery", "m_payload", "avionics_power", "g"):
            v = _finite(name, getattr(self, name))
            if name != "g" and v < 0:
                raise InvalidParameterError(f"{name} must be >= 0, got {v}")
        if not 0 < _finite("eta", self.eta) <= 1:
            raise InvalidParameterError(f"eta must be in (0, 1], got {self.eta}")
        if _finite("rho", self.rho) <= 0:
            raise InvalidParameterError(f"rho must be > 0, got {self.rho}")
        if int(self.n_rotors) != self.n_rotors or self.n_rotors < 1:
            raise InvalidParameterError(f"n_rotors must be an integer >= 1, got {self.n_rotors}")
        if self.eta_charge is not None and not 0 < _finite("eta_charge", self.eta_charge) <= 1:
            raise InvalidParameterError(f"eta_charge must be in (0, 1], got {self.eta_charge}")
        if self.rotor_area is not None and _finite("rotor_area", self.rotor_area) <= 0:
            raise InvalidParameterError(f"rotor_area must be > 0, got {self.rotor_area}")
        if self.lift_to_drag is not None and _finite("lift_to_drag", self.lift_to_drag) <= 0:
            raise InvalidParameterError(f"lift_to_drag must be > 0, got {self.lift_to_drag}")
        for name in ("kappa", "kappa2", "kappa3", "downwash"):
            if getattr(self, name) is not None:
                _finite(name, getattr(self, name))
        for name in ("drag_coeffs", "ref_areas"):
            seq = getattr(self, name)
            if seq is None:
                continue
            seq = tuple(float(v) for v in seq)
            if len(seq) != 3:
                raise InvalidParameterError(f"{name} needs exactly 3 entries, got {len(seq)}")
            for v in seq:
                if not math.isfinite(v) or v < 0:
                    raise InvalidParameterError(f"{name} entries must be finite and >= 0, got {seq}")
            object.__setattr__(self, name, seq)

    @property
    def total_mass(self) -> float:
        return self.m_body + self.m_battery + self.m_payload

    @property
    def weight(self) -> float:
        return self.g * self.total_mass

    def with_payload(self, m_payload: float) -> "DroneParams":
        return replace(self, m_payload=m_payload)

    def require(self, *names: str) -> None:
        missing = [n for n in names if getattr(self, n) is None]
        if missing:
            raise InvalidParameterError(f"missing drone parameter(s): {', '.join(missing)}")

    def drag_area(self) -> float:
        """Sum of C_D * A over body, battery and payload (m^2)."""
        self.require("drag_coeffs", "ref_areas")
        return sum(cd * a for cd, a in zip(self.drag_coeffs, self.ref_areas))


@dataclass(frozen=True)
class AirState:
    v_air: float
    alpha: float = 0.0
    v_induced: float = 0.0
    thrust: float = 0.0

    def __post_init__(self) -> None:
        if self.v_air < 0 or self.v_induced < 0 or self.thrust < 0:
            raise InvalidParameterError("v_air, v_induced and thrust must be >= 0")
        if not abs(self.alpha) < math.pi / 2:
            raise InvalidParameterError(f"|alpha| must be < pi/2, got {self.alpha}")


def _speed(name: str, v: float) -> float:
    v = _finite(name, v)
    if v < 0:
        raise InvalidParameterError(f"{name} must be >= 0, got {v}")
    return v


def power_dandrea(params: DroneParams, v_air: float) -> float:
    params.require("lift_to_drag")
    v = _speed("v_air", v_air) * DANDREA_SPEED_CONVERSION
    core = params.total_mass * v / (DANDREA_CONSTANT * params.eta * params.lift_to_drag)
    return core * DANDREA_UNIT_SCALE + params.avionics_power


def power_dandrea_headwind(params: DroneParams, v_ground: float, headwind: float) -> float:
    """D'Andrea power with a scalar headwind (positive opposes travel)."""
    v_ground = _speed("v_ground", v_ground)
    headwind = _finite("headwind", headwind)
    return power_dandrea(params, max(v_ground + headwind, 0.0))


def _disk_term(params: DroneParams) -> float:
    params.require("rotor_area")
    d = 2.0 * params.n_rotors * params.rho * params.rotor_area
    if d <= 0:
        raise SingularConfigurationError("2*n*rho*rotor_area must be positive")
    return d


def power_dorling(params: DroneParams) -> float:
    """Hover power; independent of airspeed."""
    return params.g * params.total_mass ** 1.5 / math.sqrt(_disk_term(params))


def thrust(params: DroneParams, v_air: float) -> float:
    v = _finite("v_air", v_air)
    return params.weight + 0.5 * params.rho * params.drag_area() * v * v


def _induced_residual(v_i: float, t: float, disk: float, vx: float, vz: float) -> float:
    return v_i * disk * math.hypot(vx, vz + v_i) - t


def induced_velocity(params: DroneParams, thrust: float, v_air: float, alpha: float = 0.0) -> float:
    """Non-negative momentum-theory induced velocity for the given thrust.

    Solves ``v_i = T / (2 n rho A sqrt((v cos a)^2 + (v sin a + v_i)^2))`` by
    damped fixed-point iteration, falling back to bisection when the
    iteration stalls.
    """
    t = _finite("thrust", thrust)
    if t < 0:
        raise InvalidParameterError(f"thrust must be >= 0, got {t}")
    v = _speed("v_air", v_air)
    a = _finite("alpha", alpha)
    disk = _disk_term(params)
    if t == 0.0:
        return 0.0
    vx, vz = v * math.cos(a), v * math.sin(a)
    tol_res = 1e-8 * max(1.0, t)

    # hover closed form, also the starting guess in forward flight
    vi = math.sqrt(t / disk)
    if v == 0.0:
        return vi
    for _ in range(INDUCED_MAX_ITER):
        target = t / (disk * max(math.hypot(vx, vz + vi), 1e-300))
        nxt = (1.0 - INDUCED_DAMPING) * vi + INDUCED_DAMPING * target
        if abs(nxt - vi) <= INDUCED_TOL * max(1.0, vi):
            vi = nxt
            break
        vi = nxt
    if vi >= 0 and abs(_induced_residual(vi, t, disk, vx, vz)) < tol_res:
        return vi

    # bisection fallback; residual(0) = -t < 0 so a sign change exists
    lo, hi = 0.0, max(math.sqrt(t / disk), 1.0)
    while _induced_residual(hi, t, disk, vx, vz) < 0:
        hi *= 2.0
    for _ in range(INDUCED_MAX_ITER):
        mid = 0.5 * (lo + hi)
        r = _induced_residual(mid, t, disk, vx, vz)
        if r < 0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= INDUCED_TOL * max(1.0, hi) and abs(r) < tol_res:
            return mid
    res = _induced_residual(0.5 * (lo + hi), t, disk, vx, vz)
    if abs(res) < tol_res:
        return 0.5 * (lo + hi)
    raise NumericError("induced velocity did not converge", residual=res)


def power_stolaroff(params: DroneParams, v_air: float, alpha: float = 0.0) -> float:
    v = _speed("v_air", v_air)
    a = _finite("alpha", alpha)
    if not abs(a) < math.pi / 2:
        raise InvalidParameterError(f"|alpha| must be < pi/2, got {a}")
    t = thrust(params, v)
    vi = induced_velocity(params, t, v, a)
    return t * (v * math.sin(a) + vi) / params.eta


def power_kirchstein(params: DroneParams, v_air: float) -> float:
    params.require("kappa", "kappa2", "kappa3", "downwash", "eta_charge")
    v = _speed("v_air", v_air)
    if params.eta == 0 or params.eta_charge == 0:
        raise SingularConfigurationError("eta and eta_charge must be non-zero")
    w = params.weight
    mech = (
        params.kappa * thrust(params, v) * params.downwash
        + 0.5 * params.rho * params.drag_area() * v ** 3
        + params.kappa2 * w ** 1.5
        + params.kappa3 * w ** 0.5 * v ** 2
    )
    return mech / params.eta + params.avionics_power / params.eta_charge


def power_tseng(v_air: float, payload_g: float) -> float:
    """Reduced Tseng regression (3DR Solo form); payload in grams."""
    v = _speed("v_air", v_air)
    p = _finite("payload_g", payload_g)
    if p < 0:
        raise InvalidParameterError(f"payload_g must be >= 0, got {p}")
    return -2.595 * v + 0.197 * p + 251.7


# -- parameter profiles -----------------------------------------------------

_TUPLE_KEYS = {"drag_coeffs", "ref_areas"}
_INT_KEYS = {"n_rotors"}
PROFILE_KEYS = tuple(f.name for f in fields(DroneParams))


def parse_profile(text: str, source: str = "<profile>") -> DroneParams:
    """Parse ``name = value`` lines into :class:`DroneParams`.

    ``#`` starts a comment; tuple-valued keys take comma-separated numbers.
    Unknown keys are rejected.
    """
    values: dict = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidParameterError(f"{source}:{lineno}: expected 'name = value'")
        key, _, val = (s.strip() for s in line.partition("="))
        if key not in PROFILE_KEYS:
            raise InvalidParameterError(f"{source}:{lineno}: unknown key {key!r}")
        if key in values:
            raise InvalidParameterError(f"{source}:{lineno}: duplicate key {key!r}")
        try:
            if key in _TUPLE_KEYS:
                values[key] = tuple(float(x) for x in val.split(","))
            elif key in _INT_KEYS:
                values[key] = int(val)
            else:
                values[key] = float(val)
        except ValueError as exc:
            raise InvalidParameterError(f"{source}:{lineno}: bad value for {key}: {val!r}") from exc
    for key in ("m_body", "m_battery"):
        if key not in values:
            raise InvalidParameterError(f"{source}: missing required key {key!r}")
    return DroneParams(**values)


def load_profile(path: Union[str, Path, None] = None) -> DroneParams:
    """Load a profile file; ``None`` loads the shipped reference profile."""
    if path is None:
        text = resources.files("uavpower").joinpath("data/reference_profile.txt").read_text("utf-8")
        return parse_profile(text, "reference_profile.txt")
    path = Path(path)
    return parse_profile(path.read_text("utf-8"), str(path))


def dump_profile(params: DroneParams) -> str:
    lines = []
    for name in PROFILE_KEYS:
        v = getattr(params, name)
        if v is None:
            continue
        if name in _TUPLE_KEYS:
            lines.append(f"{name} = {', '.join(repr(float(x)) for x in v)}")
        else:
            lines.append(f"{name} = {v!r}")
    return "\n".join(lines) + "\n"
