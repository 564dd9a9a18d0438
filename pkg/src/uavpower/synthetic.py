"""Synthetic telemetry in the public dataset's column layout.

Used for tests, demos and pipeline smoke runs. The power signal is a smooth
function of payload, commanded speed/altitude, climb rate and acceleration
plus noise, so a learned model has something real to fit.
"""
from __future__ import annotations

import math
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .dataset import FlightRecord, FlightSample, write_flight_csv


def synthetic_power(payload_g, speed, climb, accel, altitude) -> np.ndarray:
    return 230.0 + 0.12 * payload_g - 2.0 * speed + 25.0 * climb + 6.0 * np.abs(accel) + 0.15 * altitude


def make_flight(
    flight_id: str,
    n: int = 60,
    payload: float = 250.0,
    speed: float = 8.0,
    altitude: float = 50.0,
    seed: int = 0,
    dt: float = 0.5,
    noise_w: float = 2.0,
) -> FlightRecord:
    rng = np.random.default_rng(seed)
    t = np.arange(n) * dt + rng.uniform(0, 1)
    frac = np.linspace(0.0, 1.0, n)
    # climb, cruise, descend
    climb = np.where(frac < 0.2, 2.0, np.where(frac > 0.85, -1.5, 0.0)) + rng.normal(0, 0.05, n)
    v_h = speed * np.clip(np.minimum((frac - 0.15) / 0.1, (0.9 - frac) / 0.1), 0.0, 1.0)
    heading = rng.uniform(0, 2 * math.pi) + np.cumsum(rng.normal(0, 0.01, n))
    vx, vy = v_h * np.cos(heading), v_h * np.sin(heading)
    ax = np.gradient(vx, dt) + rng.normal(0, 0.05, n)
    ay = np.gradient(vy, dt) + rng.normal(0, 0.05, n)
    az = np.gradient(climb, dt) + rng.normal(0, 0.05, n)
    accel = np.hypot(ax, ay)
    pitch = np.clip(0.02 * v_h + 0.05 * accel, -0.5, 0.5) + rng.normal(0, 0.01, n)
    yaw = heading
    qw = np.cos(pitch / 2) * np.cos(yaw / 2)
    qx = -np.sin(pitch / 2) * np.sin(yaw / 2)
    qy = np.sin(pitch / 2) * np.cos(yaw / 2)
    qz = np.cos(pitch / 2) * np.sin(yaw / 2)
    lon = -79.78 + np.cumsum(vx) * dt / 85000.0
    lat = 40.46 + np.cumsum(vy) * dt / 111000.0
    z = 270.0 + np.cumsum(climb) * dt
    wind = np.abs(2.0 + np.cumsum(rng.normal(0, 0.1, n)))
    wind_angle = (rng.uniform(0, 360) + np.cumsum(rng.normal(0, 2.0, n))) % 360
    power = synthetic_power(payload, v_h, climb, accel, altitude) + rng.normal(0, noise_w, n)
    voltage = 24.5 - 0.002 * (t - t[0]) + rng.normal(0, 0.01, n)
    current = np.maximum(power, 1.0) / voltage
    samples = [
        FlightSample(
            t=float(t[i]),
            wind_speed=float(wind[i]),
            wind_angle=float(wind_angle[i]),
            position_x=float(lon[i]),
            position_y=float(lat[i]),
            position_z=float(z[i]),
            orientation_x=float(qx[i]),
            orientation_y=float(qy[i]),
            orientation_z=float(qz[i]),
            orientation_w=float(qw[i]),
            velocity_x=float(vx[i]),
            velocity_y=float(vy[i]),
            velocity_z=float(climb[i]),
            angular_x=float(rng.normal(0, 0.02)),
            angular_y=float(rng.normal(0, 0.02)),
            angular_z=float(rng.normal(0, 0.02)),
            lin_accel_x=float(ax[i]),
            lin_accel_y=float(ay[i]),
            lin_accel_z=float(az[i]),
            cmd_speed=float(speed),
            payload=float(payload),
            cmd_altitude=float(altitude),
            battery_voltage=float(voltage[i]),
            battery_current=float(current[i]),
        )
        for i in range(n)
    ]
    return FlightRecord(flight_id, samples)


def make_dataset(
    n_flights: int = 10,
    samples_per_flight: int = 60,
    seed: int = 0,
    payloads: Sequence[float] = (0.0, 250.0, 500.0, 750.0),
    speeds: Sequence[float] = (4.0, 6.0, 8.0, 10.0, 12.0),
    altitudes: Sequence[float] = (25.0, 50.0, 75.0, 100.0),
) -> list[FlightRecord]:
    rng = np.random.default_rng(seed)
    flights = []
    for i in range(n_flights):
        flights.append(make_flight(
            str(i + 1),
            n=samples_per_flight,
            payload=payloads[i % len(payloads)],
            speed=speeds[i % len(speeds)],
            altitude=altitudes[i % len(altitudes)],
            seed=int(rng.integers(2 ** 31)),
        ))
    return flights


def write_dataset(path: Union[str, Path], n_flights: int = 10, samples_per_flight: int = 60,
                  seed: int = 0, column_map: Optional[dict] = None) -> list[FlightRecord]:
    flights = make_dataset(n_flights, samples_per_flight, seed)
    write_flight_csv(flights, path, column_map)
    return flights
