"""Network description for waveguide/cavity systems.

A :class:`NetworkSpec` declares everything a run needs: the propagation
medium (:class:`PhysicalParams`), the waveguides, the ring cavities with
their tuning schedules, the evanescent couplings between them, the initial
Gaussian pulses, the probes to record, and the discretization settings.

All types are immutable after construction and safe to share between
threads.  Validation never raises on bad data: ``validate_network`` returns
a list of :class:`Violation` entries and an empty list means the spec is
sound.

Conventions: hbar = 1 throughout; shipped configurations use a rotating
frame with ``v_g = 1`` and ``omega_0 = 0`` so cavity frequencies and pulse
carriers are detunings from the waveguide carrier.
"""

from __future__ import annotations

import json
import math
from bisect import bisect_right
from dataclasses import dataclass, field, replace

__all__ = [
    "C_LIGHT",
    "HBAR",
    "PhysicalParams",
    "Constant",
    "LinearRamp",
    "PiecewiseLinear",
    "TuningSchedule",
    "RingGeometry",
    "CavitySpec",
    "WaveguideSpec",
    "CouplingSpec",
    "PulseSpec",
    "WaveguidePoint",
    "CavityProbe",
    "Probe",
    "HardAssert",
    "AbsorbingRamp",
    "Boundary",
    "SimulationConfig",
    "NetworkSpec",
    "Violation",
    "validate_network",
    "nearest_cell",
    "cell_center",
    "SPLIT_STEP",
    "EULER_PAPER",
]

HBAR = 1.0
C_LIGHT = 299792458.0  # used only for nominal ring round-trip metadata

SPLIT_STEP = "split_step"
EULER_PAPER = "euler_paper"
INTEGRATORS = (SPLIT_STEP, EULER_PAPER)


# ---------------------------------------------------------------------------
# grid arithmetic shared with the solver

def cell_center(index: int, x_min: float, dx: float) -> float:
    """Coordinate of the center of cell ``index`` on a grid starting at x_min."""
    return x_min + (index + 0.5) * dx


def nearest_cell(x: float, x_min: float, dx: float, n_cells: int) -> int:
    """Index of the grid cell whose center is closest to ``x``."""
    raw = int(math.floor((x - x_min) / dx))
    best = min(range(max(0, raw - 1), min(n_cells, raw + 2)),
               key=lambda k: abs(cell_center(k, x_min, dx) - x),
               default=0)
    return best


# ---------------------------------------------------------------------------
# physical parameters and schedules

@dataclass(frozen=True)
class PhysicalParams:
    """Waveguide medium: group velocity and carrier frequency (hbar = 1)."""

    v_g: float = 1.0
    omega_0: float = 0.0


@dataclass(frozen=True)
class Constant:
    """Fixed cavity resonance."""

    omega: float

    def value_at(self, t: float) -> float:
        return self.omega


@dataclass(frozen=True)
class LinearRamp:
    """Linear sweep of the resonance from omega_start to omega_end.

    Before ``t_start`` the value is ``omega_start``; after ``t_end`` it is
    ``omega_end``; in between it interpolates linearly, so the schedule is
    continuous everywhere.
    """

    t_start: float
    t_end: float
    omega_start: float
    omega_end: float

    def value_at(self, t: float) -> float:
        if t <= self.t_start:
            return self.omega_start
        if t >= self.t_end:
            return self.omega_end
        frac = (t - self.t_start) / (self.t_end - self.t_start)
        return self.omega_start + frac * (self.omega_end - self.omega_start)


@dataclass(frozen=True)
class PiecewiseLinear:
    """Piecewise-linear schedule through (t, omega) knots.

    Knot times must be strictly increasing.  Evaluation at a knot returns the
    stored omega bit-for-bit; outside the knot range the first/last omega is
    held.
    """

    knots: tuple[tuple[float, float], ...]

    def value_at(self, t: float) -> float:
        ts = [k[0] for k in self.knots]
        if t <= ts[0]:
            return self.knots[0][1]
        if t >= ts[-1]:
            return self.knots[-1][1]
        j = bisect_right(ts, t)
        t0, w0 = self.knots[j - 1]
        t1, w1 = self.knots[j]
        if t == t0:
            return w0
        return w0 + (t - t0) / (t1 - t0) * (w1 - w0)


TuningSchedule = Constant | LinearRamp | PiecewiseLinear


def schedule_to_dict(s: TuningSchedule) -> dict:
    if isinstance(s, Constant):
        return {"type": "constant", "omega": s.omega}
    if isinstance(s, LinearRamp):
        return {"type": "linear_ramp", "t_start": s.t_start, "t_end": s.t_end,
                "omega_start": s.omega_start, "omega_end": s.omega_end}
    return {"type": "piecewise_linear", "knots": [[t, w] for t, w in s.knots]}


def schedule_from_dict(d: dict) -> TuningSchedule:
    kind = d.get("type")
    if kind == "constant":
        return Constant(float(d["omega"]))
    if kind == "linear_ramp":
        return LinearRamp(float(d["t_start"]), float(d["t_end"]),
                          float(d["omega_start"]), float(d["omega_end"]))
    if kind == "piecewise_linear":
        return PiecewiseLinear(tuple((float(t), float(w)) for t, w in d["knots"]))
    raise ValueError(f"unknown schedule type {kind!r}")


# ---------------------------------------------------------------------------
# network elements

@dataclass(frozen=True)
class RingGeometry:
    """Optional ring metadata: effective index and radius.

    Only used to report a nominal round-trip time 2*pi*n*R/c in run metadata;
    the dynamical model is single-mode with no internal propagation delay.
    """

    index: float
    radius: float

    def round_trip_time(self) -> float:
        return 2.0 * math.pi * self.index * self.radius / C_LIGHT


@dataclass(frozen=True)
class CavitySpec:
    """A traveling-wave resonator mode.

    ``tau_c`` is the intrinsic amplitude lifetime; ``math.inf`` means
    lossless.  ``tuning`` overrides the baseline resonance ``omega_c0`` when
    present.
    """

    id: str
    omega_c0: float = 0.0
    tau_c: float = math.inf
    tuning: TuningSchedule | None = None
    geometry: RingGeometry | None = None

    def omega_at(self, t: float) -> float:
        if self.tuning is None:
            return self.omega_c0
        return self.tuning.value_at(t)

    @property
    def inv_tau(self) -> float:
        return 0.0 if math.isinf(self.tau_c) else 1.0 / self.tau_c


@dataclass(frozen=True)
class WaveguideSpec:
    """A single-mode waveguide carrying one propagation direction."""

    id: str
    length: float
    direction: int = 1
    x_min: float = 0.0

    @property
    def x_max(self) -> float:
        return self.x_min + self.length

    def contains(self, x: float) -> bool:
        return self.x_min <= x <= self.x_max


@dataclass(frozen=True)
class CouplingSpec:
    """Point coupling of strength V between a waveguide cell and a cavity.

    Units of V are length^(1/2)/time so that Gamma = |V|^2 / (2 v_g) is the
    amplitude decay rate of the cavity into the waveguide.
    """

    waveguide_id: str
    cavity_id: str
    position: float
    strength: complex = 1.0

    @property
    def label(self) -> str:
        return f"{self.waveguide_id}->{self.cavity_id}@{self.position:g}"


@dataclass(frozen=True)
class PulseSpec:
    """Initial Gaussian packet: amplitude envelope exp(-(x-x0)^2/(4 sigma^2)).

    ``detuning`` is the carrier offset from omega_0, applied as a phase
    exp(i Q x) with Q = direction * detuning / v_g.  The packet support
    [x0 - 5 sigma, x0 + 5 sigma] must lie inside the waveguide and clear of
    every coupling cell.
    """

    waveguide_id: str
    center: float
    sigma: float
    detuning: float = 0.0


@dataclass(frozen=True)
class WaveguidePoint:
    """Record the field amplitude at a fixed position every ``sample_stride`` steps."""

    waveguide_id: str
    x: float
    sample_stride: int = 1
    name: str | None = None


@dataclass(frozen=True)
class CavityProbe:
    """Record a cavity amplitude every ``sample_stride`` steps."""

    cavity_id: str
    sample_stride: int = 1
    name: str | None = None


Probe = WaveguidePoint | CavityProbe


@dataclass(frozen=True)
class HardAssert:
    """Fail the run if any amplitude reaches the open grid ends."""


@dataclass(frozen=True)
class AbsorbingRamp:
    """Smoothly damp the last ``width`` cells at each downstream end."""

    width: int = 40


Boundary = HardAssert | AbsorbingRamp


@dataclass(frozen=True)
class SimulationConfig:
    """Discretization and run settings.

    The time step is always dx / v_g (Courant number one), which makes the
    advection update an exact one-cell shift.
    """

    dx: float
    t_final: float
    integrator: str = SPLIT_STEP
    boundary: Boundary = field(default_factory=HardAssert)
    snapshot_times: tuple[float, ...] = ()


@dataclass(frozen=True)
class NetworkSpec:
    """Complete declarative description of a system plus its run settings."""

    params: PhysicalParams = field(default_factory=PhysicalParams)
    waveguides: tuple[WaveguideSpec, ...] = ()
    cavities: tuple[CavitySpec, ...] = ()
    couplings: tuple[CouplingSpec, ...] = ()
    pulses: tuple[PulseSpec, ...] = ()
    probes: tuple[Probe, ...] = ()
    sim: SimulationConfig = field(default_factory=lambda: SimulationConfig(dx=0.05, t_final=1.0))

    def waveguide(self, wid: str) -> WaveguideSpec | None:
        for w in self.waveguides:
            if w.id == wid:
                return w
        return None

    def cavity(self, cid: str) -> CavitySpec | None:
        for c in self.cavities:
            if c.id == cid:
                return c
        return None

    def with_sim(self, **changes) -> "NetworkSpec":
        return replace(self, sim=replace(self.sim, **changes))

    # -- JSON configuration format ------------------------------------------

    def to_dict(self) -> dict:
        return {
            "params": {"v_g": self.params.v_g, "omega_0": self.params.omega_0},
            "waveguides": [
                {"id": w.id, "length": w.length, "direction": w.direction,
                 "x_min": w.x_min}
                for w in self.waveguides
            ],
            "cavities": [_cavity_to_dict(c) for c in self.cavities],
            "couplings": [
                {"waveguide_id": k.waveguide_id, "cavity_id": k.cavity_id,
                 "position": k.position, "strength": _complex_to_json(k.strength)}
                for k in self.couplings
            ],
            "pulses": [
                {"waveguide_id": p.waveguide_id, "center": p.center,
                 "sigma": p.sigma, "detuning": p.detuning}
                for p in self.pulses
            ],
            "probes": [_probe_to_dict(p) for p in self.probes],
            "sim": _sim_to_dict(self.sim),
        }

    def to_json(self, indent: int = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkSpec":
        params = d.get("params", {})
        return cls(
            params=PhysicalParams(v_g=float(params.get("v_g", 1.0)),
                                  omega_0=float(params.get("omega_0", 0.0))),
            waveguides=tuple(
                WaveguideSpec(id=str(w["id"]), length=float(w["length"]),
                              direction=int(w.get("direction", 1)),
                              x_min=float(w.get("x_min", 0.0)))
                for w in d.get("waveguides", ())),
            cavities=tuple(_cavity_from_dict(c) for c in d.get("cavities", ())),
            couplings=tuple(
                CouplingSpec(waveguide_id=str(k["waveguide_id"]),
                             cavity_id=str(k["cavity_id"]),
                             position=float(k["position"]),
                             strength=_complex_from_json(k.get("strength", 1.0)))
                for k in d.get("couplings", ())),
            pulses=tuple(
                PulseSpec(waveguide_id=str(p["waveguide_id"]),
                          center=float(p["center"]), sigma=float(p["sigma"]),
                          detuning=float(p.get("detuning", 0.0)))
                for p in d.get("pulses", ())),
            probes=tuple(_probe_from_dict(p) for p in d.get("probes", ())),
            sim=_sim_from_dict(d["sim"]),
        )

    @classmethod
    def from_json(cls, text: str) -> "NetworkSpec":
        return cls.from_dict(json.loads(text))


def _complex_to_json(z: complex):
    z = complex(z)
    if z.imag == 0.0:
        return z.real
    return [z.real, z.imag]


def _complex_from_json(v) -> complex:
    if isinstance(v, (list, tuple)):
        return complex(float(v[0]), float(v[1]))
    return complex(float(v), 0.0)


def _tau_to_json(tau: float):
    return None if math.isinf(tau) else tau


def _tau_from_json(v) -> float:
    if v is None:
        return math.inf
    if isinstance(v, str):
        return math.inf if v.lower() in ("inf", "infinity") else float(v)
    return float(v)


def _cavity_to_dict(c: CavitySpec) -> dict:
    d = {"id": c.id, "omega_c0": c.omega_c0, "tau_c": _tau_to_json(c.tau_c)}
    if c.tuning is not None:
        d["tuning"] = schedule_to_dict(c.tuning)
    if c.geometry is not None:
        d["geometry"] = {"index": c.geometry.index, "radius": c.geometry.radius}
    return d


def _cavity_from_dict(d: dict) -> CavitySpec:
    geometry = None
    if d.get("geometry"):
        geometry = RingGeometry(index=float(d["geometry"]["index"]),
                                radius=float(d["geometry"]["radius"]))
    tuning = schedule_from_dict(d["tuning"]) if d.get("tuning") else None
    return CavitySpec(id=str(d["id"]), omega_c0=float(d.get("omega_c0", 0.0)),
                      tau_c=_tau_from_json(d.get("tau_c")), tuning=tuning,
                      geometry=geometry)


def _probe_to_dict(p: Probe) -> dict:
    if isinstance(p, WaveguidePoint):
        d = {"type": "waveguide_point", "waveguide_id": p.waveguide_id,
             "x": p.x, "sample_stride": p.sample_stride}
    else:
        d = {"type": "cavity", "cavity_id": p.cavity_id,
             "sample_stride": p.sample_stride}
    if p.name is not None:
        d["name"] = p.name
    return d


def _probe_from_dict(d: dict) -> Probe:
    name = d.get("name")
    stride = int(d.get("sample_stride", 1))
    if d["type"] == "waveguide_point":
        return WaveguidePoint(waveguide_id=str(d["waveguide_id"]),
                              x=float(d["x"]), sample_stride=stride, name=name)
    if d["type"] == "cavity":
        return CavityProbe(cavity_id=str(d["cavity_id"]),
                           sample_stride=stride, name=name)
    raise ValueError(f"unknown probe type {d.get('type')!r}")


def _sim_to_dict(s: SimulationConfig) -> dict:
    if isinstance(s.boundary, AbsorbingRamp):
        boundary = {"type": "absorbing_ramp", "width": s.boundary.width}
    else:
        boundary = {"type": "hard_assert"}
    return {"dx": s.dx, "t_final": s.t_final, "integrator": s.integrator,
            "boundary": boundary, "snapshot_times": list(s.snapshot_times)}


def _sim_from_dict(d: dict) -> SimulationConfig:
    b = d.get("boundary", {"type": "hard_assert"})
    if b.get("type") == "absorbing_ramp":
        boundary: Boundary = AbsorbingRamp(width=int(b.get("width", 40)))
    else:
        boundary = HardAssert()
    return SimulationConfig(dx=float(d["dx"]), t_final=float(d["t_final"]),
                            integrator=str(d.get("integrator", SPLIT_STEP)),
                            boundary=boundary,
                            snapshot_times=tuple(float(t) for t in d.get("snapshot_times", ())))


# ---------------------------------------------------------------------------
# validation

@dataclass(frozen=True)
class Violation:
    """One invariant violation: a machine-readable code plus a message."""

    code: str
    message: str
    where: str = ""


def validate_network(spec: NetworkSpec) -> list[Violation]:
    """Check every structural invariant of ``spec``.

    Total: no spec value raises; every defect maps to a report entry and an
    empty list means the spec is valid.
    """
    out: list[Violation] = []

    def bad(code, message, where=""):
        out.append(Violation(code, message, where))

    p = spec.params
    if not (p.v_g > 0):
        bad("nonpositive-group-velocity", f"v_g must be positive, got {p.v_g}", "params")
    if p.omega_0 < 0:
        bad("negative-carrier-frequency", f"omega_0 must be >= 0, got {p.omega_0}", "params")

    s = spec.sim
    if not (s.dx > 0):
        bad("nonpositive-grid-spacing", f"dx must be positive, got {s.dx}", "sim")
    if not (s.t_final > 0):
        bad("nonpositive-duration", f"t_final must be positive, got {s.t_final}", "sim")
    if s.integrator not in INTEGRATORS:
        bad("unknown-integrator", f"integrator must be one of {INTEGRATORS}", "sim")
    if isinstance(s.boundary, AbsorbingRamp) and s.boundary.width < 1:
        bad("bad-absorber-width", "absorbing ramp width must be >= 1", "sim")

    if not spec.waveguides:
        bad("no-waveguides", "at least one waveguide is required")

    seen_w: set[str] = set()
    for w in spec.waveguides:
        if w.id in seen_w:
            bad("duplicate-id", f"duplicate waveguide id {w.id!r}", w.id)
        seen_w.add(w.id)
        if not (w.length > 0):
            bad("nonpositive-length", f"waveguide {w.id!r} length must be positive", w.id)
        if w.direction not in (1, -1):
            bad("bad-direction", f"waveguide {w.id!r} direction must be +1 or -1", w.id)

    seen_c: set[str] = set()
    for c in spec.cavities:
        if c.id in seen_c:
            bad("duplicate-id", f"duplicate cavity id {c.id!r}", c.id)
        seen_c.add(c.id)
        if not (c.tau_c > 0):
            bad("bad-lifetime", f"cavity {c.id!r} tau_c must be positive or infinite", c.id)
        if c.geometry is not None and not (c.geometry.index > 0 and c.geometry.radius > 0):
            bad("bad-geometry", f"cavity {c.id!r} geometry fields must be positive", c.id)
        if isinstance(c.tuning, PiecewiseLinear):
            ts = [k[0] for k in c.tuning.knots]
            if len(ts) < 1:
                bad("empty-schedule", f"cavity {c.id!r} schedule has no knots", c.id)
            elif any(t1 <= t0 for t0, t1 in zip(ts, ts[1:])):
                bad("knots-not-increasing",
                    f"cavity {c.id!r} schedule knot times must be strictly increasing", c.id)
        if isinstance(c.tuning, LinearRamp) and not (c.tuning.t_end > c.tuning.t_start):
            bad("bad-ramp-window", f"cavity {c.id!r} ramp needs t_end > t_start", c.id)

    # couplings: resolution, placement, and distinct cells after snapping
    occupied: dict[tuple[str, int], CouplingSpec] = {}
    for k in spec.couplings:
        w = spec.waveguide(k.waveguide_id)
        if w is None:
            bad("unresolved-waveguide-reference",
                f"coupling {k.label} references unknown waveguide {k.waveguide_id!r}", k.label)
        if spec.cavity(k.cavity_id) is None:
            bad("unresolved-cavity-reference",
                f"coupling {k.label} references unknown cavity {k.cavity_id!r}", k.label)
        if abs(k.strength) == 0:
            bad("zero-coupling", f"coupling {k.label} must have |V| > 0", k.label)
        if w is not None:
            if not w.contains(k.position):
                bad("coupling-position-outside-waveguide",
                    f"coupling {k.label} lies outside waveguide {w.id!r}", k.label)
            elif s.dx > 0 and w.length > 0:
                n = max(1, round(w.length / s.dx))
                cell = nearest_cell(k.position, w.x_min, s.dx, n)
                key = (w.id, cell)
                if key in occupied:
                    bad("coupling-cell-collision",
                        f"couplings {occupied[key].label} and {k.label} snap to the "
                        f"same cell {cell} of waveguide {w.id!r}", k.label)
                else:
                    occupied[key] = k

    for pulse in spec.pulses:
        w = spec.waveguide(pulse.waveguide_id)
        if w is None:
            bad("unresolved-waveguide-reference",
                f"pulse references unknown waveguide {pulse.waveguide_id!r}",
                pulse.waveguide_id)
            continue
        if not (pulse.sigma > 0):
            bad("nonpositive-sigma", "pulse sigma must be positive", pulse.waveguide_id)
            continue
        lo, hi = pulse.center - 5 * pulse.sigma, pulse.center + 5 * pulse.sigma
        if lo < w.x_min or hi > w.x_max:
            bad("packet-support-outside-waveguide",
                f"packet support [{lo:g}, {hi:g}] outside waveguide {w.id!r}",
                pulse.waveguide_id)
        if s.dx > 0:
            n = max(1, round(w.length / s.dx))
            for k in spec.couplings:
                if k.waveguide_id != w.id:
                    continue
                cell = nearest_cell(k.position, w.x_min, s.dx, n)
                cx = cell_center(cell, w.x_min, s.dx)
                if lo <= cx + 0.5 * s.dx and hi >= cx - 0.5 * s.dx:
                    bad("packet-overlaps-coupling",
                        f"packet support [{lo:g}, {hi:g}] overlaps coupling cell of "
                        f"{k.label}", pulse.waveguide_id)

    for pr in spec.probes:
        if isinstance(pr, WaveguidePoint):
            w = spec.waveguide(pr.waveguide_id)
            if w is None:
                bad("unresolved-waveguide-reference",
                    f"probe references unknown waveguide {pr.waveguide_id!r}",
                    pr.waveguide_id)
            elif not w.contains(pr.x):
                bad("probe-outside-waveguide",
                    f"probe at x={pr.x:g} outside waveguide {w.id!r}", pr.waveguide_id)
        else:
            if spec.cavity(pr.cavity_id) is None:
                bad("unresolved-cavity-reference",
                    f"probe references unknown cavity {pr.cavity_id!r}", pr.cavity_id)
        if pr.sample_stride < 1:
            bad("bad-stride", "probe sample_stride must be >= 1")

    return out
