"""Scenario configuration, synthetic household load and the case runner.

Config files are flat ``key=value`` lines with dotted section prefixes::

    # 200 homes, evening arrival, departure next morning
    fleet.n_users=200
    fleet.power_kw=3
    arrival.family=gaussian
    arrival.mu=19
    arrival.variance=10
    charging.family=uniform
    charging.c=1
    charging.d=11

See ``CONFIG_KEYS`` for every accepted key and its default.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np

from . import analytic, dr
from .analytic import ChargerModel
from .core import DemandProfile, TimeGrid, energy, par, profile_to_csv, total, fmt_number
from .distributions import (
    Distribution, Exponential, Gaussian, Rician, TruncatedGaussian, Uniform,
    family_of, match_moments, stream,
)
from .errors import ConfigError, EvloadError
from .montecarlo import FleetSpec, empirical_expected_profile, sample_fleet

ALL_CASES = ("no_ev", "uncoordinated", "dr", "dr_v2g", "analytic_comparison")
DEFAULT_CASES = ("no_ev", "uncoordinated", "dr", "dr_v2g")
BASELINE_STREAM = 2
DIST_SECTIONS = ("arrival", "charging", "departure")

_DIST_PARAMS = {
    "gaussian": {"mu", "sigma", "variance"},
    "uniform": {"c", "d"},
    "exponential": {"lambda", "mean"},
    "truncated_gaussian": {"mu", "sigma"},
    "rician": {"nu", "sigma"},
}
_MATCH_KEYS = {"match_mean", "match_variance"}


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def parse_cases(s: str) -> tuple[str, ...]:
    items = tuple(x.strip() for x in s.split(",") if x.strip())
    bad = [x for x in items if x not in ALL_CASES]
    if bad or not items:
        raise ValueError(f"cases must be a comma list drawn from {ALL_CASES}")
    return items


# key -> (parser, default); None default means "derived" or "required"
CONFIG_KEYS: dict[str, tuple[Callable[[str], object], object]] = {
    "grid.horizon_hours": (float, 24.0),
    "grid.resolution_hours": (float, 1.0),
    "grid.analytic_resolution_hours": (float, 0.1),
    "fleet.n_users": (int, None),
    "fleet.seed": (int, 0),
    "fleet.power_kw": (float, 1.0),
    "fleet.p_max_kw": (float, None),
    "baseline.base_kw": (float, 0.5),
    "baseline.morning_peak_kw": (float, 1.0),
    "baseline.morning_center": (float, 8.0),
    "baseline.morning_width": (float, 1.5),
    "baseline.evening_peak_kw": (float, 2.5),
    "baseline.evening_center": (float, 20.0),
    "baseline.evening_width": (float, 2.0),
    "baseline.jitter": (float, 0.1),
    "baseline.seed": (int, None),
    "dr.max_iterations": (int, 50),
    "dr.convergence_eps_kw": (float, None),
    "dr.scheme": (str, "gauss_seidel"),
    "montecarlo.samples": (int, 0),
    "analytic.match_mean": (float, 6.0),
    "analytic.match_variance": (float, 25.0 / 3.0),
    "output.dir": (str, "out"),
    "output.per_user": (_bool, False),
    "output.emit_extended": (_bool, False),
    "run.cases": (parse_cases, DEFAULT_CASES),
}

# departure 7:30 next morning, one hour spread
DEFAULT_DEPARTURE = Gaussian(31.5, 1.0)


@dataclass(frozen=True)
class BaselineTemplate:
    """Inflexible household load: a floor plus morning and evening bumps."""

    base_kw: float = 0.5
    morning_peak_kw: float = 1.0
    morning_center: float = 8.0
    morning_width: float = 1.5
    evening_peak_kw: float = 2.5
    evening_center: float = 20.0
    evening_width: float = 2.0
    jitter: float = 0.1
    seed: int = 1

    def __post_init__(self):
        for name in ("base_kw", "morning_peak_kw", "evening_peak_kw"):
            if not getattr(self, name) >= 0:
                raise ConfigError(f"baseline.{name} must be >= 0, got {getattr(self, name)}")
        for name in ("morning_width", "evening_width"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"baseline.{name} must be > 0, got {getattr(self, name)}")
        if not 0 <= self.jitter <= 0.5:
            raise ConfigError(f"baseline.jitter must lie in [0, 0.5], got {self.jitter}")

    def shape(self, grid: TimeGrid) -> np.ndarray:
        t = grid.midpoints
        h = grid.horizon_hours

        def bump(center, width):
            d = np.abs(t - center) % h
            d = np.minimum(d, h - d)
            return np.exp(-0.5 * (d / width) ** 2)

        return (
            self.base_kw
            + self.morning_peak_kw * bump(self.morning_center, self.morning_width)
            + self.evening_peak_kw * bump(self.evening_center, self.evening_width)
        )


def synth_baseline(template: BaselineTemplate, n_users: int, grid: TimeGrid) -> list[DemandProfile]:
    """Per-user inflexible profiles; each is the template scaled by ``1 + jitter * U(-1, 1)``."""
    shape = template.shape(grid)
    out = []
    for n in range(n_users):
        if template.jitter:
            u = stream(template.seed, BASELINE_STREAM, n).uniform(-1.0, 1.0)
            out.append(DemandProfile(grid, shape * (1.0 + template.jitter * u)))
        else:
            out.append(DemandProfile(grid, shape))
    return out


@dataclass(frozen=True)
class ScenarioConfig:
    grid: TimeGrid
    analytic_grid: TimeGrid
    fleet: FleetSpec
    baseline: BaselineTemplate
    dr: dr.DrConfig
    samples: int = 0
    match_mean: float = 6.0
    match_variance: float = 25.0 / 3.0
    out_dir: Path = Path("out")
    per_user: bool = False
    emit_extended: bool = False
    cases: tuple[str, ...] = DEFAULT_CASES
    source: dict[str, str] = field(default_factory=dict, compare=False)

    def with_overrides(self, seed=None, out_dir=None, samples=None) -> ScenarioConfig:
        cfg = self
        if seed is not None:
            cfg = replace(cfg, fleet=replace(cfg.fleet, seed=int(seed)))
        if out_dir is not None:
            cfg = replace(cfg, out_dir=Path(out_dir))
        if samples is not None:
            if samples < 0:
                raise ConfigError(f"--samples must be >= 0, got {samples}")
            cfg = replace(cfg, samples=int(samples))
        return cfg

    def describe(self) -> list[tuple[str, object]]:
        """Resolved settings as ``(key, value)`` pairs, moment matches expanded."""
        f = self.fleet
        rows: list[tuple[str, object]] = [
            ("grid.horizon_hours", self.grid.horizon_hours),
            ("grid.resolution_hours", self.grid.resolution_hours),
            ("grid.analytic_resolution_hours", self.analytic_grid.resolution_hours),
            ("fleet.n_users", f.n_users),
            ("fleet.seed", f.seed),
            ("fleet.power_kw", f.charger.power_kw),
            ("fleet.p_max_kw", f.p_max),
        ]
        for name, d in (("arrival", f.charger.arrival), ("charging", f.charger.charging_time),
                        ("departure", f.departure)):
            rows.append((f"{name}.family", d.family))
            rows += [(f"{name}.{k}", v) for k, v in d.params().items()]
            m, v = d.moments()
            rows += [(f"{name}.mean", m), (f"{name}.variance", v)]
        b = self.baseline
        rows += [(f"baseline.{k}", getattr(b, k)) for k in b.__dataclass_fields__]
        rows += [
            ("dr.max_iterations", self.dr.max_iterations),
            ("dr.convergence_eps_kw", self.dr.convergence_eps_kw or "auto"),
            ("dr.scheme", self.dr.scheme),
            ("montecarlo.samples", self.samples),
            ("analytic.match_mean", self.match_mean),
            ("analytic.match_variance", self.match_variance),
            ("output.dir", str(self.out_dir)),
            ("run.cases", ",".join(self.cases)),
        ]
        return rows


def parse_config_text(text: str) -> dict[str, str]:
    raw: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        if key in raw:
            raise ConfigError(f"line {lineno}: duplicate key {key}")
        raw[key] = value
    return raw


def _dist_from(section: str, raw: dict[str, str]) -> Distribution | None:
    keys = {k.split(".", 1)[1]: v for k, v in raw.items() if k.startswith(section + ".")}
    if not keys:
        return None
    if "family" not in keys:
        raise ConfigError(f"{section}.family is required")
    try:
        fam = family_of(keys.pop("family")).family
    except ConfigError as e:
        raise ConfigError(f"{section}.family: {e}") from None
    allowed = _DIST_PARAMS[fam] | _MATCH_KEYS
    for k in keys:
        if k not in allowed:
            raise ConfigError(f"unknown key {section}.{k} for family {fam}")
    try:
        vals = {k: float(v) for k, v in keys.items()}
    except ValueError as e:
        raise ConfigError(f"{section}: non-numeric parameter ({e})") from None
    match = _MATCH_KEYS & vals.keys()
    if match:
        if set(vals) - _MATCH_KEYS:
            raise ConfigError(f"{section}: give either parameters or match_mean/match_variance, not both")
        if "match_mean" not in vals:
            raise ConfigError(f"{section}.match_mean is required for moment matching")
        try:
            return match_moments(fam, vals["match_mean"], vals.get("match_variance"))
        except EvloadError as e:
            raise ConfigError(f"{section}.match_*: {e}") from None

    def need(k):
        if k not in vals:
            raise ConfigError(f"{section}.{k} is required for family {fam}")
        return vals[k]

    def check_sigma():
        s = vals.get("sigma")
        if s is not None and not s > 0:
            raise ConfigError(f"{section}.sigma must be > 0, got {s}")

    try:
        if fam == "gaussian":
            check_sigma()
            if "variance" in vals:
                if "sigma" in vals:
                    raise ConfigError(f"{section}: give sigma or variance, not both")
                if not vals["variance"] > 0:
                    raise ConfigError(f"{section}.variance must be > 0, got {vals['variance']}")
                return Gaussian(need("mu"), math.sqrt(vals["variance"]))
            return Gaussian(need("mu"), need("sigma"))
        if fam == "uniform":
            return Uniform(need("c"), need("d"))
        if fam == "exponential":
            if "mean" in vals:
                if not vals["mean"] > 0:
                    raise ConfigError(f"{section}.mean must be > 0, got {vals['mean']}")
                return Exponential(1.0 / vals["mean"])
            return Exponential(need("lambda"))
        if fam == "truncated_gaussian":
            check_sigma()
            return TruncatedGaussian(need("mu"), need("sigma"))
        check_sigma()
        if vals.get("nu", 0.0) < 0:
            raise ConfigError(f"{section}.nu must be >= 0, got {vals['nu']}")
        return Rician(need("nu"), need("sigma"))
    except ConfigError as e:
        msg = str(e)
        raise ConfigError(msg if msg.startswith(section) else f"{section}: {msg}") from None


def config_from_mapping(raw: dict[str, str]) -> ScenarioConfig:
    for k in raw:
        if k not in CONFIG_KEYS and k.split(".", 1)[0] not in DIST_SECTIONS:
            raise ConfigError(f"unknown key {k}")
    vals: dict[str, object] = {}
    for k, (parse, default) in CONFIG_KEYS.items():
        if k in raw:
            try:
                vals[k] = parse(raw[k])
            except ValueError as e:
                raise ConfigError(f"{k}: cannot parse {raw[k]!r} ({e})") from None
        else:
            vals[k] = default

    if vals["fleet.n_users"] is None:
        raise ConfigError("fleet.n_users is required")
    if vals["fleet.n_users"] < 1:
        raise ConfigError(f"fleet.n_users must be >= 1, got {vals['fleet.n_users']}")
    if vals["montecarlo.samples"] < 0:
        raise ConfigError(f"montecarlo.samples must be >= 0, got {vals['montecarlo.samples']}")

    def grid_for(key):
        try:
            return TimeGrid(vals["grid.horizon_hours"], vals[key], circular=True)
        except ConfigError as e:
            raise ConfigError(f"{key}: {e}") from None

    grid = grid_for("grid.resolution_hours")
    analytic_grid = grid_for("grid.analytic_resolution_hours")

    arrival = _dist_from("arrival", raw)
    charging = _dist_from("charging", raw)
    departure = _dist_from("departure", raw) or DEFAULT_DEPARTURE
    if arrival is None:
        raise ConfigError("arrival.family is required")
    if charging is None:
        raise ConfigError("charging.family is required")
    if charging.family == "gaussian":
        raise ConfigError("charging.family must have nonnegative support (use truncated_gaussian)")

    def build(key, fn):
        try:
            return fn()
        except ConfigError as e:
            msg = str(e)
            raise ConfigError(msg if key in msg else f"{key}: {msg}") from None

    charger = build("fleet.power_kw", lambda: ChargerModel(vals["fleet.power_kw"], arrival, charging))
    fleet = build("fleet.p_max_kw", lambda: FleetSpec(
        vals["fleet.n_users"], charger, departure, vals["fleet.seed"], vals["fleet.p_max_kw"]
    ))
    bseed = vals["baseline.seed"]
    baseline = build("baseline", lambda: BaselineTemplate(
        base_kw=vals["baseline.base_kw"],
        morning_peak_kw=vals["baseline.morning_peak_kw"],
        morning_center=vals["baseline.morning_center"],
        morning_width=vals["baseline.morning_width"],
        evening_peak_kw=vals["baseline.evening_peak_kw"],
        evening_center=vals["baseline.evening_center"],
        evening_width=vals["baseline.evening_width"],
        jitter=vals["baseline.jitter"],
        seed=vals["fleet.seed"] + 1 if bseed is None else bseed,
    ))
    drc = build("dr", lambda: dr.DrConfig(
        max_iterations=vals["dr.max_iterations"],
        convergence_eps_kw=vals["dr.convergence_eps_kw"],
        scheme=vals["dr.scheme"],
    ))
    if not vals["analytic.match_mean"] > 0:
        raise ConfigError("analytic.match_mean must be > 0")
    if not vals["analytic.match_variance"] > 0:
        raise ConfigError("analytic.match_variance must be > 0")
    return ScenarioConfig(
        grid=grid,
        analytic_grid=analytic_grid,
        fleet=fleet,
        baseline=baseline,
        dr=drc,
        samples=vals["montecarlo.samples"],
        match_mean=vals["analytic.match_mean"],
        match_variance=vals["analytic.match_variance"],
        out_dir=Path(vals["output.dir"]),
        per_user=vals["output.per_user"],
        emit_extended=vals["output.emit_extended"],
        cases=vals["run.cases"],
        source=dict(raw),
    )


def load_config(path: str | Path) -> ScenarioConfig:
    """Read and validate a scenario file; relative ``output.dir`` resolves against the CWD."""
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config {p}: {e.strerror}") from None
    return config_from_mapping(parse_config_text(text))


def default_scenario(n_users: int = 200, seed: int = 2024) -> ScenarioConfig:
    """The bundled desk-scale scenario (``scenarios/default.cfg``) as an object."""
    return config_from_mapping({
        "fleet.n_users": str(n_users),
        "fleet.seed": str(seed),
        "fleet.power_kw": "3",
        "arrival.family": "gaussian",
        "arrival.mu": "19",
        "arrival.variance": "10",
        "charging.family": "uniform",
        "charging.c": "1",
        "charging.d": "11",
        "departure.family": "gaussian",
        "departure.mu": "31.5",
        "departure.sigma": "1",
    })


# -- running -----------------------------------------------------------------

@dataclass
class RunReport:
    """What a run produced: summary entries in write order and the files written."""

    summary: dict[str, object] = field(default_factory=dict)
    files: list[Path] = field(default_factory=list)
    aggregates: dict[str, DemandProfile] = field(default_factory=dict)
    outcomes: dict[str, dr.DrOutcome] = field(default_factory=dict)
    sessions: list = field(default_factory=list)
    baselines: list[DemandProfile] = field(default_factory=list)
    ev_uncoordinated: list[DemandProfile] = field(default_factory=list)
    curves: dict[str, DemandProfile] = field(default_factory=dict)


def _value(v: object) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return fmt_number(float(v))
    return str(v)


def write_summary(summary: dict[str, object], path: Path) -> None:
    path.write_text("".join(f"{k}={_value(v)}\n" for k, v in summary.items()))


def comparison_models(cfg: ScenarioConfig) -> dict[str, ChargerModel]:
    """Charging-time families matched to the configured mean/variance (exponential: mean only)."""
    a = cfg.fleet.charger.power_kw
    arrival = cfg.fleet.charger.arrival
    out = {}
    for fam in ("uniform", "exponential", "truncated_gaussian", "rician"):
        out[fam] = ChargerModel(a, arrival, match_moments(fam, cfg.match_mean, cfg.match_variance))
    return out


def _schedules_csv(schedules: list[DemandProfile], grid: TimeGrid, path: Path) -> None:
    width = max(4, len(str(len(schedules) - 1)))
    head = "time_hours," + ",".join(f"user_{i:0{width}d}" for i in range(len(schedules)))
    lines = [head]
    for k, t in enumerate(grid.starts):
        lines.append(",".join([fmt_number(t)] + [fmt_number(s.values[k]) for s in schedules]))
    path.write_text("\n".join(lines) + "\n")


def write_expected(cfg: ScenarioConfig, report: RunReport, emit_extended: bool = False) -> None:
    """Analytic curves (configured model and the four matched families)."""
    out, g = cfg.out_dir, cfg.analytic_grid
    model = cfg.fleet.charger
    ext = analytic.expected_profile_extended(model, g)
    prof = analytic.wrap_mod24(ext, g)
    report.curves["model"] = prof
    path = out / "expected.csv"
    profile_to_csv(prof, path)
    report.files.append(path)
    if emit_extended:
        path = out / "expected_extended.csv"
        rows = ["time_hours,value_kw"]
        t0 = ext.first_slot * ext.resolution_hours
        rows += [f"{fmt_number(t0 + j * ext.resolution_hours)},{fmt_number(v)}" for j, v in enumerate(ext.values)]
        path.write_text("\n".join(rows) + "\n")
        report.files.append(path)
    pk = analytic.peak_time(model, g)
    s = report.summary
    s["expected.energy_kwh"] = energy(prof)
    s["expected.unwrapped_energy_kwh"] = ext.energy
    s["expected.peak_kw"] = prof.peak
    s["expected.t_max_hours"] = pk.t_max
    s["expected.stationarity_residual"] = pk.residual
    s["expected.stationarity_ok"] = pk.satisfied

    for fam, m in comparison_models(cfg).items():
        curve = analytic.expected_profile(m, g)
        report.curves[fam] = curve
        path = out / f"expected_{fam}.csv"
        profile_to_csv(curve, path)
        report.files.append(path)
        for k, v in m.charging_time.params().items():
            s[f"compare.{fam}.{k}"] = v
        s[f"compare.{fam}.peak_kw"] = curve.peak
    fams = ("uniform", "truncated_gaussian", "rician")
    c = report.curves
    s["compare.max_dev_matched_kw"] = max(
        float(np.max(np.abs(c[x].values - c[y].values))) for i, x in enumerate(fams) for y in fams[i + 1:]
    )
    s["compare.min_dev_to_exponential_kw"] = min(
        float(np.max(np.abs(c[x].values - c["exponential"].values))) for x in fams
    )

    if cfg.samples > 0:
        emp, se = empirical_expected_profile(cfg.fleet, cfg.samples, g)
        path = out / "empirical.csv"
        profile_to_csv(emp, path, stderr=se)
        report.files.append(path)
        s["empirical.samples"] = cfg.samples
        z = np.abs(emp.values - prof.values) / np.where(se > 0, se, np.inf)
        s["empirical.frac_within_4se"] = float(np.mean(z < 4))


def run_cases(cfg: ScenarioConfig, cases: tuple[str, ...] | None = None) -> RunReport:
    """Run the requested cases on one shared fleet and baseline, writing CSVs and ``summary.txt``."""
    cases = cfg.cases if cases is None else cases
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    report = RunReport()
    s = report.summary
    s["status"] = "running"
    s["cases"] = ",".join(cases)
    try:
        _run(cfg, cases, report)
    except Exception as e:
        s["status"] = "failed"
        s["error"] = f"{type(e).__name__}: {e}".replace("\n", " ")
        write_summary(s, out / "summary.txt")
        raise
    s["status"] = "ok"
    # status first so a reader can tell a finished file from a partial one
    write_summary(s, out / "summary.txt")
    report.files.append(out / "summary.txt")
    return report


def _record(s: dict, name: str, prof: DemandProfile) -> None:
    s[f"{name}.peak_kw"] = prof.peak
    s[f"{name}.par"] = par(prof)
    s[f"{name}.energy_kwh"] = energy(prof)


def _run(cfg: ScenarioConfig, cases: tuple[str, ...], report: RunReport) -> None:
    out, grid, s = cfg.out_dir, cfg.grid, report.summary
    fleet = cfg.fleet
    power = fleet.charger.power_kw
    needs_fleet = any(c in cases for c in ("uncoordinated", "dr", "dr_v2g"))
    baselines = synth_baseline(cfg.baseline, fleet.n_users, grid)
    base_total = total(baselines, grid)
    report.baselines = baselines

    def emit(name, prof):
        report.aggregates[name] = prof
        path = out / f"{name}.csv"
        profile_to_csv(prof, path)
        report.files.append(path)
        _record(s, name, prof)

    if needs_fleet:
        sessions = sample_fleet(fleet)
        report.sessions = sessions
        ev = [dr.uncoordinated_schedule(x, power, grid) for x in sessions]
        report.ev_uncoordinated = ev
        s["fleet.n_users"] = fleet.n_users
        s["fleet.total_ev_energy_kwh"] = sum(x.energy_kwh for x in sessions)
        durations = np.array([x.duration for x in sessions])
        s["fleet.duration_mean_hours"] = float(durations.mean())
        s["fleet.duration_variance"] = float(durations.var(ddof=1)) if len(durations) > 1 else 0.0
        s["baseline.valley_capacity_kwh"] = dr.valley_capacity(base_total, sessions, grid)

    if "no_ev" in cases:
        emit("no_ev", base_total)
    if "uncoordinated" in cases:
        emit("uncoordinated", base_total + total(ev, grid))
    for case, v2g in (("dr", False), ("dr_v2g", True)):
        if case not in cases:
            continue
        outcome = dr.run_dr(sessions, baselines, power, replace(cfg.dr, v2g_enabled=v2g), grid)
        report.outcomes[case] = outcome
        emit(case, outcome.aggregate)
        s[f"{case}.iterations"] = outcome.iterations_used
        s[f"{case}.converged"] = outcome.converged
        s[f"{case}.par_before"] = outcome.par_before
        s[f"{case}.peak_before_kw"] = outcome.peak_before_kw
        if cfg.per_user:
            path = out / f"{case}_schedules.csv"
            _schedules_csv(outcome.schedules, grid, path)
            report.files.append(path)
    if "analytic_comparison" in cases:
        write_expected(cfg, report, emit_extended=cfg.emit_extended)
