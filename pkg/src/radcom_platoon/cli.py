"""Command-line experiment runner: penetration sweep, replications, gaps and fuel."""

from __future__ import annotations

import argparse
import logging
import math
import os
import shutil
import sys
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .config import ExperimentConfig, format_config, parse_config, with_scenario
from .engine import derive_seed
from .facilities import PCM_BYTES
from .fuel import Calibration, calibrate_multiplier, mixed_fuel_saving
from .metrics import NetStats
from .safety import GapReport, g5_paths, oracle_check, platoon_gaps, radcom_paths
from .scenario import ConfigError, build_world
from .sim import SimResult, Simulation

log = logging.getLogger("radcom_platoon")

DEFAULT_PENETRATIONS = (0.0, 0.5, 1.0)
# Target fuel savings (fraction, tolerance) used to calibrate the drag multiplier.
SAVING_TARGETS = {0.5: (0.02, 0.01), 1.0: (0.056, 0.015)}
MULTIPLIER_RANGE = (0.5, 2.0)


@dataclass(frozen=True)
class RunSpec:
    config_path: Path | None = None
    penetrations: tuple[float, ...] = DEFAULT_PENETRATIONS
    replications: int = 5
    seed: int | None = None
    out_dir: Path = Path("out")
    trace: bool = False

    def __post_init__(self) -> None:
        p = self.penetrations
        if not p:
            raise ConfigError("at least one penetration rate is needed")
        if any(not 0.0 <= x <= 1.0 for x in p):
            raise ConfigError("penetration rates must lie in [0, 1]")
        if any(b <= a for a, b in zip(p, p[1:])):
            raise ConfigError("penetration rates must be strictly increasing")
        if self.replications < 1:
            raise ConfigError("replications must be >= 1")


@dataclass
class PenetrationResult:
    penetration: float
    runs: list[SimResult]
    radcom_fraction: float  # share of platoons using the radar link
    stats: NetStats = field(init=False)

    def __post_init__(self) -> None:
        total = NetStats()
        for r in self.runs:
            total = total.merge(r.stats)
        self.stats = total

    def spread(self, attr: str) -> float:
        vals = [getattr(r.stats, attr) for r in self.runs]
        vals = [v for v in vals if v is not None]
        return float(np.std(vals, ddof=1)) if len(vals) > 1 else math.nan


@dataclass
class GapMix:
    """Expected gaps of a platoon that uses RadCom with probability ``weight``."""

    penetration: float
    g5: GapReport | None
    radcom: GapReport | None
    weight: float

    def _mix(self, attr: str) -> list[float]:
        parts = [(r, w) for r, w in ((self.radcom, self.weight), (self.g5, 1.0 - self.weight))
                 if w > 0]
        out = np.zeros(len(getattr(parts[0][0], attr)))
        for report, w in parts:
            out += w * np.asarray(getattr(report, attr))
        return out.tolist()

    @property
    def gaps(self) -> list[float]:
        return self._mix("gaps")

    @property
    def taus(self) -> list[float]:
        return self._mix("taus")

    def variants(self) -> tuple[list[tuple[float, ...]], list[float]]:
        pairs = [(r.gaps, w) for r, w in ((self.radcom, self.weight), (self.g5, 1.0 - self.weight))
                 if w > 0]
        return [g for g, _ in pairs], [w for _, w in pairs]


def run_replication(cfg: ExperimentConfig, penetration: float, seed: int,
                    trace_path: Path | None = None) -> tuple[SimResult, float]:
    ecfg = with_scenario(cfg, penetration_rate=penetration, seed=seed)
    world = build_world(ecfg.scenario)
    fh = open(trace_path, "w", encoding="utf-8", newline="\n") if trace_path else None
    try:
        sim = Simulation(world, ecfg.phy, ecfg.mac, ecfg.radcom, seed=seed,
                         record_range=cfg.record_range, pdr_distance=cfg.pdr_distance, trace=fh)
        result = sim.run()
    finally:
        if fh:
            fh.close()
    share = sum(p.radcom_enabled for p in world.platoons) / len(world.platoons)
    return result, share


def gap_mix(cfg: ExperimentConfig, res: PenetrationResult) -> GapMix:
    size = cfg.scenario.platoon_size
    period = cfg.scenario.pcm_period
    g5 = radcom = None
    if res.radcom_fraction < 1.0:
        pdr, lat = res.stats.pdr, res.stats.mean_latency
        if pdr is None or lat is None or pdr == 0:
            raise RuntimeError(f"no usable ITS-G5 PCM statistics at penetration {res.penetration}")
        g5 = platoon_gaps(cfg.braking, g5_paths(pdr, lat, size), period, res.penetration)
    if res.radcom_fraction > 0.0:
        paths = radcom_paths(cfg.radcom.per_hop_reliability, cfg.radcom.hop_delay(PCM_BYTES), size)
        radcom = platoon_gaps(cfg.braking, paths, period, res.penetration)
    return GapMix(res.penetration, g5, radcom, res.radcom_fraction)


def fuel_savings(cfg: ExperimentConfig, mixes: Sequence[GapMix], multiplier: float) -> dict[float, float]:
    """Saving of each penetration relative to the lowest one in the sweep."""
    curve = cfg.curve.scaled(multiplier)
    base = mixes[0].gaps
    v = cfg.braking.v0
    out = {}
    for mix in mixes:
        variants, weights = mix.variants()
        out[mix.penetration] = mixed_fuel_saving(base, variants, weights, v, cfg.aero, curve)
    return out


def resolve_multiplier(cfg: ExperimentConfig, mixes: Sequence[GapMix]) -> tuple[float, Calibration | None]:
    if cfg.drag_multiplier is not None:
        return cfg.drag_multiplier, None
    present = {p: t for p, t in SAVING_TARGETS.items() if any(m.penetration == p for m in mixes)}
    if not present or mixes[0].penetration != 0.0:
        return 1.0, None
    cal = calibrate_multiplier(lambda m: fuel_savings(cfg, mixes, m), present, *MULTIPLIER_RANGE)
    return cal.multiplier, cal


def _num(x: float | None, fmt: str = ".6f") -> str:
    return "nan" if x is None or math.isnan(x) else format(x, fmt)


def _summary_csv(results: Sequence[PenetrationResult]) -> str:
    lines = ["penetration,pdr_pcm,pdr_sd,scbr,scbr_sd,latency_ms,latency_sd"]
    for r in results:
        s = r.stats
        lat = None if s.mean_latency is None else s.mean_latency * 1e3
        lat_sd = r.spread("mean_latency") * 1e3
        lines.append(",".join([
            _num(r.penetration, "g"), _num(s.pdr), _num(r.spread("pdr")), _num(s.scbr_mean),
            _num(r.spread("scbr_mean")), _num(lat, ".4f"), _num(lat_sd, ".4f"),
        ]))
    return "\n".join(lines) + "\n"


def _timeseries_csv(results: Sequence[PenetrationResult]) -> str:
    lines = ["penetration,t_s,scbr"]
    for r in results:
        series = np.array([[v for _, v in run.scbr_series] for run in r.runs])
        times = [t for t, _ in r.runs[0].scbr_series]
        for t, v in zip(times, series.mean(axis=0)):
            lines.append(f"{r.penetration:g},{t:.1f},{v:.6f}")
    return "\n".join(lines) + "\n"


def _gaps_csv(mixes: Sequence[GapMix]) -> str:
    lines = ["penetration,pair_index,tau_s,gap_m"]
    for m in mixes:
        for i, (tau, gap) in enumerate(zip(m.taus, m.gaps), start=1):
            lines.append(f"{m.penetration:g},{i},{tau:.6f},{gap:.4f}")
    return "\n".join(lines) + "\n"


def _fuel_csv(mixes: Sequence[GapMix], savings: dict[float, float]) -> str:
    lines = ["penetration,mean_gap_m,saving_fraction"]
    for m in mixes:
        lines.append(f"{m.penetration:g},{np.mean(m.gaps):.4f},{savings[m.penetration]:.6f}")
    return "\n".join(lines) + "\n"


def _hash_csv(results: Sequence[PenetrationResult]) -> str:
    lines = ["penetration,replication,trace_sha256"]
    for r in results:
        lines.extend(f"{r.penetration:g},{i},{run.trace_hash}" for i, run in enumerate(r.runs))
    return "\n".join(lines) + "\n"


def _resolved_text(cfg: ExperimentConfig, spec: RunSpec, master: int, multiplier: float,
                   cal: Calibration | None) -> str:
    head = [
        "# resolved configuration",
        f"# penetrations = {','.join(f'{p:g}' for p in spec.penetrations)}",
        f"# replications = {spec.replications}",
        f"# master_seed = {master}",
    ]
    if cal is not None:
        status = "met" if cal.feasible else "NOT met"
        head.append(f"# drag multiplier calibrated in [{MULTIPLIER_RANGE[0]}, {MULTIPLIER_RANGE[1]}]: "
                    f"targets {status}")
        for p, (target, tol) in sorted(cal.targets.items()):
            head.append(f"#   penetration {p:g}: saving {cal.savings[p]:.4f} "
                        f"(target {target:.3f} +/- {tol:.3f}, band miss {cal.misses()[p]:+.4f})")
    body = format_config(cfg, overrides={"drag_multiplier": multiplier, "seed": master})
    return "\n".join(head) + "\n" + body


def _write(path: Path, text: str) -> None:
    """Temp file plus rename so readers never see a partial file."""
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def run_experiment(spec: RunSpec, cfg: ExperimentConfig | None = None) -> int:
    """Run the sweep and write every output; returns the process exit code."""
    if cfg is None:
        text = spec.config_path.read_text(encoding="utf-8") if spec.config_path else ""
        try:
            cfg = parse_config(text)
        except ConfigError as exc:
            log.error("config error: %s", exc)
            return 2
    master = cfg.scenario.seed if spec.seed is None else spec.seed
    out = spec.out_dir
    out.mkdir(parents=True, exist_ok=True)
    stage = Path(tempfile.mkdtemp(dir=out, prefix=".partial-"))
    try:
        results = []
        for p in spec.penetrations:
            runs, share = [], 0.0
            for rep in range(spec.replications):
                seed = derive_seed(master, rep)
                trace = stage / f"trace_p{p:g}_r{rep}.tsv" if spec.trace else None
                t0 = time.perf_counter()
                res, share = run_replication(cfg, p, seed, trace)
                s = res.stats
                log.info("penetration %g rep %d: pdr=%s scbr=%s latency=%s ms (%.0f s)", p, rep,
                         _num(s.pdr, ".4f"), _num(s.scbr_mean, ".4f"),
                         _num(None if s.mean_latency is None else s.mean_latency * 1e3, ".2f"),
                         time.perf_counter() - t0)
                runs.append(res)
            results.append(PenetrationResult(p, runs, share))
        mixes = [gap_mix(cfg, r) for r in results]
        multiplier, cal = resolve_multiplier(cfg, mixes)
        savings = fuel_savings(cfg, mixes, multiplier)
        files = {
            "summary.csv": _summary_csv(results),
            "scbr_timeseries.csv": _timeseries_csv(results),
            "gaps.csv": _gaps_csv(mixes),
            "fuel.csv": _fuel_csv(mixes, savings),
            "trace_hashes.csv": _hash_csv(results),
            "resolved_config.txt": _resolved_text(cfg, spec, master, multiplier, cal),
        }
        for name, text in files.items():
            _write(stage / name, text)
        for path in sorted(stage.iterdir()):
            os.replace(path, out / path.name)
    except Exception:
        log.exception("run failed; partial outputs removed")
        return 1
    finally:
        shutil.rmtree(stage, ignore_errors=True)
    return 0


def _penetrations(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="radcom-platoon",
        description="Simulate PCM offloading from ITS-G5 to RadCom and derive safe gaps and fuel savings.",
    )
    ap.add_argument("--config", type=Path, help="key = value configuration file")
    ap.add_argument("--out", type=Path, default=Path("out"), help="output directory (default: out)")
    ap.add_argument("--seed", type=int, help="master seed (overrides the config file)")
    ap.add_argument("--penetrations", type=_penetrations, default=DEFAULT_PENETRATIONS,
                    help="comma-separated RadCom penetration rates (default: 0,0.5,1)")
    ap.add_argument("--replications", type=int, default=5)
    ap.add_argument("--trace", action="store_true", help="dump every event of every run")
    ap.add_argument("--oracle-check", action="store_true",
                    help="validate the closed-form safe gap against the braking oracle and exit")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(asctime)s %(levelname)s %(message)s", stream=sys.stderr)
    if args.oracle_check:
        t0 = time.perf_counter()
        err = oracle_check()
        ok = err <= 1e-3
        print(f"oracle check: max |closed form - oracle| = {err:.3e} m over 10000 points "
              f"in {time.perf_counter() - t0:.1f} s: {'PASS' if ok else 'FAIL'}")
        return 0 if ok else 1
    try:
        spec = RunSpec(args.config, args.penetrations, args.replications, args.seed, args.out, args.trace)
        if args.config is not None and not args.config.is_file():
            raise ConfigError(f"config file not found: {args.config}")
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return 2
    return run_experiment(spec)


if __name__ == "__main__":
    sys.exit(main())
