"""f sweeps, results CSV, config documents and chunk logs."""
from __future__ import annotations

import csv
import dataclasses
import io
import json
import math
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from pte.chunklog import ChunkLogCursor, open_chunk_log, read_chunk_log, write_chunk_log
from pte.core.chunks import EnsembleConfig
from pte.errors import ConfigError, InvalidArgument, PTEError
from pte.predictor import PredictorConfig
from pte.sim import EpisodeResult, EpisodeTrace, FailureCause, PlantLimits, run_episode
from pte.world import ScenarioConfig

__all__ = [
    "ChunkLogCursor",
    "ResultRow",
    "SweepSpec",
    "apply_overrides",
    "load_spec",
    "open_chunk_log",
    "read_chunk_log",
    "read_results",
    "record_chunk_log",
    "reference_table",
    "summarize",
    "sweep_f",
    "write_results",
]

RESULTS_HEADER = ["f", "trials", "successes", "success_rate", "mean_elapsed_s", "median_elapsed_s"]

SECTIONS = {
    "scenario": ScenarioConfig,
    "ensemble": EnsembleConfig,
    "predictor": PredictorConfig,
    "plant": PlantLimits,
}


@dataclass(frozen=True)
class SweepSpec:
    f_values: tuple[int, ...] = (0, 5, 10, 15, 20)
    trials_per_f: int = 20
    base_seed: int = 0
    scenario: ScenarioConfig = ScenarioConfig()
    ensemble: EnsembleConfig = EnsembleConfig()
    predictor: PredictorConfig = PredictorConfig()
    plant: PlantLimits = PlantLimits()
    workers: int = 1

    def __post_init__(self):
        object.__setattr__(self, "f_values", tuple(int(f) for f in self.f_values))
        if self.trials_per_f < 1:
            raise InvalidArgument(f"trials_per_f must be >= 1, got {self.trials_per_f}")
        if self.workers < 1:
            raise InvalidArgument(f"workers must be >= 1, got {self.workers}")
        L = self.ensemble.chunk_len
        bad = [f for f in self.f_values if not 0 <= f <= L - 1]
        if bad:
            raise InvalidArgument(f"f values {bad} outside [0, {L - 1}]")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "SweepSpec":
        top = {f.name for f in dataclasses.fields(cls)}
        unknown = set(doc) - top
        if unknown:
            raise ConfigError(f"unknown config key(s): {', '.join(sorted(unknown))}")
        kwargs = {}
        for key, value in doc.items():
            if key in SECTIONS:
                section = SECTIONS[key]
                if not isinstance(value, dict):
                    raise ConfigError(f"config section {key!r} must be an object")
                names = {f.name for f in dataclasses.fields(section)}
                bad = set(value) - names
                if bad:
                    raise ConfigError(f"unknown config key(s): {', '.join(f'{key}.{b}' for b in sorted(bad))}")
                try:
                    kwargs[key] = section(**value)
                except (TypeError, PTEError) as exc:
                    raise ConfigError(f"invalid {key} config: {exc}") from exc
            else:
                kwargs[key] = value
        try:
            return cls(**kwargs)
        except (TypeError, PTEError) as exc:
            raise ConfigError(f"invalid config: {exc}") from exc


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(doc: dict, overrides: list[str]) -> dict:
    """Apply ``key=value`` overrides (dotted keys) to a config document.

    Keys must already exist in the full default document; values are parsed as
    JSON, falling back to a bare string.
    """
    known = SweepSpec().to_dict()
    out = json.loads(json.dumps(doc))
    for item in overrides:
        key, sep, raw = item.partition("=")
        if not sep or not key:
            raise ConfigError(f"override must look like KEY=VALUE, got {item!r}")
        path = key.split(".")
        ref = known
        for part in path:
            if not isinstance(ref, dict) or part not in ref:
                raise ConfigError(f"unknown config key {key!r}")
            ref = ref[part]
        if isinstance(ref, dict):
            raise ConfigError(f"{key!r} is a section; override one of its fields")
        node = out
        for part in path[:-1]:
            node = node.setdefault(part, {})
        node[path[-1]] = _parse_value(raw)
    return out


def load_spec(path=None, overrides: list[str] = ()) -> SweepSpec:
    """Built-in defaults < config file < overrides."""
    doc = {}
    if path is not None:
        path = Path(path)
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
        if not isinstance(doc, dict):
            raise ConfigError(f"{path}: config must be a JSON object")
    return SweepSpec.from_dict(apply_overrides(doc, list(overrides)))


def packaged_config(name: str) -> Path:
    ref = resources.files("pte") / "configs" / f"{name}.json"
    return Path(str(ref))


@dataclass
class ResultRow:
    f: int
    trials: int
    successes: int
    success_rate: float
    mean_elapsed_seconds: float
    median_elapsed_seconds: float
    trial_results: list[EpisodeResult] = field(default_factory=list, repr=False, compare=False)


def summarize(f: int, results: list[EpisodeResult]) -> ResultRow:
    """Mean elapsed over successful trials, median over all counted trials.

    Infrastructure failures are not counted as trials.
    """
    counted = [r for r in results if r.failure_cause is not FailureCause.INFRASTRUCTURE]
    ok = [r.elapsed_seconds for r in counted if r.success]
    n = len(counted)
    return ResultRow(
        f=f,
        trials=n,
        successes=len(ok),
        success_rate=len(ok) / n if n else math.nan,
        mean_elapsed_seconds=statistics.fmean(ok) if ok else math.nan,
        median_elapsed_seconds=statistics.median(r.elapsed_seconds for r in counted) if n else math.nan,
        trial_results=list(results),
    )


def _trial(args) -> EpisodeResult:
    seed, ens, pred, plant, scenario, record = args
    return run_episode(seed, ens, pred, plant, scenario, record_trace=record)


def sweep_f(spec: SweepSpec, record_traces: bool = False) -> list[ResultRow]:
    """Run ``trials_per_f`` episodes per f with seeds ``base_seed + i``, shared across f."""
    jobs = []
    for f in sorted(spec.f_values):
        ens = dataclasses.replace(spec.ensemble, f=f)
        for i in range(spec.trials_per_f):
            jobs.append((spec.base_seed + i, ens, spec.predictor, spec.plant, spec.scenario, record_traces))
    if spec.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=spec.workers) as pool:
            results = list(pool.map(_trial, jobs, chunksize=max(1, len(jobs) // (4 * spec.workers))))
    else:
        results = [_trial(j) for j in jobs]
    n = spec.trials_per_f
    return [summarize(f, results[k * n:(k + 1) * n]) for k, f in enumerate(sorted(spec.f_values))]


def _fmt(x: float) -> str:
    return "nan" if math.isnan(x) else f"{x:.6f}"


def results_csv(rows: list[ResultRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RESULTS_HEADER)
    for r in rows:
        w.writerow([r.f, r.trials, r.successes, _fmt(r.success_rate),
                    _fmt(r.mean_elapsed_seconds), _fmt(r.median_elapsed_seconds)])
    return buf.getvalue()


def write_results(rows: list[ResultRow], path) -> Path:
    path = Path(path)
    path.write_text(results_csv(rows), encoding="utf-8")
    return path


def read_results(path) -> list[ResultRow]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != RESULTS_HEADER:
            raise ConfigError(f"{path}: unexpected results header {header}")
        rows = []
        for lineno, rec in enumerate(reader, start=2):
            if len(rec) != len(RESULTS_HEADER):
                raise ConfigError(f"{path}:{lineno}: expected {len(RESULTS_HEADER)} fields, got {len(rec)}")
            try:
                rows.append(ResultRow(int(rec[0]), int(rec[1]), int(rec[2]),
                                      float(rec[3]), float(rec[4]), float(rec[5])))
            except ValueError as exc:
                raise ConfigError(f"{path}:{lineno}: {exc}") from exc
    return rows


def record_chunk_log(trace: EpisodeTrace | EpisodeResult, path) -> Path:
    if isinstance(trace, EpisodeResult):
        if trace.trace is None:
            raise InvalidArgument("episode was run without record_trace=True")
        trace = trace.trace
    return write_chunk_log(trace.chunks, path)


def reference_table() -> list[dict]:
    """Published real-robot reference rows (f, mean elapsed seconds, success rate)."""
    text = (resources.files("pte") / "data" / "reference_table1.csv").read_text(encoding="utf-8")
    lines = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
    return [
        {"f": int(r["f"]), "mean_elapsed_s": float(r["mean_elapsed_s"]), "success_rate": float(r["success_rate"])}
        for r in csv.DictReader(lines)
    ]
