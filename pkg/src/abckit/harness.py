"""Experiment configuration, deterministic execution, and on-disk outputs.

An experiment is described by a plain TOML or JSON document (one table of
scalar fields plus flat parameter tables), loaded into
:class:`ExperimentConfig`.  :func:`run_experiment` resolves the model, summary
and engine, drives the run off a single labeled seed stream, and writes CSV
outputs plus a ``record.json`` describing what happened — including on
failure, so a crashed run still leaves a machine-readable trace.

Reproducibility contract: every random stream is derived from the config seed
through labeled :func:`~abckit.seeding.seed_stream` /
:func:`~abckit.seeding.child_stream` children, and all multi-threaded stages
aggregate in a fixed order, so outputs are byte-identical for any thread
count.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import json
import math
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

try:
    import tomllib as tomli
except ModuleNotFoundError:  # Python < 3.11
    import tomli

from .baselines import IndirectConfig, indirect_inference, synthetic_likelihood_mcmc
from .engines import (
    AbcProblem,
    McmcConfig,
    abc_importance,
    abc_mcmc,
    make_noisy,
)
from .experiments import (
    LossMethod,
    _tuned_bandwidth,
    loss_table,
    semiauto_method,
    standard_abc_method,
)
from .kernels import (
    GAUSSIAN,
    UNIFORM_ELLIPSOID,
    DensityKernel,
    WeightedSample,
)
from .models import Dataset, get_model
from .models.base import TruncatedPrior as _TruncatedPrior
from .models.summaries import (
    default_summary,
    full_order_stats,
    identity_stats,
    mg1_aux_stats,
    mg1_quantiles,
    order_stat_subset,
    ricker_stats_basic,
    ricker_stats_extended,
    ricker_stats_full,
    sample_mean_stat,
    second_moment_stat,
    tb_pair,
)
from .seeding import child_stream, rng_fingerprint, seed_stream
from .semiauto import SemiAutoConfig, TrainingRegion, semiauto_run
from .sequential import (
    LinearGaussianSequential,
    LvSequential,
    NormalVarianceSequential,
    SequentialConfig,
    bias_experiment,
    seq_abc,
)

__all__ = [
    "ExperimentConfig",
    "ExperimentRecord",
    "PRESETS",
    "build_summary",
    "get_sequential",
    "list_presets",
    "load_config",
    "load_record",
    "preset_config",
    "resolve_threads",
    "run_config",
    "run_experiment",
    "save_config",
    "write_csv",
]

THREADS_ENV_VAR = "ABC_THREADS"
MAX_SEED = 2**64


# ---------------------------------------------------------------------------
# configuration document
# ---------------------------------------------------------------------------

def _normalized_params(value, label: str) -> dict:
    """Validate a flat parameter table: string keys, scalar or flat-list values."""
    if not isinstance(value, dict):
        raise TypeError(f"{label} must be a table of values, got {type(value).__name__}")
    out = {}
    for key, item in value.items():
        if not isinstance(key, str) or not key:
            raise TypeError(f"{label} keys must be nonempty strings")
        out[key] = _normalized_value(item, f"{label}.{key}")
    return out


def _normalized_value(item, label: str):
    if isinstance(item, bool) or isinstance(item, (int, float, str)):
        return item
    if isinstance(item, (list, tuple)):
        return [_normalized_value(v, label) for v in item]
    raise TypeError(
        f"{label} must be a string, boolean, number, or list of those, "
        f"got {type(item).__name__}"
    )


@dataclass
class ExperimentConfig:
    """One experiment: model, summary, engine, budget, seed, output directory.

    Every field uses a TOML-representable type; empty strings and empty lists
    stand in for unset optional fields, so a config round-trips losslessly
    through both TOML and JSON.  ``budget`` counts simulated datasets across
    all stages of the run.  Exactly one of ``observed`` (inline values),
    ``observed_csv`` (a numeric CSV file), or ``truth`` (a parameter value to
    simulate the observed dataset at) supplies the data for single-dataset
    engines; table presets simulate their own replication datasets and ignore
    all three.
    """

    seed: int = 0
    out_dir: str = "abc-run"
    preset: str = ""
    engine: str = "rejection"
    model: str = ""
    model_params: dict = field(default_factory=dict)
    summary: str = "default"
    summary_params: dict = field(default_factory=dict)
    engine_params: dict = field(default_factory=dict)
    budget: int = 1000
    threads: int = 0
    observed: list = field(default_factory=list)
    observed_csv: str = ""
    truth: list = field(default_factory=list)

    def __post_init__(self):
        if isinstance(self.seed, bool) or not isinstance(self.seed, int):
            raise TypeError("seed must be an integer")
        if not 0 <= self.seed < MAX_SEED:
            raise ValueError("seed must fit in an unsigned 64-bit integer")
        if isinstance(self.budget, bool) or not isinstance(self.budget, int):
            raise TypeError("budget must be an integer")
        if self.budget < 1:
            raise ValueError("budget must be at least 1")
        if isinstance(self.threads, bool) or not isinstance(self.threads, int):
            raise TypeError("threads must be an integer")
        if self.threads < 0:
            raise ValueError("threads must be nonnegative (0 means unset)")
        for name in ("out_dir", "preset", "engine", "model", "summary", "observed_csv"):
            if not isinstance(getattr(self, name), str):
                raise TypeError(f"{name} must be a string")
        self.model_params = _normalized_params(self.model_params, "model_params")
        self.summary_params = _normalized_params(self.summary_params, "summary_params")
        self.engine_params = _normalized_params(self.engine_params, "engine_params")
        self.observed = _normalized_value(list(self.observed), "observed")
        self.truth = [float(v) for v in self.truth]

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise TypeError("configuration document must be a table at the top level")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ValueError(
                "unknown configuration key(s): " + ", ".join(unknown)
                + "; known keys: " + ", ".join(sorted(known))
            )
        return cls(**data)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def config_hash(self) -> str:
        """SHA-256 over the canonical JSON form; stable across TOML/JSON."""
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode("utf-8")).hexdigest()

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def to_toml(self) -> str:
        lines = []
        tables = []
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if isinstance(value, dict):
                tables.append((f.name, value))
            else:
                lines.append(f"{f.name} = {_toml_value(value)}")
        for name, table in tables:
            lines.append("")
            lines.append(f"[{name}]")
            for key, item in table.items():
                lines.append(f"{_toml_key(key)} = {_toml_value(item)}")
        return "\n".join(lines) + "\n"


def _toml_key(key: str) -> str:
    if key and all(c.isalnum() or c in "-_" for c in key):
        return key
    return json.dumps(key)


def _toml_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        text = repr(value)
        if "." not in text and "e" not in text and "E" not in text:
            text += ".0"
        return text
    if isinstance(value, str):
        return json.dumps(value)
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_toml_value(v) for v in value) + "]"
    raise TypeError(f"cannot express {type(value).__name__} value in TOML")


def save_config(config: ExperimentConfig, path) -> None:
    """Write the config as TOML (``.toml``) or JSON (``.json``) by extension."""
    path = Path(path)
    if path.suffix == ".toml":
        text = config.to_toml()
    elif path.suffix == ".json":
        text = config.to_json()
    else:
        raise ValueError(f"unsupported config extension {path.suffix!r}; use .toml or .json")
    _atomic_write_bytes(path, text.encode("utf-8"))


def load_config(path) -> ExperimentConfig:
    """Read a TOML or JSON experiment config, rejecting unknown keys."""
    path = Path(path)
    if path.suffix == ".toml":
        with open(path, "rb") as fh:
            data = tomli.load(fh)
    elif path.suffix == ".json":
        data = json.loads(path.read_text(encoding="utf-8"))
    else:
        raise ValueError(f"unsupported config extension {path.suffix!r}; use .toml or .json")
    return ExperimentConfig.from_dict(data)


# ---------------------------------------------------------------------------
# CSV and record output
# ---------------------------------------------------------------------------

def _format_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


def write_csv(path, fieldnames, rows) -> str:
    """Write an RFC-4180 CSV (CRLF line endings, minimal quoting) atomically.

    Floats are rendered with 17 significant digits so a read-back
    reconstructs them exactly.  ``rows`` may hold dicts (keyed by
    ``fieldnames``) or sequences.  Returns the SHA-256 hex digest of the
    written bytes.
    """
    fieldnames = list(fieldnames)
    buf = io.StringIO(newline="")
    writer = csv.writer(buf, lineterminator="\r\n", quoting=csv.QUOTE_MINIMAL)
    writer.writerow(fieldnames)
    for row in rows:
        if isinstance(row, dict):
            missing = [k for k in fieldnames if k not in row]
            if missing:
                raise KeyError(f"row is missing column(s): {', '.join(missing)}")
            cells = [_format_cell(row[k]) for k in fieldnames]
        else:
            row = list(row)
            if len(row) != len(fieldnames):
                raise ValueError(
                    f"row has {len(row)} cells for {len(fieldnames)} columns"
                )
            cells = [_format_cell(v) for v in row]
        writer.writerow(cells)
    data = buf.getvalue().encode("utf-8")
    _atomic_write_bytes(path, data)
    return hashlib.sha256(data).hexdigest()


def _atomic_write_bytes(path, data: bytes) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def _json_default(value):
    if isinstance(value, (np.integer, np.bool_)):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError(f"Object of type {type(value).__name__} is not JSON serializable")


@dataclass
class ExperimentRecord:
    """What a run did: config identity, timing, rates, counts, output digests."""

    config_hash: str
    status: str = "failed"
    seed: int = 0
    threads: int = 1
    wall_time_s: float = 0.0
    error: str = ""
    acceptance_rates: dict = field(default_factory=dict)
    simulation_counts: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def write(self, path) -> None:
        payload = json.dumps(self.to_dict(), indent=2, sort_keys=True,
                             default=_json_default) + "\n"
        _atomic_write_bytes(path, payload.encode("utf-8"))


def load_record(path) -> ExperimentRecord:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    return ExperimentRecord(**data)


class _OutputSink:
    """Tracks every file an experiment writes so failures can clean up."""

    def __init__(self, out_dir: Path):
        self.out_dir = Path(out_dir)
        self.outputs: dict[str, str] = {}

    def write_csv(self, name: str, fieldnames, rows) -> str:
        digest = write_csv(self.out_dir / name, fieldnames, rows)
        self.outputs[name] = digest
        return digest

    def write_json(self, name: str, payload) -> str:
        data = (json.dumps(payload, indent=2, sort_keys=True,
                           default=_json_default) + "\n").encode("utf-8")
        _atomic_write_bytes(self.out_dir / name, data)
        digest = hashlib.sha256(data).hexdigest()
        self.outputs[name] = digest
        return digest

    def discard(self) -> None:
        for name in self.outputs:
            (self.out_dir / name).unlink(missing_ok=True)
        self.outputs.clear()


# ---------------------------------------------------------------------------
# thread resolution and shared helpers
# ---------------------------------------------------------------------------

def resolve_threads(requested: int = 0) -> int:
    """Worker count: the explicit request, else the ABC_THREADS variable, else 1."""
    if requested:
        if requested < 1:
            raise ValueError("thread count must be positive")
        return int(requested)
    env = os.environ.get(THREADS_ENV_VAR, "").strip()
    if env:
        try:
            value = int(env)
        except ValueError:
            raise ValueError(f"{THREADS_ENV_VAR} must be an integer, got {env!r}") from None
        if value < 1:
            raise ValueError(f"{THREADS_ENV_VAR} must be positive, got {value}")
        return value
    return 1


def _check_keys(params: dict, allowed, where: str) -> None:
    unknown = sorted(set(params) - set(allowed))
    if unknown:
        raise ValueError(
            f"unknown {where} key(s): " + ", ".join(unknown)
            + "; allowed: " + ", ".join(sorted(allowed))
        )


def _kernel_shape(name: str) -> str:
    shapes = {"uniform": UNIFORM_ELLIPSOID, "gaussian": GAUSSIAN}
    try:
        return shapes[name]
    except KeyError:
        raise ValueError(
            f"unknown kernel {name!r}; choose one of: " + ", ".join(sorted(shapes))
        ) from None


def _metric_from_diag(diag, dim: int) -> np.ndarray:
    values = np.asarray(diag, dtype=float).ravel()
    if values.shape[0] != dim:
        raise ValueError(f"metric_diag has {values.shape[0]} entries for dimension {dim}")
    if np.any(values <= 0):
        raise ValueError("metric_diag entries must be positive")
    return np.diag(values)


def _param_names(model, dim: int) -> list[str]:
    names = tuple(getattr(model, "param_names", ()) or ())
    if len(names) == dim:
        return list(names)
    return [f"theta{i + 1}" for i in range(dim)]


def _write_samples(sink: _OutputSink, names, sample: WeightedSample,
                   filename: str = "samples.csv") -> None:
    fieldnames = list(names) + ["weight"]
    rows = [list(point) + [weight] for point, weight in zip(sample.points, sample.weights)]
    sink.write_csv(filename, fieldnames, rows)


# ---------------------------------------------------------------------------
# summary and sequential-model registries
# ---------------------------------------------------------------------------

_SUMMARY_ALLOWED_PARAMS = {
    "default": set(),
    "identity": {"dim"},
    "sample_mean": set(),
    "second_moment": set(),
    "order_stats": {"n"},
    "order_subset": {"n", "m", "powers"},
    "mg1_quantiles": {"n_quantiles"},
    "mg1_aux": {"theta2_estimator"},
    "ricker_basic": set(),
    "ricker_extended": set(),
    "ricker_full": set(),
    "tb_pair": set(),
}


def build_summary(name: str, model, observed: Dataset | None = None,
                  params: dict | None = None):
    """Construct a registered summary map for ``model``.

    ``observed`` is required by the chaotic-map statistics (their regression
    designs are built from the observed series) and by ``identity`` when no
    explicit dimension is given.
    """
    params = dict(params or {})
    if name not in _SUMMARY_ALLOWED_PARAMS:
        raise ValueError(
            f"unknown summary {name!r}; available: "
            + ", ".join(sorted(_SUMMARY_ALLOWED_PARAMS))
        )
    _check_keys(params, _SUMMARY_ALLOWED_PARAMS[name], f"summary {name!r} parameter")
    if name == "default":
        values = None if observed is None else observed.values
        return default_summary(model, values)
    if name == "identity":
        if "dim" in params:
            dim = int(params["dim"])
        elif observed is not None:
            dim = int(np.asarray(observed.values).size)
        else:
            raise ValueError("identity summary needs a dim parameter or observed data")
        return identity_stats(dim)
    if name == "sample_mean":
        return sample_mean_stat()
    if name == "second_moment":
        return second_moment_stat()
    if name == "order_stats":
        n = int(params.get("n", getattr(model, "n_obs", 0)))
        if n < 1:
            raise ValueError("order_stats needs a positive n")
        return full_order_stats(n)
    if name == "order_subset":
        n = int(params.get("n", getattr(model, "n_obs", 0)))
        if n < 1:
            raise ValueError("order_subset needs a positive n")
        if "m" not in params:
            raise ValueError("order_subset needs m, the number of evenly spaced ranks")
        powers = tuple(int(p) for p in params.get("powers", [1]))
        return order_stat_subset(n, int(params["m"]), powers=powers)
    if name == "mg1_quantiles":
        return mg1_quantiles(int(params.get("n_quantiles", 20)))
    if name == "mg1_aux":
        return mg1_aux_stats(str(params.get("theta2_estimator", "max")))
    if name in ("ricker_basic", "ricker_extended", "ricker_full"):
        if observed is None:
            raise ValueError(f"summary {name!r} needs the observed dataset")
        builder = {
            "ricker_basic": ricker_stats_basic,
            "ricker_extended": ricker_stats_extended,
            "ricker_full": ricker_stats_full,
        }[name]
        return builder(observed.values)
    return tb_pair()


SEQUENTIAL_REGISTRY = {
    "lv": LvSequential,
    "linear_gaussian": LinearGaussianSequential,
    "normal_variance": NormalVarianceSequential,
}


def get_sequential(name: str, **kwargs):
    """Instantiate a registered state-space model for the sequential sampler."""
    try:
        factory = SEQUENTIAL_REGISTRY[name]
    except KeyError:
        known = ", ".join(sorted(SEQUENTIAL_REGISTRY))
        raise KeyError(f"unknown sequential model {name!r}; available: {known}") from None
    return factory(**kwargs)


# ---------------------------------------------------------------------------
# observed-data resolution
# ---------------------------------------------------------------------------

def _load_observed_csv(path) -> np.ndarray:
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        for raw in csv.reader(fh):
            if not raw:
                continue
            try:
                rows.append([float(cell) for cell in raw])
            except ValueError:
                if rows:
                    raise ValueError(f"non-numeric row in {path}: {raw!r}") from None
                continue  # header line
    if not rows:
        raise ValueError(f"no numeric rows in {path}")
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise ValueError(f"ragged rows in {path}")
    values = np.asarray(rows, dtype=float)
    if values.shape[1] == 1:
        return values[:, 0]
    return values


def _observed_values(config: ExperimentConfig):
    """Return ('inline'|'csv'|'truth', payload) for the single configured source."""
    sources = []
    if list(config.observed):
        sources.append(("inline", np.asarray(config.observed, dtype=float)))
    if config.observed_csv:
        sources.append(("csv", config.observed_csv))
    if list(config.truth):
        sources.append(("truth", np.asarray(config.truth, dtype=float)))
    if len(sources) != 1:
        raise ValueError(
            "provide exactly one of observed, observed_csv, or truth "
            f"(got {len(sources)} sources)"
        )
    kind, payload = sources[0]
    if kind == "csv":
        payload = _load_observed_csv(payload)
    return kind, payload


def _simulate_truth_dataset(model, theta, rng, max_tries: int = 50) -> Dataset:
    validity = getattr(model, "training_ok", None)
    for i in range(max_tries):
        ds = model.simulate(theta, child_stream(rng, "observed", i))
        if ds.overflow or (validity is not None and not validity(ds)):
            continue
        return ds
    raise RuntimeError(
        f"no valid observed dataset at truth {np.asarray(theta).tolist()} "
        f"after {max_tries} attempts"
    )


def _resolve_observed(config: ExperimentConfig, model, rng) -> Dataset:
    kind, payload = _observed_values(config)
    if kind == "truth":
        return _simulate_truth_dataset(model, payload, rng)
    return Dataset(payload)


# ---------------------------------------------------------------------------
# pilot tuning shared by the rejection and chain engines
# ---------------------------------------------------------------------------

def _pilot_stats(model, summary, n: int, rng) -> tuple[np.ndarray, int]:
    """Prior-predictive summaries for scaling/bandwidth tuning.

    Returns (stats, attempts); attempts counts every simulation including
    discarded ones, which is what the budget accounting should charge.
    """
    prior = model.prior
    if not getattr(prior, "proper", True):
        raise ValueError(
            "pilot tuning draws from the prior, which is improper here; "
            "set h and metric_diag explicitly"
        )
    validity = getattr(model, "training_ok", None)
    stats = []
    attempts = 0
    cap = 20 * n + 100
    while len(stats) < n:
        if attempts >= cap:
            raise RuntimeError(
                f"only {len(stats)} of {n} pilot simulations were valid "
                f"after {attempts} attempts"
            )
        attempts += 1
        theta = prior.sample(rng)
        ds = model.simulate(theta, rng)
        if ds.overflow or (validity is not None and not validity(ds)):
            continue
        stats.append(summary.apply(ds))
    return np.asarray(stats, dtype=float), attempts


def _tuned_problem(config: ExperimentConfig, model, observed, summary, rng,
                   params: dict) -> tuple[AbcProblem, int]:
    """Build the ABC problem, running a pilot when metric or bandwidth is unset."""
    shape = _kernel_shape(params.get("kernel", "uniform"))
    s_obs = summary.apply(observed)
    metric = None
    if "metric_diag" in params:
        metric = _metric_from_diag(params["metric_diag"], summary.dim)
    h = params.get("h")
    if h is not None:
        h = float(h)
        if h <= 0:
            raise ValueError("bandwidth h must be positive")
    n_pilot = 0
    if metric is None or h is None:
        tune_fraction = float(params.get("tune_fraction", 0.2))
        if not 0.0 < tune_fraction < 1.0:
            raise ValueError("tune_fraction must be in (0, 1)")
        n_pilot = max(10, int(round(tune_fraction * config.budget)))
        if config.budget - n_pilot < 1:
            raise ValueError(f"budget {config.budget} too small to tune and run")
        stats, n_pilot = _pilot_stats(model, summary, n_pilot,
                                      child_stream(rng, "pilot"))
        if metric is None:
            variances = np.maximum(stats.var(axis=0), 1e-12)
            metric = np.diag(1.0 / variances)
        if h is None:
            target_rate = float(params.get("target_rate", 0.01))
            diffs = stats - s_obs
            quad = np.einsum("ij,jk,ik->i", diffs, metric, diffs)
            h = _tuned_bandwidth(quad, target_rate, shape)
    problem = AbcProblem(model, summary, s_obs, DensityKernel(shape, metric, h))
    return problem, n_pilot


def _default_proposal_sd(prior, rng, n_draws: int = 256) -> np.ndarray:
    if not getattr(prior, "proper", True):
        raise ValueError(
            "cannot derive a proposal scale from an improper prior; "
            "set proposal_sd explicitly"
        )
    draws = np.asarray([prior.sample(rng) for _ in range(n_draws)], dtype=float)
    sd = draws.std(axis=0)
    return np.maximum(0.5 * sd, 1e-8)


# ---------------------------------------------------------------------------
# engine executors
# ---------------------------------------------------------------------------

def _exec_rejection(config: ExperimentConfig, rng, sink: _OutputSink,
                    record: ExperimentRecord, threads: int) -> None:
    _check_keys(config.engine_params,
                {"kernel", "h", "metric_diag", "target_rate", "tune_fraction", "noisy"},
                "engine_params")
    params = config.engine_params
    model = get_model(config.model, **config.model_params)
    observed = _resolve_observed(config, model, rng)
    summary = build_summary(config.summary, model, observed, config.summary_params)
    problem, n_pilot = _tuned_problem(config, model, observed, summary, rng, params)
    noise_info = None
    if params.get("noisy", False):
        problem, noise_rec = make_noisy(problem, child_stream(rng, "noise"))
        noise_info = {
            "bandwidth_h": noise_rec.bandwidth_h,
            "perturbation": noise_rec.perturbation.tolist(),
        }
    n_final = config.budget - n_pilot
    if n_final < 1:
        raise ValueError(f"budget {config.budget} leaves no production proposals")
    result = abc_importance(problem, n_final, child_stream(rng, "final"),
                            threads=threads)
    if result.n_accepted == 0:
        raise RuntimeError(
            f"no proposals accepted out of {n_final}; raise the budget, "
            "the target rate, or the bandwidth"
        )
    record.acceptance_rates["final"] = result.n_accepted / result.n_proposals
    record.simulation_counts.update({"pilot": n_pilot, "final": n_final})
    _write_samples(sink, _param_names(model, model.prior.dim), result.sample)
    sink.write_json("provenance.json", {
        "config_hash": config.config_hash(),
        "bandwidth_h": problem.kernel.bandwidth_h,
        "metric_diag": np.diag(problem.kernel.metric).tolist(),
        "noisy": noise_info,
        "n_accepted": result.n_accepted,
        "n_invalid": result.n_invalid,
        "rng": rng_fingerprint(rng),
    })


def _exec_mcmc(config: ExperimentConfig, rng, sink: _OutputSink,
               record: ExperimentRecord, threads: int) -> None:
    _check_keys(config.engine_params,
                {"kernel", "h", "metric_diag", "target_rate", "tune_fraction",
                 "n_steps", "theta0", "proposal_sd", "burn_in_fraction", "noisy"},
                "engine_params")
    params = config.engine_params
    model = get_model(config.model, **config.model_params)
    observed = _resolve_observed(config, model, rng)
    summary = build_summary(config.summary, model, observed, config.summary_params)
    # A chain revisits the high-kernel region, so tune to a laxer acceptance
    # target than a rejection run would use.
    tuning = dict(params)
    tuning.setdefault("target_rate", 0.1)
    problem, n_pilot = _tuned_problem(config, model, observed, summary, rng, tuning)
    if params.get("noisy", False):
        problem, _ = make_noisy(problem, child_stream(rng, "noise"))
    remaining = config.budget - n_pilot
    n_steps = int(params.get("n_steps", remaining))
    if n_steps < 2:
        raise ValueError("chain needs at least 2 steps")
    if n_steps > remaining:
        raise ValueError(
            f"n_steps {n_steps} exceeds the {remaining} simulations left after tuning"
        )
    init_rng = child_stream(rng, "init")
    if "theta0" in params:
        theta0 = np.asarray(params["theta0"], dtype=float)
    else:
        if not getattr(model.prior, "proper", True):
            raise ValueError("improper prior: set theta0 explicitly")
        theta0 = model.prior.sample(init_rng)
    if "proposal_sd" in params:
        sd = np.asarray(params["proposal_sd"], dtype=float).ravel()
        if sd.shape[0] != model.prior.dim or np.any(sd <= 0):
            raise ValueError("proposal_sd must hold one positive value per parameter")
    else:
        sd = _default_proposal_sd(model.prior, init_rng)
    chain_config = McmcConfig(
        n_steps=n_steps,
        theta0=theta0,
        proposal_cov=np.diag(sd**2),
        burn_in_fraction=float(params.get("burn_in_fraction", 0.1)),
    )
    result = abc_mcmc(problem, chain_config, child_stream(rng, "chain"))
    record.acceptance_rates["chain"] = float(result.accepted_flags.mean())
    record.simulation_counts.update({"pilot": n_pilot, "chain": n_steps})
    _write_samples(sink, _param_names(model, model.prior.dim), result.sample)
    sink.write_json("provenance.json", {
        "config_hash": config.config_hash(),
        "bandwidth_h": problem.kernel.bandwidth_h,
        "metric_diag": np.diag(problem.kernel.metric).tolist(),
        "theta0": np.asarray(theta0, dtype=float).tolist(),
        "proposal_sd": np.asarray(sd, dtype=float).tolist(),
        "burn_in": result.burn_in,
        "rng": rng_fingerprint(rng),
    })


def _exec_semiauto(config: ExperimentConfig, rng, sink: _OutputSink,
                   record: ExperimentRecord, threads: int) -> None:
    _check_keys(config.engine_params,
                {"candidates", "pilot_summary", "region_lows", "region_highs",
                 "pilot_fraction", "training_fraction", "pilot_target_rate",
                 "final_target_rate", "kernel", "pilot_h", "final_h", "noisy"},
                "engine_params")
    params = config.engine_params
    model = get_model(config.model, **config.model_params)
    observed = _resolve_observed(config, model, rng)
    names = list(params.get("candidates", [config.summary]))
    if not names:
        raise ValueError("candidates must name at least one summary")
    candidates = [
        build_summary(name, model, observed,
                      config.summary_params if name == config.summary else {})
        for name in names
    ]
    region = None
    if ("region_lows" in params) != ("region_highs" in params):
        raise ValueError("region_lows and region_highs must be given together")
    if "region_lows" in params:
        lows = np.asarray(params["region_lows"], dtype=float)
        highs = np.asarray(params["region_highs"], dtype=float)
        region = TrainingRegion(lows, highs)
    pilot_summary = None
    if "pilot_summary" in params:
        pilot_summary = build_summary(str(params["pilot_summary"]), model, observed)
    sa_config = SemiAutoConfig(
        budget=config.budget,
        pilot_summary=pilot_summary,
        region=region,
        pilot_fraction=float(params.get("pilot_fraction", 0.25)),
        training_fraction=float(params.get("training_fraction", 0.25)),
        pilot_target_rate=float(params.get("pilot_target_rate", 0.01)),
        final_target_rate=float(params.get("final_target_rate", 0.01)),
        kernel_shape=_kernel_shape(params.get("kernel", "uniform")),
        pilot_h=float(params["pilot_h"]) if "pilot_h" in params else None,
        final_h=float(params["final_h"]) if "final_h" in params else None,
        noisy=bool(params.get("noisy", False)),
        threads=threads,
    )
    result = semiauto_run(model, observed, candidates, sa_config,
                          child_stream(rng, "semiauto"))
    names_p = _param_names(model, model.prior.dim)
    _write_samples(sink, names_p, result.sample)
    sink.write_csv("region.csv", ("parameter", "low", "high"),
                   [(names_p[i], result.region.lows[i], result.region.highs[i])
                    for i in range(len(names_p))])
    learned = result.learned
    raw = learned.raw_coefficients()
    feature_names = [f"{learned.feature_map.name}[{j}]" for j in range(raw.shape[1])]
    coef_rows = []
    for i, pname in enumerate(names_p):
        coef_rows.append((pname, "intercept", learned.intercepts[i]))
        for j, fname in enumerate(feature_names):
            coef_rows.append((pname, fname, raw[i, j]))
    sink.write_csv("coefficients.csv", ("parameter", "term", "value"), coef_rows)
    sink.write_csv("bic.csv", ("candidate", "mean_bic"), result.selection_table)
    final = result.final
    record.acceptance_rates["final"] = final.n_accepted / final.n_proposals
    if result.pilot is not None and hasattr(result.pilot, "n_proposals"):
        record.acceptance_rates["pilot"] = (
            result.pilot.n_accepted / result.pilot.n_proposals
        )
    record.simulation_counts.update({
        "training": result.n_training,
        "training_discarded": result.n_training_discarded,
        "final": final.n_proposals,
        "total": result.n_simulations,
    })
    sink.write_json("provenance.json", {
        "config_hash": config.config_hash(),
        "candidates": names,
        "selected": learned.feature_map.name,
        "pilot_bandwidth": result.pilot_bandwidth,
        "final_bandwidth": result.final_bandwidth,
        "region": {"lows": result.region.lows.tolist(),
                   "highs": result.region.highs.tolist()},
        "rng": rng_fingerprint(rng),
    })


def _exec_sequential(config: ExperimentConfig, rng, sink: _OutputSink,
                     record: ExperimentRecord, threads: int) -> None:
    _check_keys(config.engine_params,
                {"n_particles", "h", "noisy", "noisy_h", "shrinkage",
                 "log_rejuvenation", "n_obs"},
                "engine_params")
    params = config.engine_params
    model = get_sequential(config.model, **config.model_params)
    kind, payload = _observed_values(config)
    if kind == "truth":
        simulate = getattr(model, "simulate_observations", None)
        if simulate is None:
            raise ValueError(
                f"sequential model {config.model!r} cannot simulate observations; "
                "provide observed or observed_csv"
            )
        n_obs = int(params.get("n_obs", 10))
        if n_obs < 1:
            raise ValueError("n_obs must be positive")
        obs_rng = child_stream(rng, "observed")
        observations = None
        for _ in range(50):
            out = simulate(payload, n_obs, obs_rng)
            values, overflow = out if isinstance(out, tuple) else (out, False)
            if not overflow:
                observations = values
                break
        if observations is None:
            raise RuntimeError("could not simulate a valid observation sequence")
    else:
        observations = np.atleast_2d(np.asarray(payload, dtype=float))
        if observations.shape[1] != model.obs_dim:
            if observations.shape[0] == model.obs_dim:
                observations = observations.T
            else:
                raise ValueError(
                    f"observations have width {observations.shape[1]}; "
                    f"the model observes {model.obs_dim} values per step"
                )
    n_steps = observations.shape[0]
    if "h" not in params:
        raise ValueError("the sequential engine needs an explicit bandwidth h")
    n_particles = int(params.get("n_particles", config.budget // max(n_steps, 1)))
    if n_particles < 10:
        raise ValueError("need at least 10 particles; raise the budget or n_particles")
    seq_kwargs = {}
    if "shrinkage" in params:
        seq_kwargs["shrinkage"] = float(params["shrinkage"])
    seq_config = SequentialConfig(
        n_particles=n_particles,
        h=float(params["h"]),
        noisy=bool(params.get("noisy", False)),
        noisy_h=float(params["noisy_h"]) if "noisy_h" in params else None,
        log_rejuvenation=bool(params.get("log_rejuvenation", False)),
        **seq_kwargs,
    )
    result = seq_abc(model, observations, seq_config, child_stream(rng, "sequential"))
    names_p = _param_names(model, model.prior.dim)
    trace_rows = []
    for step in result.trace:
        sds = np.sqrt(np.diag(step.posterior_cov))
        for i, pname in enumerate(names_p):
            trace_rows.append({
                "step": step.step,
                "parameter": pname,
                "posterior_mean": step.posterior_mean[i],
                "posterior_sd": sds[i],
                "ess": step.ess,
                "n_invalid": step.n_invalid,
                "jitter_skipped": step.jitter_skipped,
            })
    sink.write_csv("trace.csv",
                   ("step", "parameter", "posterior_mean", "posterior_sd",
                    "ess", "n_invalid", "jitter_skipped"),
                   trace_rows)
    _write_samples(sink, names_p, result.final_sample)
    record.acceptance_rates["mean_ess_fraction"] = float(
        np.mean([step.ess for step in result.trace]) / n_particles
    )
    record.simulation_counts.update({
        "per_step": n_particles,
        "total": n_particles * n_steps,
    })
    sink.write_json("provenance.json", {
        "config_hash": config.config_hash(),
        "n_particles": n_particles,
        "n_steps": n_steps,
        "bandwidth_h": float(params["h"]),
        "rng": rng_fingerprint(rng),
    })


def _exec_baseline(config: ExperimentConfig, rng, sink: _OutputSink,
                   record: ExperimentRecord, threads: int) -> None:
    _check_keys(config.engine_params,
                {"method", "n_replicates", "theta0", "proposal_sd",
                 "burn_in_fraction", "metric_diag", "max_evals", "xatol", "fatol"},
                "engine_params")
    params = config.engine_params
    method = str(params.get("method", "synthetic_likelihood"))
    model = get_model(config.model, **config.model_params)
    observed = _resolve_observed(config, model, rng)
    summary = build_summary(config.summary, model, observed, config.summary_params)
    init_rng = child_stream(rng, "init")
    if "theta0" in params:
        theta0 = np.asarray(params["theta0"], dtype=float)
    elif getattr(model.prior, "proper", True):
        theta0 = model.prior.sample(init_rng)
    else:
        raise ValueError("improper prior: set theta0 explicitly")

    if method == "synthetic_likelihood":
        n_replicates = int(params.get("n_replicates", 50))
        n_steps = config.budget // n_replicates
        if n_steps < 10:
            raise ValueError(
                f"budget {config.budget} allows only {n_steps} chain steps at "
                f"{n_replicates} replicates per step; raise the budget"
            )
        if "proposal_sd" in params:
            sd = np.asarray(params["proposal_sd"], dtype=float).ravel()
        else:
            sd = _default_proposal_sd(model.prior, init_rng)
        chain_config = McmcConfig(
            n_steps=n_steps,
            theta0=theta0,
            proposal_cov=np.diag(sd**2),
            burn_in_fraction=float(params.get("burn_in_fraction", 0.1)),
        )
        result = synthetic_likelihood_mcmc(
            model, summary, summary.apply(observed), chain_config,
            child_stream(rng, "chain"), n_replicates=n_replicates, threads=threads,
        )
        record.acceptance_rates["chain"] = float(result.accepted_flags.mean())
        record.simulation_counts.update({
            "per_step": n_replicates,
            "total": n_steps * n_replicates,
        })
        _write_samples(sink, _param_names(model, model.prior.dim), result.sample)
    elif method == "indirect":
        n_replicates = int(params.get("n_replicates", 30))
        max_evals = int(params.get("max_evals", config.budget // n_replicates))
        if max_evals < 10:
            raise ValueError("budget allows fewer than 10 objective evaluations")
        metric = None
        if "metric_diag" in params:
            metric = _metric_from_diag(params["metric_diag"], summary.dim)
        search_config = IndirectConfig(
            n_replicates=n_replicates,
            metric=metric,
            theta0=theta0,
            max_evals=max_evals,
            xatol=float(params.get("xatol", 1e-4)),
            fatol=float(params.get("fatol", 1e-8)),
        )
        result = indirect_inference(model, summary, observed, search_config,
                                    child_stream(rng, "search"))
        names_p = _param_names(model, model.prior.dim)
        sink.write_csv("estimate.csv", ("parameter", "estimate"),
                       list(zip(names_p, result.theta_hat)))
        record.simulation_counts.update({
            "evaluations": result.n_evals,
            "total": result.n_evals * n_replicates,
        })
        record.acceptance_rates["converged"] = float(result.converged)
    else:
        raise ValueError(
            f"unknown baseline method {method!r}; "
            "choose synthetic_likelihood or indirect"
        )
    sink.write_json("provenance.json", {
        "config_hash": config.config_hash(),
        "method": method,
        "theta0": np.asarray(theta0, dtype=float).tolist(),
        "rng": rng_fingerprint(rng),
    })


# ---------------------------------------------------------------------------
# presets: small, deterministic end-to-end studies
# ---------------------------------------------------------------------------

LOSS_TABLE_COLUMNS = ("method", "parameter", "mean_loss", "n_datasets", "n_failures")
BIAS_CURVE_COLUMNS = ("n_obs", "param", "method", "abs_bias", "rmse")


def _preset_loss_table(config, rng, sink, record, threads, model, methods,
                       theta_sampler=None) -> None:
    n_datasets = int(config.engine_params.get("n_datasets", 3))
    table = loss_table(methods, model, n_datasets=n_datasets,
                       theta_sampler=theta_sampler, budget=config.budget,
                       rng=rng, threads=threads)
    sink.write_csv("loss_table.csv", LOSS_TABLE_COLUMNS, table.csv_rows())
    record.simulation_counts.update({
        "datasets": n_datasets,
        "budget_per_run": config.budget,
        "failures": int(table.n_failures.sum()),
    })
    sink.write_json("provenance.json", {
        "config_hash": config.config_hash(),
        "methods": list(table.method_names),
        "n_datasets": n_datasets,
        "failures": [list(f) for f in table.failures],
        "rng": rng_fingerprint(rng),
    })


def _preset_gk_table(config, rng, sink, record, threads) -> None:
    _check_keys(config.engine_params, {"n_datasets", "n_obs", "m"}, "gk-table parameter")
    n_obs = int(config.engine_params.get("n_obs", 100))
    m = int(config.engine_params.get("m", 11))
    model = get_model("gk", n_obs=n_obs)
    plain = standard_abc_method(order_stat_subset(n_obs, m), threads=threads)
    learned = semiauto_method([order_stat_subset(n_obs, m, powers=(1, 2, 3, 4))],
                              name="semiauto", threads=threads)
    _preset_loss_table(config, rng, sink, record, threads, model, [plain, learned])


def _preset_mg1_table(config, rng, sink, record, threads) -> None:
    _check_keys(config.engine_params, {"n_datasets", "n_obs", "n_quantiles"},
                "mg1-table parameter")
    n_obs = int(config.engine_params.get("n_obs", 50))
    n_quantiles = int(config.engine_params.get("n_quantiles", 10))
    model = get_model("mg1", n_obs=n_obs)
    plain = standard_abc_method(mg1_quantiles(n_quantiles), threads=threads)
    learned = semiauto_method([mg1_quantiles(n_quantiles)], name="semiauto",
                              threads=threads)
    _preset_loss_table(config, rng, sink, record, threads, model, [plain, learned])


RICKER_REGION_LOWS = (2.0, 0.05, 4.0)
RICKER_REGION_HIGHS = (6.0, 0.8, 16.0)


def _preset_ricker_table(config, rng, sink, record, threads) -> None:
    _check_keys(config.engine_params, {"n_datasets"}, "ricker-table parameter")
    model = get_model("ricker")
    # The chaotic-map prior is improper, so replication truths and every
    # method's proposals come from the same box-truncated prior around the
    # stable-cycle regime; both methods then target the same posterior.
    region = TrainingRegion(np.asarray(RICKER_REGION_LOWS),
                            np.asarray(RICKER_REGION_HIGHS))
    truncated = _TruncatedPrior(model.prior, RICKER_REGION_LOWS, RICKER_REGION_HIGHS)

    def run_plain(model_, observed, budget, rng_):
        method = standard_abc_method(ricker_stats_basic(observed.values),
                                     target_rate=0.05, prior=truncated)
        return method.run(model_, observed, budget, rng_)

    def run_semiauto(model_, observed, budget, rng_):
        sa_config = SemiAutoConfig(budget=int(budget), region=region,
                                   final_target_rate=0.05)
        result = semiauto_run(model_, observed,
                              [ricker_stats_basic(observed.values)],
                              sa_config, rng_)
        return result.sample

    methods = [LossMethod("abc_chaotic_map", run_plain),
               LossMethod("semiauto", run_semiauto)]
    _preset_loss_table(config, rng, sink, record, threads, model, methods,
                       theta_sampler=truncated.sample)


def _preset_lv_bias(config, rng, sink, record, threads) -> None:
    _check_keys(config.engine_params,
                {"n_obs_grid", "n_reps", "n_particles", "tau", "h", "mode",
                 "event_cap"},
                "lv-bias parameter")
    params = config.engine_params
    grid = [int(v) for v in params.get("n_obs_grid", [4, 8])]
    n_reps = int(params.get("n_reps", 2))
    n_particles = int(params.get("n_particles", 120))
    tau = float(params.get("tau", 0.1))
    rows = bias_experiment(
        grid, n_reps, child_stream(rng, "bias"),
        n_particles=n_particles, tau=tau,
        mode=str(params.get("mode", "full")),
        h=float(params["h"]) if "h" in params else None,
        event_cap=int(params.get("event_cap", 30_000)),
    )
    sink.write_csv("bias_curve.csv", BIAS_CURVE_COLUMNS, rows)
    record.simulation_counts.update({
        "replications": n_reps,
        "per_step": n_particles,
        "total": n_reps * 2 * max(grid) * n_particles,
    })
    sink.write_json("provenance.json", {
        "config_hash": config.config_hash(),
        "n_obs_grid": grid,
        "n_reps": n_reps,
        "n_particles": n_particles,
        "tau": tau,
        "rng": rng_fingerprint(rng),
    })


def _preset_tb_posterior(config, rng, sink, record, threads) -> None:
    _check_keys(config.engine_params,
                {"n_target", "sample_size", "truth", "target_rate"},
                "tb-posterior parameter")
    params = config.engine_params
    model = get_model("tb",
                      n_target=int(params.get("n_target", 1000)),
                      sample_size=int(params.get("sample_size", 100)))
    truth = np.asarray(params.get("truth", [0.4, 0.1]), dtype=float)
    observed = _simulate_truth_dataset(model, truth, rng)
    summary = tb_pair()
    derived = ExperimentConfig(seed=config.seed, out_dir=config.out_dir,
                               budget=config.budget)
    problem, n_pilot = _tuned_problem(
        derived, model, observed, summary, rng,
        {"kernel": "uniform", "target_rate": float(params.get("target_rate", 0.02))},
    )
    n_final = config.budget - n_pilot
    result = abc_importance(problem, n_final, child_stream(rng, "final"),
                            threads=threads)
    if result.n_accepted == 0:
        raise RuntimeError("no accepted transmission-model proposals; raise the budget")
    names_p = _param_names(model, model.prior.dim)
    _write_samples(sink, names_p, result.sample)
    weights = result.sample.weights / result.sample.weights.sum()
    mean = weights @ result.sample.points
    sds = np.sqrt(weights @ (result.sample.points - mean) ** 2)
    sink.write_csv("posterior.csv", ("parameter", "mean", "sd"),
                   [(names_p[i], mean[i], sds[i]) for i in range(len(names_p))])
    record.acceptance_rates["final"] = result.n_accepted / result.n_proposals
    record.simulation_counts.update({"pilot": n_pilot, "final": n_final})
    sink.write_json("provenance.json", {
        "config_hash": config.config_hash(),
        "truth": truth.tolist(),
        "bandwidth_h": problem.kernel.bandwidth_h,
        "rng": rng_fingerprint(rng),
    })


PRESETS = {
    "gk-table": {
        "executor": _preset_gk_table,
        "budget": 600,
        "description": "quantile-function model: fixed order statistics versus "
                       "learned summaries, squared-error loss table",
    },
    "lv-bias": {
        "executor": _preset_lv_bias,
        "budget": 960,
        "description": "predator-prey sequential sampler: posterior-mean bias "
                       "by series length, standard versus noise-calibrated",
    },
    "ricker-table": {
        "executor": _preset_ricker_table,
        "budget": 900,
        "description": "chaotic population map: regression statistics versus "
                       "learned summaries on a training box",
    },
    "mg1-table": {
        "executor": _preset_mg1_table,
        "budget": 600,
        "description": "queueing model: interdeparture quantiles versus "
                       "learned summaries, squared-error loss table",
    },
    "tb-posterior": {
        "executor": _preset_tb_posterior,
        "budget": 1500,
        "description": "transmission clusters: rejection posterior for the "
                       "birth and death rates on synthetic data",
    },
}


def list_presets() -> list[str]:
    return sorted(PRESETS)


def preset_config(name: str, seed: int = 0, out_dir: str = "",
                  **engine_params) -> ExperimentConfig:
    """A ready-to-run config for a named preset; overrides go to engine_params."""
    if name not in PRESETS:
        raise ValueError(f"unknown preset {name!r}; available: " + ", ".join(list_presets()))
    return ExperimentConfig(
        seed=seed,
        out_dir=out_dir or f"abc-{name}",
        preset=name,
        engine="experiment",
        budget=PRESETS[name]["budget"],
        engine_params=dict(engine_params),
    )


# ---------------------------------------------------------------------------
# orchestration
# ---------------------------------------------------------------------------

_ENGINE_EXECUTORS = {
    "rejection": _exec_rejection,
    "is": _exec_rejection,
    "mcmc": _exec_mcmc,
    "semiauto": _exec_semiauto,
    "sequential": _exec_sequential,
    "baseline": _exec_baseline,
}


def run_experiment(config: ExperimentConfig) -> ExperimentRecord:
    """Execute one configured experiment and write its outputs.

    ``record.json`` is always written — on success with output digests, on
    failure with the error and empty outputs (partial files are removed) —
    before the exception, if any, propagates.
    """
    t0 = time.perf_counter()
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    threads = resolve_threads(config.threads)
    sink = _OutputSink(out_dir)
    record = ExperimentRecord(config_hash=config.config_hash(),
                              seed=config.seed, threads=threads)
    try:
        sink.write_json("config.json", config.to_dict())
        rng = seed_stream(config.seed, "experiment")
        if config.preset:
            if config.preset not in PRESETS:
                raise ValueError(
                    f"unknown preset {config.preset!r}; available: "
                    + ", ".join(list_presets())
                )
            PRESETS[config.preset]["executor"](config, rng, sink, record, threads)
        else:
            try:
                executor = _ENGINE_EXECUTORS[config.engine]
            except KeyError:
                raise ValueError(
                    f"unknown engine {config.engine!r}; available: "
                    + ", ".join(sorted(_ENGINE_EXECUTORS))
                    + " (or set a preset)"
                ) from None
            executor(config, rng, sink, record, threads)
    except Exception as exc:
        sink.discard()
        record.status = "failed"
        record.error = f"{type(exc).__name__}: {exc}"
        record.wall_time_s = time.perf_counter() - t0
        record.outputs = {}
        record.write(out_dir / "record.json")
        raise
    record.status = "ok"
    record.wall_time_s = time.perf_counter() - t0
    record.outputs = dict(sink.outputs)
    record.write(out_dir / "record.json")
    return record


def run_config(path) -> ExperimentRecord:
    """Load a TOML or JSON config file and run it."""
    return run_experiment(load_config(path))
