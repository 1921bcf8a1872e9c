"""Experiment harness: corpus ingestion, factorial sweeps, CSV and plots.

The CSV is the canonical artifact; plots are derived views. A sweep is fully
determined by its config file (CLI flags are overrides of config keys), and
identical configs reproduce the CSV byte-for-byte apart from the timestamp
header line. Wall-clock timing is opt-in (``timing: wall``) because measured
milliseconds would break that reproducibility contract; the default writes 0.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import dataclasses
import hashlib
import json
import logging
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import yaml

from .ats import DEFAULT_SUBSET_CAP, ErasureChannelParams
from .encoder import (
    DEFAULT_BIGRAM_WEIGHT,
    DEFAULT_DIMENSION,
    EmbeddingProvider,
    RemoteProvider,
    RemoteUnavailable,
    SyntheticProvider,
)
from .optimize import (
    STRATEGIES,
    OptimizerConfig,
    evaluate_report,
    run_strategy,
)
from .seeding import spawn_seed
from .surrogate import SurrogateKind
from .tokens import DEFAULT_ENUMERATION_CAP, TokenMessage, partition_count

logger = logging.getLogger("tokenpack")

CSV_COLUMNS = [
    "message_id",
    "K",
    "strategy",
    "p",
    "M",
    "k",
    "P",
    "seed",
    "ats_value",
    "ats_stderr",
    "encoder_steps",
    "wall_ms",
    "error",
]

PLOT_FAMILIES = ("ats_vs_p", "ats_vs_m", "ats_vs_k", "ats_vs_pop", "complexity")

_EVAL_STREAM = 0x45564C  # tag separating evaluation seeds from search seeds


class ConfigError(ValueError):
    pass


class FileUnreadable(OSError):
    pass


class EmptyCorpus(ValueError):
    pass


class SchemaMismatch(ValueError):
    pass


@dataclass
class ExperimentConfig:
    corpus_path: str
    output_dir: str = "out"
    encoder: str = "synthetic"  # synthetic | remote
    remote_url: str | None = None
    strategies: list[str] = field(default_factory=lambda: ["random", "sempa_look"])
    p_grid: list[float] = field(default_factory=lambda: [0.25])
    M_grid: list[int] = field(default_factory=lambda: [2])
    k_grid: list[int] = field(default_factory=lambda: [4])
    P_grid: list[int] = field(default_factory=lambda: [10])
    seeds: list[int] = field(default_factory=lambda: [0])
    trials: int = 20000
    cache: str = "on"  # on | off
    G: int = 5
    B: int = 5
    mutation_rate: float = 0.3
    surrogate: str = "rss"
    dimension: int = DEFAULT_DIMENSION
    salt: int = 0
    bigram_weight: float = DEFAULT_BIGRAM_WEIGHT
    pad: bool = False
    timing: str = "none"  # none | wall
    exact_cap: int = DEFAULT_SUBSET_CAP
    enumeration_cap: int = DEFAULT_ENUMERATION_CAP
    workers: int = 1

    def __post_init__(self) -> None:
        for name in ("strategies", "p_grid", "M_grid", "k_grid", "P_grid", "seeds"):
            if not getattr(self, name):
                raise ConfigError(f"{name} must be non-empty")
        for s in self.strategies:
            if s not in STRATEGIES:
                raise ConfigError(f"unknown strategy {s!r}")
        if self.encoder not in ("synthetic", "remote"):
            raise ConfigError(f"encoder must be synthetic or remote, got {self.encoder!r}")
        if self.encoder == "remote" and not self.remote_url:
            raise ConfigError("remote encoder requires remote_url")
        if self.cache not in ("on", "off"):
            raise ConfigError("cache must be 'on' or 'off'")
        if self.timing not in ("none", "wall"):
            raise ConfigError("timing must be 'none' or 'wall'")
        if self.surrogate not in ("rss", "tss"):
            raise ConfigError("surrogate must be 'rss' or 'tss'")
        if any(not 0.0 <= p <= 1.0 for p in self.p_grid):
            raise ConfigError("p values must lie in [0, 1]")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")

    @classmethod
    def from_mapping(cls, data: dict) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("config must be a mapping")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "corpus_path" not in data:
            raise ConfigError("config requires corpus_path")
        try:
            return cls(**data)
        except TypeError as err:
            raise ConfigError(str(err)) from err

    @classmethod
    def from_yaml(cls, path: "str | Path") -> "ExperimentConfig":
        try:
            text = Path(path).read_text()
        except OSError as err:
            raise ConfigError(f"cannot read config {path}: {err}") from err
        try:
            data = yaml.safe_load(text)
        except yaml.YAMLError as err:
            raise ConfigError(f"invalid YAML in {path}: {err}") from err
        return cls.from_mapping(data or {})

    def header_lines(self) -> list[str]:
        """Deterministic provenance block embedded in the CSV."""
        items = dataclasses.asdict(self)
        lines = [f"# config.{key}={json.dumps(items[key], sort_keys=True)}" for key in sorted(items)]
        digest = hashlib.sha256("\n".join(lines).encode()).hexdigest()[:16]
        return [f"# config_sha={digest}"] + lines


@dataclass
class IngestReport:
    messages: list[tuple[int, TokenMessage]]
    skipped: int
    total: int


def ingest(corpus_path: "str | Path") -> IngestReport:
    """Read a JSONL corpus: one {"id": ..., "tokens": [...]} object per line.

    Malformed lines are logged and skipped, never fatal; an unreadable file
    or a corpus with no valid messages is.
    """
    try:
        raw = Path(corpus_path).read_text()
    except OSError as err:
        raise FileUnreadable(f"cannot read corpus {corpus_path}: {err}") from err
    messages: list[tuple[int, TokenMessage]] = []
    skipped = 0
    total = 0
    for lineno, line in enumerate(raw.splitlines(), start=1):
        total += 1
        stripped = line.strip()
        if not stripped:
            skipped += 1
            logger.warning("corpus line %d: blank, skipped", lineno)
            continue
        try:
            obj = json.loads(stripped)
            tokens = obj["tokens"]
            if not isinstance(tokens, list) or not tokens:
                raise ValueError("tokens must be a non-empty array")
            msg = TokenMessage(tuple(str(t) for t in tokens))
            messages.append((int(obj["id"]), msg))
        except (ValueError, KeyError, TypeError) as err:
            skipped += 1
            logger.warning("corpus line %d: %s, skipped", lineno, err)
    if not messages:
        raise EmptyCorpus(f"no valid messages in {corpus_path}")
    return IngestReport(messages, skipped, total)


@dataclass(frozen=True)
class SweepCell:
    message_id: int
    message: TokenMessage
    strategy: str
    p: float
    M: int
    k: int
    P: int
    seed: int


def _build_cells(config: ExperimentConfig, report: IngestReport) -> tuple[list[SweepCell], int]:
    cells: list[SweepCell] = []
    skipped_cells = 0
    for msg_id, message in report.messages:
        for M in config.M_grid:
            msg = message
            if msg.K % M != 0:
                if config.pad:
                    msg = msg.padded(M)
                else:
                    skipped_cells += 1
                    logger.info(
                        "message %s skipped for M=%d: K=%d not divisible", msg_id, M, message.K
                    )
                    continue
            for p in config.p_grid:
                for k in config.k_grid:
                    for P in config.P_grid:
                        for strategy in config.strategies:
                            for seed in config.seeds:
                                cells.append(
                                    SweepCell(msg_id, msg, strategy, p, M, k, P, seed)
                                )
    return cells, skipped_cells


def _make_provider(config: ExperimentConfig, remote_dim: int | None = None) -> EmbeddingProvider:
    if config.encoder == "synthetic":
        return SyntheticProvider(
            dimension=config.dimension,
            salt=config.salt,
            bigram_weight=config.bigram_weight,
            cache=config.cache == "on",
        )
    assert config.remote_url is not None
    return RemoteProvider(
        config.remote_url, dimension=remote_dim, cache=config.cache == "on"
    )


def _run_cell(cell: SweepCell, config: ExperimentConfig, remote_dim: int | None) -> dict:
    row = {
        "message_id": cell.message_id,
        "K": cell.message.K,
        "strategy": cell.strategy,
        "p": cell.p,
        "M": cell.M,
        "k": cell.k,
        "P": cell.P,
        "seed": cell.seed,
        "ats_value": "",
        "ats_stderr": "",
        "encoder_steps": "",
        "wall_ms": "",
        "error": "",
    }
    try:
        provider = _make_provider(config, remote_dim)
        channel = ErasureChannelParams(cell.p)
        opt = OptimizerConfig(
            strategy=cell.strategy,
            P=cell.P,
            G=config.G,
            B=config.B,
            k=cell.k,
            mutation_rate=config.mutation_rate,
            seed=cell.seed,
            surrogate=SurrogateKind.RSS if config.surrogate == "rss" else SurrogateKind.TSS,
        )
        start = time.perf_counter()
        report = run_strategy(
            cell.strategy,
            cell.message,
            cell.M,
            channel,
            provider,
            opt,
            enumeration_cap=config.enumeration_cap,
        )
        result = evaluate_report(
            report,
            cell.message,
            channel,
            provider,
            samples=config.trials,
            seed=spawn_seed(cell.seed, _EVAL_STREAM),
            exact_cap=config.exact_cap,
        )
        elapsed_ms = (time.perf_counter() - start) * 1000.0
        row["ats_value"] = repr(result.value)
        row["ats_stderr"] = repr(result.stderr)
        row["encoder_steps"] = report.encoder_steps
        row["wall_ms"] = repr(elapsed_ms) if config.timing == "wall" else 0
    except Exception as err:  # recorded per-cell, the sweep never aborts
        row["error"] = f"{type(err).__name__}: {err}"
    return row


def run_sweep(config: ExperimentConfig) -> Path:
    """Run the full factorial sweep and write the canonical CSV."""
    report = ingest(config.corpus_path)
    cells, skipped_cells = _build_cells(config, report)
    logger.info(
        "sweep: %d cells (%d message/M combinations skipped)", len(cells), skipped_cells
    )

    remote_dim = None
    if config.encoder == "remote":
        probe = RemoteProvider(config.remote_url)  # raises RemoteUnavailable if down
        remote_dim = probe.dimension

    if config.workers > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=config.workers) as pool:
            futures = [pool.submit(_run_cell, cell, config, remote_dim) for cell in cells]
            rows = [f.result() for f in futures]  # submission order, not completion
    else:
        rows = [_run_cell(cell, config, remote_dim) for cell in cells]

    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / "sweep.csv"
    with open(csv_path, "w", newline="") as fh:
        fh.write(f"# generated_at={time.strftime('%Y-%m-%dT%H:%M:%S')}\n")
        for line in ExperimentConfig.header_lines(config):
            fh.write(line + "\n")
        fh.write(",".join(CSV_COLUMNS) + "\n")
        for row in rows:
            fh.write(",".join(str(row[c]) for c in CSV_COLUMNS) + "\n")
    return csv_path


# --- plotting -----------------------------------------------------------------


def _load_rows(csv_path: "str | Path") -> tuple[list[dict], dict[str, str]]:
    try:
        raw = Path(csv_path).read_text()
    except OSError as err:
        raise SchemaMismatch(f"cannot read CSV {csv_path}: {err}") from err
    header_meta: dict[str, str] = {}
    lines = []
    for line in raw.splitlines():
        if line.startswith("#"):
            body = line[1:].strip()
            if body.startswith("config.") and "=" in body:
                key, value = body.split("=", 1)
                header_meta[key[len("config.") :]] = value
            continue
        if line.strip():
            lines.append(line)
    if not lines:
        raise SchemaMismatch("CSV has no header row")
    columns = lines[0].split(",")
    if columns != CSV_COLUMNS:
        raise SchemaMismatch(f"unexpected columns: {columns}")
    rows = []
    for line in lines[1:]:
        parts = line.split(",")
        if len(parts) != len(columns):
            raise SchemaMismatch(f"row has {len(parts)} fields, expected {len(columns)}")
        rows.append(dict(zip(columns, parts)))
    if not rows:
        raise SchemaMismatch("CSV has no data rows")
    return rows, header_meta


def _aggregate(rows: list[dict], x_col: str, y_col: str) -> dict[str, list[tuple[float, float, float]]]:
    """strategy -> sorted [(x, mean(y), std(y))], error rows excluded."""
    import numpy as np

    buckets: dict[tuple[str, float], list[float]] = {}
    for row in rows:
        if row["error"]:
            continue
        key = (row["strategy"], float(row[x_col]))
        buckets.setdefault(key, []).append(float(row[y_col]))
    series: dict[str, list[tuple[float, float, float]]] = {}
    for (strategy, x), ys in sorted(buckets.items()):
        arr = np.asarray(ys)
        series.setdefault(strategy, []).append(
            (x, float(arr.mean()), float(arr.std(ddof=1)) if len(arr) > 1 else 0.0)
        )
    return series


_FAMILY_AXES = {
    "ats_vs_p": ("p", "ats_value", "erasure probability p", "average token similarity"),
    "ats_vs_m": ("M", "ats_value", "packet size M", "average token similarity"),
    "ats_vs_k": ("k", "ats_value", "lookahead depth k", "average token similarity"),
    "ats_vs_pop": ("P", "ats_value", "candidates P", "average token similarity"),
    "complexity": ("K", "encoder_steps", "message length K", "text encoding steps"),
}


def closed_form_steps(strategy: str, K: int, M: int, k: int, P: int, G: int) -> int | None:
    """Expected encoding budget per strategy with caching disabled."""
    if K % M != 0:
        return None
    N = K // M
    if strategy == "random":
        return 0
    if strategy == "full":
        return partition_count(K, M) * (1 << N)
    if strategy in ("ga", "gbeam"):
        return G * P * (1 << N)
    if strategy == "sempa_look":
        return sum(P * (min(k, N - level) + 1) for level in range(1, N))
    return None


def emit_plots(csv_path: "str | Path", family: str, out_dir: "str | Path") -> list[Path]:
    """Render one figure family from a sweep CSV; returns the files written."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    if family not in PLOT_FAMILIES:
        raise SchemaMismatch(f"unknown figure family {family!r}")
    rows, meta = _load_rows(csv_path)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    x_col, y_col, x_label, y_label = _FAMILY_AXES[family]
    series = _aggregate(rows, x_col, y_col)
    if not series:
        raise SchemaMismatch("no plottable rows (all cells errored?)")

    fig, ax = plt.subplots(figsize=(6, 4))
    for strategy, points in sorted(series.items()):
        xs = [pt[0] for pt in points]
        means = [pt[1] for pt in points]
        stds = [pt[2] for pt in points]
        ax.plot(xs, means, marker="o", label=strategy)
        ax.fill_between(
            xs,
            [m - s for m, s in zip(means, stds)],
            [m + s for m, s in zip(means, stds)],
            alpha=0.2,
        )
    if family == "complexity":
        ax.set_yscale("log")
    ax.set_xlabel(x_label)
    ax.set_ylabel(y_label)
    ax.legend()
    fig.tight_layout()
    fig_path = out / f"{family}.svg"
    fig.savefig(fig_path)
    plt.close(fig)
    written.append(fig_path)

    if family == "complexity":
        written.append(_write_complexity_table(rows, meta, out))
    return written


def _write_complexity_table(rows: list[dict], meta: dict[str, str], out: Path) -> Path:
    """Measured encoding steps next to their closed-form budgets."""
    G = int(meta.get("G", "5"))
    seen: dict[tuple, list[int]] = {}
    for row in rows:
        if row["error"] or row["encoder_steps"] == "":
            continue
        key = (row["strategy"], int(row["K"]), int(row["M"]), int(row["k"]), int(row["P"]))
        seen.setdefault(key, []).append(int(row["encoder_steps"]))
    path = out / "complexity_table.csv"
    with open(path, "w", newline="") as fh:
        fh.write("strategy,K,M,k,P,G,measured_mean_steps,closed_form_steps\n")
        for key in sorted(seen):
            strategy, K, M, k, P = key
            measured = sum(seen[key]) / len(seen[key])
            closed = closed_form_steps(strategy, K, M, k, P, G)
            fh.write(
                f"{strategy},{K},{M},{k},{P},{G},{measured:g},"
                f"{'' if closed is None else closed}\n"
            )
    return path


# --- command line ---------------------------------------------------------------

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_CORPUS = 3
EXIT_REMOTE = 4


def _apply_overrides(config: ExperimentConfig, args: argparse.Namespace) -> ExperimentConfig:
    updates: dict = {}
    if args.seed is not None:
        updates["seeds"] = [args.seed]
    if args.encoder is not None:
        updates["encoder"] = args.encoder
    if args.remote_url is not None:
        updates["remote_url"] = args.remote_url
    if args.cache is not None:
        updates["cache"] = args.cache
    if args.out is not None:
        updates["output_dir"] = args.out
    if getattr(args, "pad", False):
        updates["pad"] = True
    if not updates:
        return config
    return dataclasses.replace(config, **updates)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tokenpack",
        description="Semantic packet aggregation experiments over erasure channels.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", required=True, help="YAML experiment config")
        p.add_argument("--seed", type=int, default=None, help="override: single seed")
        p.add_argument("--encoder", choices=["synthetic", "remote"], default=None)
        p.add_argument("--remote-url", dest="remote_url", default=None)
        p.add_argument("--cache", choices=["on", "off"], default=None)
        p.add_argument("--out", default=None, help="override: output directory")
        p.add_argument("--pad", action="store_true", help="pad messages to a multiple of M")

    p_ingest = sub.add_parser("ingest-check", help="validate a corpus file")
    common(p_ingest)

    p_sweep = sub.add_parser("sweep", help="run the factorial sweep to CSV")
    common(p_sweep)

    p_plot = sub.add_parser("plot", help="render figures from a sweep CSV")
    p_plot.add_argument("--csv", required=True)
    p_plot.add_argument("--family", required=True, choices=PLOT_FAMILIES)
    p_plot.add_argument("--out", default="out")

    p_serve = sub.add_parser("serve-check", help="ping the remote embedding service")
    p_serve.add_argument("--remote-url", dest="remote_url", required=True)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)

    if args.command == "serve-check":
        try:
            provider = RemoteProvider(args.remote_url)
        except RemoteUnavailable as err:
            print(f"remote encoder unavailable: {err}", file=sys.stderr)
            return EXIT_REMOTE
        print(f"ok: dim={provider.dimension}")
        return EXIT_OK

    if args.command == "plot":
        try:
            written = emit_plots(args.csv, args.family, args.out)
        except SchemaMismatch as err:
            print(f"plot failed: {err}", file=sys.stderr)
            return EXIT_CONFIG
        for path in written:
            print(path)
        return EXIT_OK

    try:
        config = _apply_overrides(ExperimentConfig.from_yaml(args.config), args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG

    if args.command == "ingest-check":
        try:
            report = ingest(config.corpus_path)
        except (FileUnreadable, EmptyCorpus) as err:
            print(f"corpus error: {err}", file=sys.stderr)
            return EXIT_CORPUS
        print(f"ingested={len(report.messages)} skipped={report.skipped} total={report.total}")
        return EXIT_OK

    if args.command == "sweep":
        try:
            csv_path = run_sweep(config)
        except (FileUnreadable, EmptyCorpus) as err:
            print(f"corpus error: {err}", file=sys.stderr)
            return EXIT_CORPUS
        except RemoteUnavailable as err:
            print(f"remote encoder unavailable: {err}", file=sys.stderr)
            return EXIT_REMOTE
        except ConfigError as err:
            print(f"config error: {err}", file=sys.stderr)
            return EXIT_CONFIG
        print(csv_path)
        return EXIT_OK

    return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
