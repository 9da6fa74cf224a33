"""Run configuration: a TOML file with explicit defaults.

The master seed is mandatory (no wall-clock seeding) and every output embeds
the hash of the effective configuration for provenance.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError
from .util import config_hash

PATH_KEYS = ("articles", "keywords", "stopwords", "calendar", "prices_daily", "prices_minute")

TEMPLATE = """\
# newsflow run configuration (all defaults shown explicitly)

[paths]
articles = "articles.jsonl"        # JSONL, released-dataset field names
keywords = "keywords.json"         # company -> {ticker, keywords[]}
stopwords = "stopwords.txt"        # one token per line
calendar = "calendar.txt"          # one ISO trading date per line
prices_daily = "daily.csv"         # date,ticker,open,close,adj_close
prices_minute = "minute.csv"       # timestamp_utc,ticker,mid (or bid,ask)

[ingest]
shingle_k = 5
jaccard_threshold = 0.7
financial_filter = "lexicon"       # "lexicon" or "none"

[sestm]
alpha_plus = 0.1
alpha_minus = 0.1
kappa = 20
lambda = 0.5
min_df = 10
score_start = "2018-01"            # first scored month; earlier data is warm-up
exclude_neutral = true             # drop no-charged-word articles downstream

[te]
quantiles = [0.05, 0.25, 0.50, 0.75, 0.95]
lags = [0, 2]                      # sentiment lags in hours, one study each
n_shuffles = 100
n_bootstrap = 300
q = 0.05                           # FDR level

[backtest]
regime = "daily-930"               # "daily-930", "daily-4pm" or "weekly"
day_lag = 1                        # 1 tradable; 0 / -1 look-ahead diagnostics
n_long = 20
n_short = 20
n_sims = 500
benchmark = "SPY"                  # ticker in the daily price file; "" disables

[run]
master_seed = 42
output_dir = "out"
threads = 1
"""

_DEFAULTS = {
    "ingest": {"shingle_k": 5, "jaccard_threshold": 0.7, "financial_filter": "lexicon"},
    "sestm": {
        "alpha_plus": 0.1,
        "alpha_minus": 0.1,
        "kappa": 20,
        "lambda": 0.5,
        "min_df": 10,
        "score_start": "2018-01",
        "exclude_neutral": True,
    },
    "te": {
        "quantiles": [0.05, 0.25, 0.50, 0.75, 0.95],
        "lags": [0, 2],
        "n_shuffles": 100,
        "n_bootstrap": 300,
        "q": 0.05,
    },
    "backtest": {
        "regime": "daily-930",
        "day_lag": 1,
        "n_long": 20,
        "n_short": 20,
        "n_sims": 500,
        "benchmark": "SPY",
    },
}


@dataclass
class RunConfig:
    paths: dict[str, Path]
    ingest: dict
    sestm: dict
    te: dict
    backtest: dict
    master_seed: int
    output_dir: Path
    threads: int = 1
    base_dir: Path = field(default_factory=Path)

    def hash(self) -> str:
        return config_hash(self.as_dict())

    def as_dict(self) -> dict:
        """Analysis-relevant configuration only: thread count and output
        placement cannot affect results, so they stay out of the hash."""
        return {
            "paths": {k: str(v) for k, v in sorted(self.paths.items())},
            "ingest": self.ingest,
            "sestm": self.sestm,
            "te": self.te,
            "backtest": self.backtest,
            "run": {"master_seed": self.master_seed},
        }

    def require_paths(self, *keys: str) -> dict[str, Path]:
        missing = [k for k in keys if k not in self.paths]
        if missing:
            raise ConfigError(f"config is missing required paths: {', '.join(missing)}")
        return {k: self.paths[k] for k in keys}


def _merged(section: str, raw: dict) -> dict:
    merged = dict(_DEFAULTS[section])
    unknown = set(raw) - set(merged)
    if unknown:
        raise ConfigError(f"unknown keys in [{section}]: {', '.join(sorted(unknown))}")
    merged.update(raw)
    return merged


def load_config(
    path,
    seed_override: int | None = None,
    output_override=None,
    threads_override: int | None = None,
) -> RunConfig:
    """Parse and validate a TOML run config.

    Relative paths resolve against the config file's directory.  Every path
    that is set must exist; the master seed must be set somewhere (config or
    --seed override).
    """
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML in {path}: {exc}") from exc

    base = path.resolve().parent
    paths = {}
    for key, value in raw.get("paths", {}).items():
        if key not in PATH_KEYS:
            raise ConfigError(f"unknown path key {key!r}; expected one of {PATH_KEYS}")
        if not str(value):
            continue
        resolved = (base / str(value)).resolve()
        if not resolved.exists():
            raise ConfigError(f"configured path does not exist: {key} = {resolved}")
        paths[key] = resolved

    run = raw.get("run", {})
    seed = seed_override if seed_override is not None else run.get("master_seed")
    if seed is None:
        raise ConfigError("master_seed is mandatory (set [run] master_seed or pass --seed)")
    output_dir = Path(output_override) if output_override else base / str(run.get("output_dir", "out"))
    threads = int(threads_override if threads_override is not None else run.get("threads", 1))
    if threads < 1:
        raise ConfigError(f"threads must be >= 1, got {threads}")

    return RunConfig(
        paths=paths,
        ingest=_merged("ingest", raw.get("ingest", {})),
        sestm=_merged("sestm", raw.get("sestm", {})),
        te=_merged("te", raw.get("te", {})),
        backtest=_merged("backtest", raw.get("backtest", {})),
        master_seed=int(seed),
        output_dir=output_dir,
        threads=threads,
        base_dir=base,
    )
