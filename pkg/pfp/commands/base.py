"""Shared plumbing for subcommands: common flags, channel loading, artifact emission."""
import argparse
import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd

from pfp.core.config import get_settings
from pfp.core.exceptions import ConfigurationError
from pfp.schemas import RunConfig
from pfp.services.channels import Channel, CqWiretapChannel, as_cq_channel, load_channel
from pfp.services.region import corner_points
from pfp.utils.serialization import dataframe_to_csv, dumps_json, write_text

logger = logging.getLogger("pfp")

# not part of the reproducible config: where results go
_OUTPUT_FIELDS = {"out", "trace"}


def add_common_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--channel", required=True, help="channel document (JSON)")
    parser.add_argument("--n", type=int, nargs="+", default=[1], help="blocklength(s); several values run a sweep")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--probs", type=float, nargs="+", help="input distribution override")
    parser.add_argument("--format", choices=["csv", "json", "text"])
    parser.add_argument("--out", help="output path ('-' or omitted: stdout)")
    parser.add_argument("--budget-mb", type=int, dest="budget_mb", help="memory budget override")


def config_from_args(subcommand: str, args: argparse.Namespace) -> RunConfig:
    fields = {name: getattr(args, name) for name in RunConfig.model_fields if name != "subcommand" and hasattr(args, name)}
    fields = {k: v for k, v in fields.items() if v is not None}
    return RunConfig(subcommand=subcommand, **fields)


def apply_budget(config: RunConfig) -> None:
    if config.budget_mb is not None:
        get_settings().PFP_BUDGET_MB = config.budget_mb
        logger.info(f"BUDGET: memory budget set to {config.budget_mb} MiB")


def load_run_channel(config: RunConfig) -> Channel:
    return load_channel(config.channel)


def resolve_probs(config: RunConfig, channel: CqWiretapChannel) -> np.ndarray:
    """--probs, else the document's probabilities, else the distribution maximizing I(X;B)."""
    if config.probs is not None:
        return np.asarray(config.probs, dtype=float)
    if channel.probs is not None:
        return channel.probs
    _, q_corner = corner_points(channel)
    logger.info(f"CONFIG: no input distribution given, using the I(X;B) maximizer {q_corner.distribution}")
    return np.asarray(q_corner.distribution)


def cq_channel(config: RunConfig) -> CqWiretapChannel:
    return as_cq_channel(load_run_channel(config))


def logged_config(config: RunConfig, n: Optional[int] = None) -> Dict[str, Any]:
    payload = config.model_dump(exclude=_OUTPUT_FIELDS)
    if n is not None:
        payload["n"] = [n]
    return payload


def output_path(config: RunConfig, n: int) -> Optional[str]:
    """Single run: --out as given. Sweep: <stem>_n<n><ext> per blocklength."""
    if config.out is None or config.out == "-":
        return config.out
    path = Path(config.out)
    if len(config.n) > 1:
        path = path.with_name(f"{path.stem}_n{n}{path.suffix}")
    return str(path)


def emit_json(config: RunConfig, n: int, body: Dict[str, Any]) -> None:
    payload = {"config": logged_config(config, n)}
    payload.update(body)
    target = output_path(config, n)
    write_text(dumps_json(payload), target)
    if target not in (None, "-"):
        logger.info(f"✅ OUTPUT: wrote {target}")


def emit_frame(config: RunConfig, n: int, frame: pd.DataFrame) -> None:
    """CSV goes to --out; the run config lands next to it as <stem>.config.json."""
    target = output_path(config, n)
    write_text(dataframe_to_csv(frame), target)
    if target in (None, "-"):
        logger.info(f"CONFIG: {json.dumps(logged_config(config, n), sort_keys=True)}")
        return
    sidecar = Path(target).with_suffix(".config.json")
    write_text(dumps_json({"config": logged_config(config, n)}), str(sidecar))
    logger.info(f"✅ OUTPUT: wrote {target} and {sidecar}")


def emit_text(config: RunConfig, n: int, lines: List[str]) -> None:
    write_text("\n".join(lines) + "\n", output_path(config, n))


def require(value, flag: str, subcommand: str):
    if value is None:
        raise ConfigurationError(f"{subcommand} needs {flag}")
    return value


def load_replay_config(path: str, out: Optional[str] = None) -> RunConfig:
    """RunConfig logged in a JSON artifact or in a CSV's .config.json sidecar."""
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigurationError(f"cannot read replay artifact {path}: {e}")
    if not isinstance(payload, dict) or "config" not in payload:
        raise ConfigurationError(f"{path} carries no logged config")
    fields = dict(payload["config"])
    if out is not None:
        fields["out"] = out
    return RunConfig(**fields)
