import logging
from pathlib import Path

import pandas as pd

from pfp.commands.base import (
    add_common_arguments, apply_budget, cq_channel, emit_frame, emit_json, require, resolve_probs,
)
from pfp.schemas import CodeSpec, RunConfig
from pfp.services.protocol import run_protocol
from pfp.utils.serialization import dataframe_to_csv, write_text

logger = logging.getLogger("pfp")


def register(subparsers) -> None:
    parser = subparsers.add_parser("simulate", help="finite-blocklength run of the key-assisted private code")
    add_common_arguments(parser)
    parser.add_argument("--rate", type=float, help="private message rate R")
    parser.add_argument("--key-rate", type=float, dest="key_rate", default=0.0, help="secret-key rate R_s")
    parser.add_argument("--trials", type=int, help="independent codebooks (seed XOR trial)")
    parser.add_argument("--trace", help="per-trial CSV")


def trial_frame(report) -> pd.DataFrame:
    return pd.DataFrame([record.model_dump() for record in report.trials])


def run(config: RunConfig) -> int:
    apply_budget(config)
    rate = require(config.rate, "--rate", "simulate")
    channel = cq_channel(config)
    probs = resolve_probs(config, channel)
    for n in config.n:
        spec = CodeSpec(n=n, rate=rate, key_rate=config.key_rate, seed=config.seed, trials=config.trials or 1)
        report = run_protocol(channel, probs, spec)
        if config.format == "csv":
            emit_frame(config, n, trial_frame(report))
        else:
            emit_json(config, n, report.model_dump())
        if config.trace:
            trace = config.trace
            if len(config.n) > 1:
                path = Path(trace)
                trace = str(path.with_name(f"{path.stem}_n{n}{path.suffix}"))
            write_text(dataframe_to_csv(trial_frame(report)), trace)
            logger.info(f"✅ OUTPUT: per-trial trace written to {trace}")
    return 0
