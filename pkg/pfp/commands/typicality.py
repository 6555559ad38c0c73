import logging

import pandas as pd

from pfp.commands.base import add_common_arguments, apply_budget, cq_channel, emit_frame, emit_json, resolve_probs
from pfp.schemas import RunConfig
from pfp.services.typicality import verify_four_properties

logger = logging.getLogger("pfp")


def register(subparsers) -> None:
    parser = subparsers.add_parser("typicality", help="numeric check of typical-subspace properties")
    add_common_arguments(parser)
    parser.add_argument("--delta", type=float, default=0.15, help="typicality width")
    parser.add_argument("--samples", type=int, help="typical sequences to check (default 100)")
    parser.add_argument("--system", choices=["B", "E"], default="E")


def run(config: RunConfig) -> int:
    apply_budget(config)
    channel = cq_channel(config)
    probs = resolve_probs(config, channel)
    for n in config.n:
        report = verify_four_properties(channel, probs, n, config.delta, system=config.system,
                                        samples=config.samples or 100, seed=config.seed)
        body = report.model_dump(by_alias=True)
        if config.format == "csv":
            emit_frame(config, n, pd.DataFrame([body]))
        else:
            emit_json(config, n, body)
    return 0
