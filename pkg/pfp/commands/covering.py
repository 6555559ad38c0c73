import logging

import pandas as pd

from pfp.commands.base import add_common_arguments, apply_budget, cq_channel, emit_frame, emit_json, resolve_probs
from pfp.schemas import RunConfig
from pfp.services.protocol import covering_concentration

logger = logging.getLogger("pfp")


def register(subparsers) -> None:
    parser = subparsers.add_parser("covering", help="concentration of the obfuscation error of random covering codes")
    add_common_arguments(parser)
    parser.add_argument("--key-rate", type=float, dest="key_rate", default=0.0, help="covering-code rate R_s")
    parser.add_argument("--trials", type=int, help="random codes per blocklength (default 200)")
    parser.add_argument("--epsilon", type=float, help="threshold is 2*eps + 19*sqrt(eps)")
    parser.add_argument("--threshold", type=float, help="oe threshold used directly")


def run(config: RunConfig) -> int:
    apply_budget(config)
    channel = cq_channel(config)
    probs = resolve_probs(config, channel)
    for n in config.n:
        report = covering_concentration(
            channel, probs, n, config.key_rate, trials=config.trials or 200,
            threshold_eps=config.epsilon, threshold=config.threshold, seed=config.seed,
        )
        if config.format == "csv":
            frame = pd.DataFrame({"trial": range(report.trials), "oe": report.oe_values})
            emit_frame(config, n, frame)
        else:
            emit_json(config, n, report.model_dump())
    return 0
