import argparse
import logging

from pfp.commands.base import add_common_arguments, apply_budget, cq_channel, emit_frame, emit_json
from pfp.schemas import RunConfig
from pfp.services.region import boundary_frame, regularized_boundary

logger = logging.getLogger("pfp")


def register(subparsers) -> None:
    parser = subparsers.add_parser("region", help="capacity-region boundary R_max(R_s) and corner points")
    add_common_arguments(parser)
    parser.add_argument("--samples", type=int, help="number of key-rate samples (default 50)")


def run(config: RunConfig) -> int:
    apply_budget(config)
    channel = cq_channel(config)
    samples = config.samples or 50
    fmt = config.format or "csv"
    for n in config.n:
        boundary = regularized_boundary(channel, n, samples)
        if fmt == "json":
            emit_json(config, n, boundary.model_dump())
        else:
            emit_frame(config, n, boundary_frame(boundary))
    return 0
