import logging

from pfp.commands.base import add_common_arguments, apply_budget, emit_json, emit_text, load_run_channel
from pfp.schemas import RunConfig
from pfp.services.ri_calculus import derive_for_channel, print_ri

logger = logging.getLogger("pfp")


def register(subparsers) -> None:
    parser = subparsers.add_parser("ri", help="resource-inequality derivations")
    parser.add_argument("action", choices=["derive"])
    add_common_arguments(parser)


def run(config: RunConfig) -> int:
    apply_budget(config)
    channel = load_run_channel(config)
    derivation = derive_for_channel(channel, config.probs)
    n = config.n[0]
    if config.format == "json":
        emit_json(config, n, derivation.model_dump())
        return 0
    lines = [f"{step.rule}: {step.conclusion}" for step in derivation.child.provenance]
    lines.append(f"I(A;B) = {derivation.mutual_info_b:.12g}, I(A;E) = {derivation.mutual_info_e:.12g}")
    if derivation.coherent_information is not None:
        flag = "  (differs from child rate)" if derivation.discrepancy else ""
        lines.append(f"I_c(A>B) = {derivation.coherent_information:.12g}{flag}")
    lines.append(print_ri(derivation.child))
    emit_text(config, n, lines)
    return 0
