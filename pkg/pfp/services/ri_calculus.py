"""Resource inequalities over <N>, [cc]* and [c->c]*.

Grammar (whitespace-insensitive):
    ri    := side '>=' side
    side  := term ('+' term)*
    term  := '<N>' | [float] '[cc]*' | [float] '[c->c]*'
"""
import logging
import re
from typing import List, Optional, Tuple

import numpy as np

from pfp.core.exceptions import ConfigurationError, InvariantViolationError, RIParseError, RuleNotApplicableError
from pfp.schemas import DerivationStep, OptimizerConfig, RatePoint, Resource, ResourceInequality, RIDerivation
from pfp.services.channels import Channel, CqWiretapChannel, InputEnsemble, KrausChannel, induced_cq_channel
from pfp.services.information import generic_information, holevo_pair
from pfp.services.region import corner_points, rate_pair_feasible

logger = logging.getLogger("pfp")

RATE_ZERO = 1e-12
ACCOUNTING_TOL = 1e-9

_TOKEN = re.compile(
    r"\s*(?:(?P<channel><N>)"
    r"|(?P<coef>[0-9]*\.?[0-9]+(?:[eE][-+]?[0-9]+)?)?\s*(?P<unit>\[cc\]\*|\[c->c\]\*)"
    r"|(?P<op>>=|\+))"
)
_UNITS = {"[cc]*": "secret_key", "[c->c]*": "private_cbit"}
_SYMBOLS = {"channel": "<N>", "secret_key": "[cc]*", "private_cbit": "[c->c]*"}
_ORDER = {"channel": 0, "secret_key": 1, "private_cbit": 2}


def _tokenize(text: str) -> List[Tuple[str, object, int]]:
    tokens = []
    pos = 0
    stripped_end = len(text.rstrip())
    while pos < stripped_end:
        match = _TOKEN.match(text, pos)
        if not match or match.end() == pos:
            raise RIParseError(f"unexpected input {text[pos:pos + 10]!r}", pos)
        start = match.start() + len(match.group(0)) - len(match.group(0).lstrip())
        if match.group("channel"):
            tokens.append(("term", Resource(kind="channel"), start))
        elif match.group("unit"):
            coef = match.group("coef")
            rate = float(coef) if coef is not None else 1.0
            tokens.append(("term", Resource(kind=_UNITS[match.group("unit")], rate=rate), start))
        else:
            tokens.append((match.group("op"), None, start))
        pos = match.end()
    return tokens


def parse_ri(text: str) -> ResourceInequality:
    tokens = _tokenize(text)
    sides: List[List[Resource]] = [[]]
    expect_term = True
    for kind, value, pos in tokens:
        if expect_term:
            if kind != "term":
                raise RIParseError(f"expected a resource, found {kind!r}", pos)
            sides[-1].append(value)
            expect_term = False
        elif kind == "+":
            expect_term = True
        elif kind == ">=":
            if len(sides) == 2:
                raise RIParseError("more than one '>='", pos)
            sides.append([])
            expect_term = True
        else:
            raise RIParseError("expected '+' or '>=' between resources", pos)
    if expect_term:
        raise RIParseError("expression ends where a resource is expected", len(text))
    if len(sides) != 2:
        raise RIParseError("missing '>='", len(text))
    return ResourceInequality(lhs=sides[0], rhs=sides[1])


def _format_rate(rate: float) -> str:
    return format(rate, ".12g")


def print_side(resources: List[Resource]) -> str:
    ordered = sorted(resources, key=lambda r: _ORDER[r.kind])
    terms = [
        _SYMBOLS[r.kind] if r.kind == "channel" else f"{_format_rate(r.rate)}{_SYMBOLS[r.kind]}"
        for r in ordered
    ]
    return " + ".join(terms)


def print_ri(ri: ResourceInequality) -> str:
    """Canonical form: <N> first, then [cc]*, then [c->c]*, rates with 12 significant digits."""
    return f"{print_side(ri.lhs)} >= {print_side(ri.rhs)}"


def _rate(resources: List[Resource], kind: str) -> float:
    return sum(r.rate for r in resources if r.kind == kind)


def _clean_rate(value: float, what: str) -> float:
    if value < -ACCOUNTING_TOL:
        raise ConfigurationError(f"{what} must be non-negative, got {value}")
    return 0.0 if abs(value) < RATE_ZERO else float(value)


def appending_rule() -> ResourceInequality:
    """[c->c]* >= [cc]*: a private bit can always be spent as a key bit."""
    rule = parse_ri("[c->c]* >= [cc]*")
    rule.provenance = [DerivationStep(rule="appending", premises=[], conclusion=print_ri(rule))]
    return rule


def instantiate_father(mutual_info_b: float, mutual_info_e: float) -> ResourceInequality:
    """<N> + I(A;E)[cc]* >= I(A;B)[c->c]*; a zero-rate key term is omitted."""
    rate = _clean_rate(mutual_info_b, "I(A;B)")
    key_rate = _clean_rate(mutual_info_e, "I(A;E)")
    lhs = [Resource(kind="channel")]
    if key_rate > 0:
        lhs.append(Resource(kind="secret_key", rate=key_rate))
    father = ResourceInequality(lhs=lhs, rhs=[Resource(kind="private_cbit", rate=rate)])
    father.provenance = [DerivationStep(rule="father", premises=[], conclusion=print_ri(father))]
    return father


def compose_catalytic(father: ResourceInequality, rule: ResourceInequality) -> ResourceInequality:
    """Feeds r_k of the father's produced [c->c]* back as key, leaving <N> >= (r_p - r_k)[c->c]*."""
    rule_in = {r.kind for r in rule.lhs}
    rule_out = {r.kind for r in rule.rhs}
    if rule_in != {"private_cbit"} or rule_out != {"secret_key"}:
        raise RuleNotApplicableError(f"rule {print_ri(rule)} does not convert [c->c]* into [cc]*")
    if _rate(rule.lhs, "private_cbit") != _rate(rule.rhs, "secret_key"):
        raise RuleNotApplicableError(f"rule {print_ri(rule)} is not a one-to-one conversion")

    produced = _rate(father.rhs, "private_cbit")
    consumed = _rate(father.lhs, "secret_key")
    if produced <= 0 and consumed > 0:
        raise RuleNotApplicableError(f"father {print_ri(father)} produces no [c->c]* to recycle")

    net = produced - consumed
    clipped = net < -RATE_ZERO
    net = 0.0 if net < RATE_ZERO else net
    lhs = [r for r in father.lhs if r.kind != "secret_key"]
    child = ResourceInequality(lhs=lhs, rhs=[Resource(kind="private_cbit", rate=net)], clipped=clipped)
    step = DerivationStep(rule="compose", premises=[print_ri(father), print_ri(rule)], conclusion=print_ri(child))
    child.provenance = list(father.provenance) + list(rule.provenance) + [step]
    if clipped:
        logger.warning(f"⚠️ RI: key demand exceeds private output in {print_ri(father)}, child rate clipped at 0")
    return child


def replay(provenance: List[DerivationStep]) -> ResourceInequality:
    """Re-executes a derivation trace and checks every recorded conclusion."""
    if not provenance:
        raise InvariantViolationError("empty derivation trace")
    result: Optional[ResourceInequality] = None
    for step in provenance:
        if step.rule in ("father", "appending"):
            result = parse_ri(step.conclusion)
        elif step.rule == "compose":
            father, rule = (parse_ri(text) for text in step.premises)
            result = compose_catalytic(father, rule)
        else:
            raise InvariantViolationError(f"unknown derivation rule {step.rule!r}")
        if print_ri(result) != step.conclusion:
            raise InvariantViolationError(
                f"replay of {step.rule!r} gives {print_ri(result)!r}, trace says {step.conclusion!r}"
            )
    return result


def _father_distribution(channel: CqWiretapChannel, probs, config: Optional[OptimizerConfig]) -> np.ndarray:
    if probs is not None:
        return np.asarray(probs, dtype=float)
    if channel.probs is not None:
        return channel.probs
    _, q_corner = corner_points(channel, config)
    return np.asarray(q_corner.distribution)


def derive_for_channel(channel: Channel, probs=None, config: Optional[OptimizerConfig] = None) -> RIDerivation:
    """Father RI at the chosen input, the catalytic child, and for Kraus channels the coherent information."""
    coherent = None
    discrepancy = False
    if isinstance(channel, KrausChannel):
        ensemble = channel.ensemble()
        if probs is not None:
            ensemble = InputEnsemble(ensemble.names, probs, ensemble.states)
        info = generic_information(channel, ensemble)
        i_ab, i_ae, coherent = info.mutual_info_b, info.mutual_info_e, info.coherent_information
        cq = induced_cq_channel(channel, ensemble)
        p = ensemble.probs
    else:
        cq = channel
        p = _father_distribution(cq, probs, config)
        i_ab, i_ae = holevo_pair(cq, p)

    father = instantiate_father(i_ab, i_ae)
    child = compose_catalytic(father, appending_rule())
    accounting = _rate(child.rhs, "private_cbit")
    if coherent is not None:
        discrepancy = abs(accounting - coherent) > ACCOUNTING_TOL

    feasible = None
    if isinstance(channel, CqWiretapChannel):
        feasible = rate_pair_feasible(cq, p, RatePoint(rate=_rate(father.rhs, "private_cbit"),
                                                       key_rate=_rate(father.lhs, "secret_key")))
    logger.info(f"RI: father {print_ri(father)} -> child {print_ri(child)}")
    return RIDerivation(
        father=father,
        rule=appending_rule(),
        child=child,
        mutual_info_b=i_ab,
        mutual_info_e=i_ae,
        accounting_rate=accounting,
        coherent_information=coherent,
        discrepancy=discrepancy,
        feasible=feasible,
    )
