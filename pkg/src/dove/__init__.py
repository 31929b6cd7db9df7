"""Symbolic protocol analysis: realizability, bounded secrecy search,
well-composedness and hardening of message templates."""
from .deduction import analyze, can_synthesize, steps_to_learn
from .harden import (
    HardenOptions, NotInClassC, check_well_composed, harden, in_class_c,
    weakly_equivalent,
)
from .protocol import ProtocolTemplate, check_realizable, revealed_vars
from .search import authcheck, check_authenticity, find_secrecy_attack
from .semantics import Bounds, Scenario
from .syntax import load_spec, parse_spec, render_spec

__all__ = [
    "analyze", "can_synthesize", "steps_to_learn", "HardenOptions", "NotInClassC",
    "check_well_composed", "harden", "in_class_c", "weakly_equivalent",
    "ProtocolTemplate", "check_realizable", "revealed_vars", "authcheck",
    "check_authenticity", "find_secrecy_attack", "Bounds", "Scenario",
    "load_spec", "parse_spec", "render_spec",
]
