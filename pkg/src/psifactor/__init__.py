"""Semiclassical pseudodifferential calculus on scaled nets, with one-way wave factorization."""

__version__ = "0.1.0"

from .symbol_ir import Expr, parse_symbol, evaluate, differentiate, to_text  # noqa: E402,F401
from .scale_nets import ScaleLadder, SymbolNet, make_ladder, classify_growth  # noqa: E402,F401
