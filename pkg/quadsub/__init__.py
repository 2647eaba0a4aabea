"""Numerical toolkit for accretive quadratic operators q^w and their small-time smoothing."""
from .catalog import CatalogEntry, catalog, get_entry
from .errors import QuadSubError, SingularSpaceNonTrivial, SymbolError
from .singular_space import SingularReport, SubspaceBasis, k0_index, singular_report, singular_space
from .symbol_core import HamiltonMap, QuadraticSymbol, RealQuadForm, hamilton_map

__all__ = [
    "CatalogEntry",
    "HamiltonMap",
    "QuadSubError",
    "QuadraticSymbol",
    "RealQuadForm",
    "SingularReport",
    "SingularSpaceNonTrivial",
    "SubspaceBasis",
    "SymbolError",
    "catalog",
    "get_entry",
    "hamilton_map",
    "k0_index",
    "singular_report",
    "singular_space",
]
