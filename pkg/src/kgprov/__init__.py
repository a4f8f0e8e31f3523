"""Embedded knowledge-graph engine with how-provenance polynomials and
incrementally maintained standing BGP queries."""

from .evaluate import BindingRow, evaluate_bgp
from .maintenance import Engine, RegistrationReceipt, UpdateReport
from .provenance import Polynomial
from .query import QueryGraph, parse_query
from .store import KnowledgeGraph, load_ntriples, load_ntriples_file

__all__ = [
    "BindingRow",
    "Engine",
    "KnowledgeGraph",
    "Polynomial",
    "QueryGraph",
    "RegistrationReceipt",
    "UpdateReport",
    "evaluate_bgp",
    "load_ntriples",
    "load_ntriples_file",
    "parse_query",
]

__version__ = "0.1.0"
