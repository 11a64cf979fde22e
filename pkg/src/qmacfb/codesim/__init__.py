"""Random-coding machinery: multiplex Bayesian networks, codebooks, typicality and scheme simulators."""

from .network import (
    Codebook,
    MultiplexBayesNet,
    NetworkReport,
    build_qcl_network,
    build_ratesplit_network,
    example_mac_network,
    generate_codebook,
    message_set_size,
    to_dot,
    topological_order,
    validate_network,
)
from .packing import PackingReport, packing_rate_check
from .pgm import pgm_decode, pgm_probabilities
from .qcl import SimReport, classical_channel_law, simulate_qcl_scheme
from .ratesplit import simulate_ratesplit_scheme
from .typicality import fresh_typical_logprob, typicality_check

__all__ = [
    "Codebook",
    "MultiplexBayesNet",
    "NetworkReport",
    "PackingReport",
    "SimReport",
    "build_qcl_network",
    "build_ratesplit_network",
    "classical_channel_law",
    "example_mac_network",
    "fresh_typical_logprob",
    "generate_codebook",
    "message_set_size",
    "packing_rate_check",
    "pgm_decode",
    "pgm_probabilities",
    "simulate_qcl_scheme",
    "simulate_ratesplit_scheme",
    "to_dot",
    "topological_order",
    "typicality_check",
    "validate_network",
]
