"""
Anonymous conference key agreement.

This module provides:
    - quantum_core: cluster-state simulator and outcome sampling
    - protocol: round machine, correction rules and error estimation
    - postprocess: LDPC reconciliation and Toeplitz privacy amplification
    - keyrate: asymptotic and finite key rates
    - demo / cli: image encryption pipeline and command-line front end
"""

from .config import ProtocolParams, RunConfig, Scheduling
from .demo import demo_pipeline, xor_cipher
from .protocol import ConferenceKeyProtocol, estimate_errors, run_protocol
from .settings import Configuration

__all__ = [
    "ProtocolParams",
    "RunConfig",
    "Scheduling",
    "Configuration",
    "ConferenceKeyProtocol",
    "run_protocol",
    "estimate_errors",
    "demo_pipeline",
    "xor_cipher",
]
