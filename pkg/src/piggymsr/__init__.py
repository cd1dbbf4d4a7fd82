"""Piggybacked minimum-storage regenerating codes with metered repair."""

__version__ = "0.1.0"

from .balanced import (BalancedCode, BibdDesign, balanced_encode, balanced_reconstruct, balanced_repair,
                       build_balanced_code, cyclic_bibd, load_preset, balanced_beta, validate_bibd)
from .bandwidth_meter import (TransferLedger, analytic_bandwidth, assert_measured, compare_table,
                              legacy_average_parity_bandwidth)
from .base_msr import BaseParams, BaseMsrCode, build_base_code, verify_mds
from .piggyback import (InjectionTable, PiggybackedCode, build_piggybacked_code, injection_anti_diagonal,
                        injection_main_diagonal, pb_encode, pb_reconstruct, pb_repair, validate_injection)

__all__ = [
    "BalancedCode", "BaseMsrCode", "BaseParams", "BibdDesign", "InjectionTable", "PiggybackedCode",
    "TransferLedger", "analytic_bandwidth", "assert_measured", "balanced_encode", "balanced_reconstruct",
    "balanced_repair", "build_balanced_code", "build_base_code", "build_piggybacked_code", "compare_table",
    "cyclic_bibd", "injection_anti_diagonal", "injection_main_diagonal", "legacy_average_parity_bandwidth",
    "load_preset", "pb_encode", "pb_reconstruct", "pb_repair", "balanced_beta", "validate_bibd",
    "validate_injection", "verify_mds",
]
