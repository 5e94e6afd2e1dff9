"""Limit quantization of constrained quantum systems: tubes around planar curves, stiff confinement, and the reduced operator on the curve."""

__version__ = "0.1.0"

from .config import ParseError, Scenario, ValidationError, load_scenario, parse_scenario  # noqa: E402
from .geometry import EmbeddingCurve, OutOfTube, curvature, metric_at  # noqa: E402
from .potentials import ConfinementFamily, tune_harmonic  # noqa: E402
from .qsolve import build_full_hamiltonian, build_laplace_beltrami, lowest_eigenpairs  # noqa: E402
from .reduction import (EffectivePotentialEstimate, assemble_v_eff, extract_v_eff_spectral,  # noqa: E402
                        fast_ground_state)
from .harness import RunReport, run  # noqa: E402

__all__ = [
    "ConfinementFamily",
    "EffectivePotentialEstimate",
    "EmbeddingCurve",
    "OutOfTube",
    "ParseError",
    "RunReport",
    "Scenario",
    "ValidationError",
    "__version__",
    "assemble_v_eff",
    "build_full_hamiltonian",
    "build_laplace_beltrami",
    "curvature",
    "extract_v_eff_spectral",
    "fast_ground_state",
    "load_scenario",
    "lowest_eigenpairs",
    "metric_at",
    "parse_scenario",
    "run",
    "tune_harmonic",
]
