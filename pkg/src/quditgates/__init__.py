"""Two-qudit entangling gates by optimal control of Rydberg-dressed atoms."""
__version__ = "0.1.0"

from ._validation import DegeneracyError, DomainError
from .angular import (SpinOps, angular_momentum_ops, clebsch_gordan, clebsch_gordan_exact,
                      m_values, spherical_tensor, tensor_components)
from .controllability import (ClosureResult, ControllabilityReport, TensorSpectrum,
                              controllability_report, lie_closure_rank, tensor_decompose)
from .grape import (ControlWaveform, GrapeOptimizer, GrapeOptions, GrapeProblem,
                    OptimizationReport, grape_gradient, n_min, optimize, propagate,
                    waveform_fidelity)
from .liegroup import (LayeredCircuit, LayeredOptimizer, LayeredProblem, LayerOptions,
                       assemble_circuit, gell_mann_basis, local_unitary, min_layers,
                       optimize_layers, search_layers)
from .linalg import kron, matrix_exp, swap_operator, symmetric_subspace_isometry
from .platform import (DressedModel, PlatformParams, build_model, detunings, dress_pair,
                       entangling_hamiltonian, pair_hamiltonian, rf_generator,
                       rydberg_rabi_ratios, total_hamiltonian)
from .targets import (GateTarget, cphase, csum, embed_isometry, from_matrix, gate_from_name,
                      hadamard_pair, isometry_fidelity, molmer_sorensen, qudit_hadamard)

__all__ = [
    "ClosureResult", "ControlWaveform", "ControllabilityReport", "DegeneracyError",
    "DomainError", "DressedModel", "GateTarget", "GrapeOptimizer", "GrapeOptions",
    "GrapeProblem", "LayerOptions", "LayeredCircuit", "LayeredOptimizer", "LayeredProblem",
    "OptimizationReport", "PlatformParams", "SpinOps", "TensorSpectrum",
    "angular_momentum_ops", "assemble_circuit", "build_model", "clebsch_gordan",
    "clebsch_gordan_exact", "controllability_report", "cphase", "csum", "detunings",
    "dress_pair", "embed_isometry", "entangling_hamiltonian", "from_matrix",
    "gate_from_name", "gell_mann_basis", "grape_gradient", "hadamard_pair",
    "isometry_fidelity", "kron", "lie_closure_rank", "local_unitary", "m_values",
    "matrix_exp", "min_layers", "molmer_sorensen", "n_min", "optimize", "optimize_layers",
    "pair_hamiltonian", "propagate", "qudit_hadamard", "rf_generator",
    "rydberg_rabi_ratios", "search_layers", "spherical_tensor", "swap_operator",
    "symmetric_subspace_isometry", "tensor_components", "tensor_decompose",
    "total_hamiltonian", "waveform_fidelity",
]
