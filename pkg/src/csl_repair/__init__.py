"""Model checking and rate-reduction repair of time-bounded CSL Until requirements on CTMCs."""

__version__ = "0.1.0"

from .analysis import (PoissonWeights, TransientSetup, UntimedResult, poisson_weights,
                       timed_until_prob, transient_setup, untimed_until_prob)
from .csl import (Atom, CheckResult, Comparison, Not, Or, UntilRequirement, check, eval_prop,
                  format_requirement, parse)
from .oracle import SimConfig, SimResult, simulate_until
from .repair import (BsmConfig, RepairOutcome, RepairStatus, algorithm1, algorithm2, bsm, repair,
                     sweep)
from .smc import (Factors, Partition, ReducedSmc, Smc, StateClass, apply_factors, build_reduced,
                  instantiate, parse_model, partition, read_model, validate, write_model)

__all__ = [
    "Atom", "BsmConfig", "CheckResult", "Comparison", "Factors", "Not", "Or", "Partition",
    "PoissonWeights", "ReducedSmc", "RepairOutcome", "RepairStatus", "SimConfig", "SimResult",
    "Smc", "StateClass", "TransientSetup", "UntilRequirement", "UntimedResult", "algorithm1",
    "algorithm2", "apply_factors", "bsm", "build_reduced", "check", "eval_prop",
    "format_requirement", "instantiate", "parse", "parse_model", "partition", "poisson_weights",
    "read_model", "repair", "simulate_until", "sweep", "timed_until_prob", "transient_setup",
    "untimed_until_prob", "validate", "write_model",
]
