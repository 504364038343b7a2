"""Mean-field theory of map-driven branching models on finite state spaces.

Core pieces: exact one-step operator and mean-field ODE (`meanfield`),
bivariate lifting and the (p, r) system (`variate`), random marked trees and
their combinatorics (`trees`), distribution-valued population dynamics
(`higher`), the finite particle system on the complete graph (`particle`),
and a CLI (`cli`).
"""

from .errors import (ArityOverflow, BudgetExceeded, EmptyFamily,
                     EnumerationCap, NegativeRate, NotConverged, StepTooLarge,
                     TreefieldError, Unsupported)
from .model import (Dist, FamilyConstants, LocalMap, MapFamily, StateSpace,
                    StructuredEntry, StructuredFamily, as_structured,
                    builtin_map, constants, family_from_config,
                    family_to_config, flatten, preset, structured_preset)

__version__ = "0.1.0"

__all__ = [
    "ArityOverflow", "BudgetExceeded", "EmptyFamily", "EnumerationCap",
    "NegativeRate", "NotConverged", "StepTooLarge", "TreefieldError",
    "Unsupported", "Dist", "FamilyConstants", "LocalMap", "MapFamily",
    "StateSpace", "StructuredEntry", "StructuredFamily", "as_structured",
    "builtin_map", "constants", "family_from_config", "family_to_config",
    "flatten", "preset", "structured_preset", "__version__",
]
