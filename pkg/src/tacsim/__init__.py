"""tacsim: camera-based optical tactile sensor simulation toolkit.

Pipeline stages: elastomer deformation (tacsim.mpm), indenter geometry
(tacsim.shapes), surface depth extraction and meshing (tacsim.surface),
tactile image rendering (tacsim.render), image metrics (tacsim.metrics)
and scenario orchestration (tacsim.scenario).
"""
from .errors import (AlignmentError, ConfigurationError, ExtractionError,
                     RenderError, SimulationFault, TacsimError)

__version__ = "0.1.0"

__all__ = [
    "AlignmentError", "ConfigurationError", "ExtractionError",
    "RenderError", "SimulationFault", "TacsimError", "__version__",
]
