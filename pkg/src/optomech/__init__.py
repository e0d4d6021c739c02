"""Single-photon optomechanics of an atom trapped inside a driven optical cavity.

Two engines share one parameter model: a position-resolved scattering picture
(``scatter``) and a full master-equation solver (``lindblad``).
"""

__version__ = "0.1.0"

from .model import PhysicalParams, baseline, derive  # noqa: E402
from .qops import Dims, MotionalState  # noqa: E402

__all__ = ["Dims", "MotionalState", "PhysicalParams", "baseline", "derive", "__version__"]
