"""Three-party computation over Z_2^ell with extension-ring batch verification."""

__version__ = "0.1.0"

from .rings import GrElem, GrModulus, RingElem, modulus_for_degree  # noqa: F401
from .runtime import Party, Session  # noqa: F401
from .sharing import Ring  # noqa: F401
from .transport import AbortError, AdversaryConfig, Injection, Phase  # noqa: F401
