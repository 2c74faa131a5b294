"""Extract personal data flows from privacy-policy HTML and analyse them as graphs."""

__version__ = "0.1.0"

from .errors import PolicyFlowError  # noqa: E402
from .segmenter import PolicyDocument, Segment, segment_html  # noqa: E402

__all__ = ["PolicyDocument", "PolicyFlowError", "Segment", "segment_html", "__version__"]
