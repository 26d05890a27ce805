"""Bridge from class-description text to FEATMAT1 feature files."""

from .descriptions import DescriptionSet, object_template
from .encoders import EncoderError, HashingEncoder, get_encoder
from .export import export
from .writer import write_featmat

__version__ = "0.1.0"

__all__ = [
    "DescriptionSet",
    "object_template",
    "EncoderError",
    "HashingEncoder",
    "get_encoder",
    "export",
    "write_featmat",
]
