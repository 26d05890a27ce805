"""Top-level export pipeline: descriptions -> encoder -> FEATMAT1 file."""

from __future__ import annotations

import numpy as np

from .descriptions import DescriptionSet
from .encoders import get_encoder
from .writer import write_featmat


def export(descriptions: DescriptionSet, encoder_id: str, out_path, kind: str = "hoi") -> np.ndarray:
    """Encode every description and write the feature file.

    Returns the unit-normalized embedding rows for inspection.
    """
    encoder = get_encoder(encoder_id)
    rows = encoder.encode(descriptions.texts)
    write_featmat(rows, descriptions.names, out_path, kind=kind)
    return rows
