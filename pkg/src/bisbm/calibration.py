"""Pinned working constants for desk-scale experiments.

The threshold formulas carry unspecified universal constants; the values
here were fixed by a one-time calibration sweep and are committed as
package data so that experiment configs and tests share one source.

Keys:
  C_dd      prefactor on the diagonal-deletion density (n1 n2)^(-1/2) ln n1
  C_svd     prefactor on the plain-SVD density n1^(-2/3) n2^(-1/3) ln n1
  epsilon   margin above the detection threshold used by the reduction
"""

import importlib.resources
import json


def load_calibration() -> dict:
    text = (
        importlib.resources.files("bisbm").joinpath("data/calibration.json").read_text()
    )
    return json.loads(text)
