"""Polynomial activation coefficients.

The shipped sets approximate ReLU on [-8, 8] by least squares (see
scripts/fit_activation_coeffs.py). Coefficients are stored lowest power
first; any other set can be substituted through a JSON file of the same
shape via the ``backend.activation_coeffs`` config key.
"""

from __future__ import annotations

import json
from importlib import resources
from pathlib import Path

from .errors import ConfigError

__all__ = ["load_coefficients", "default_coefficients", "coefficients_for"]


def _parse(doc: dict) -> dict[int, tuple[float, ...]]:
    try:
        table = doc["coefficients"]
        out = {int(deg): tuple(float(c) for c in coefs) for deg, coefs in table.items()}
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"malformed activation coefficient file: {exc}") from exc
    for deg, coefs in out.items():
        if len(coefs) != deg + 1:
            raise ConfigError(
                f"degree {deg} needs {deg + 1} coefficients, got {len(coefs)}")
    return out


def load_coefficients(path: str | Path) -> dict[int, tuple[float, ...]]:
    """Load a coefficient table from a JSON file."""
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read activation coefficients from {path}: {exc}") from exc
    return _parse(doc)


def default_coefficients() -> dict[int, tuple[float, ...]]:
    """The shipped ReLU-approximating coefficient sets."""
    text = resources.files("heplan").joinpath("data/activations.json").read_text()
    return _parse(json.loads(text))


def coefficients_for(degree: int,
                     table: dict[int, tuple[float, ...]] | None = None) -> tuple[float, ...]:
    table = table if table is not None else default_coefficients()
    if degree not in table:
        raise ConfigError(
            f"no activation coefficients for degree {degree}; "
            f"available degrees: {sorted(table)}")
    return table[degree]
