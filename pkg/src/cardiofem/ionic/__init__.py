"""Membrane models and the explicit ionic update."""
from .base import CellModel, IonicError, ionic_step, load_manifest
from .mitchell_schaeffer import MitchellSchaeffer, make_mitchell_schaeffer
from .ten_tusscher import TenTusscherPanfilov, make_ten_tusscher_panfilov
from .units import current_density, volumetric_to_membrane

MODELS = {
    "mitchell_schaeffer": make_mitchell_schaeffer,
    "ten_tusscher_panfilov": make_ten_tusscher_panfilov,
}


def make_model(name: str, **kwargs) -> CellModel:
    try:
        factory = MODELS[name]
    except KeyError:
        raise ValueError(f"unknown ionic model {name!r}; choose from {sorted(MODELS)}") from None
    return factory(**kwargs)


__all__ = [
    "CellModel", "IonicError", "ionic_step", "load_manifest", "MitchellSchaeffer",
    "make_mitchell_schaeffer", "TenTusscherPanfilov", "make_ten_tusscher_panfilov",
    "current_density", "volumetric_to_membrane", "MODELS", "make_model",
]
