"""Current-unit conventions, kept in one place.

Cell models return currents per unit capacitance (uA/uF). The tissue
equation works with membrane current densities (uA/mm^2), which the
discretisation multiplies by the surface-to-volume ratio chi (1/mm).
Stimuli quoted as volumetric densities (uA/mm^3, as in the cuboid
benchmark) already include that chi factor, so they are divided by chi
before entering the same slot as a membrane density.
"""


def current_density(per_capacitance, cm: float):
    """uA/uF -> uA/mm^2 for capacitance ``cm`` in uF/mm^2."""
    return cm * per_capacitance


def volumetric_to_membrane(intensity, chi: float):
    """uA/mm^3 -> uA/mm^2 for surface-to-volume ratio ``chi`` in 1/mm."""
    return intensity / chi
