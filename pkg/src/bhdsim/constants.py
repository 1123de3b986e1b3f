"""Physical constants (CODATA 2018, exact SI definitions)."""

PLANCK = 6.62607015e-34  # J s
SPEED_OF_LIGHT = 299792458.0  # m / s
ELEMENTARY_CHARGE = 1.602176634e-19  # C

# h c / e in V m; photon energy in eV is this divided by the wavelength in metres
HC_OVER_E = PLANCK * SPEED_OF_LIGHT / ELEMENTARY_CHARGE


def photon_energy(wavelength_um):
    """Photon energy in joules for a wavelength in micrometres."""
    return PLANCK * SPEED_OF_LIGHT / (wavelength_um * 1e-6)
