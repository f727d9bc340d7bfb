"""Physical constants (SI) and the 87Rb defaults."""
from scipy import constants as _c

HBAR = _c.hbar
BOHR_RADIUS = _c.physical_constants["Bohr radius"][0]
ATOMIC_MASS = _c.atomic_mass

RB87_MASS = 86.909180527 * ATOMIC_MASS

# |F=1, m=-1> and |F=2, m=+1> scattering lengths, in Bohr radii
RB87_A11 = 100.4
RB87_A22 = 95.00
RB87_A12 = 97.66
