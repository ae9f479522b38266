"""Numerical companion for high-to-low frequency norm inflation in the
heat-conducting compressible Navier--Stokes system.

Submodules
----------
profile
    Smooth cutoffs and the accurate radial kernel of the dyadic block.
lp_frame
    Littlewood--Paley bands and the unit-cube frequency partition.
spectral
    Sparse-spectrum fields on periodic boxes.
field_rep
    Modulated bump atoms, multi-patch fields and dense grid fields.
multipliers
    Heat and Lame semigroups, Duhamel integrals and the dissipation form.
norms
    Lebesgue, Besov and modulation norms with error reports.
construction
    The modulated initial data family and its cross-term bounds.
picard_hierarchy
    Frequency-domain Picard iterates and their power-law fits.
"""

__version__ = "0.1.0"
