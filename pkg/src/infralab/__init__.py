"""Charged sectors in front of infrared backgrounds: numerical laboratory.

Modules
-------
hilbert
    Radial/angular discretization of the one-particle space.
charges
    Charges, linear forms, scaling limits and local implementers.
kpr
    KPR-like symplectic operators and their diagnostics.
localization
    Cone profiles, intertwiners and the localization verdicts.
jld
    Minkowski regions, wedge reductions, the breve lift and the 1+1
    wave-equation correspondence.
harness
    Configurations, pipelines, reports and golden-file checks.
"""

__version__ = "0.1.0"
