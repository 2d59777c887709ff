"""wipesim: passivity-safe variable impedance teaching of periodic wiping motions.

The package simulates a compliant virtual end-effector that a scripted or live
human hand can guide over a work surface. Demonstrated periodic motions are
learned online (periodic movement primitives + adaptive frequency oscillators)
and executed autonomously, while an energy tank and a per-cycle quadratic
program keep the controller passive and bound its power extraction.
"""

__version__ = "0.1.0"
