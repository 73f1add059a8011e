"""effmap: desk-scale workbench for stimulation-efficacy prediction.

Compares a population-atlas baseline against a local-anatomy 3D patch
classifier on synthetic cohorts with known ground truth.
"""

__version__ = "0.1.0"
