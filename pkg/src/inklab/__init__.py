"""inklab: pen-tablet handwriting analysis toolkit.

Converts online pen recordings into dynamically enhanced static images,
extracts deep and hand-crafted features, and runs per-task / ensemble
classification experiments for PD-vs-control discrimination.
"""

__version__ = "0.1.0"
