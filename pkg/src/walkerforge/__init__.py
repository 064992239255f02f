"""walkerforge: parametric walker design, simulation and counterfactual
optimization pipeline."""

__version__ = "0.1.0"
