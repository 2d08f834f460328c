from .network import ThermalSRNet, build_model, count_parameters

__all__ = ["ThermalSRNet", "build_model", "count_parameters"]
