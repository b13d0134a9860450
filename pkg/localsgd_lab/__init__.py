"""localsgd-lab - FedAvg / Local SGD iterate-bias and rate-bound simulation lab."""

__version__ = "1.0.0"
__build__ = "dev"
