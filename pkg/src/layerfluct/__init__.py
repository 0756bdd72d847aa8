"""Layer dynamics and fluctuations for bistable reaction-diffusion models."""
__version__ = "0.1.0"
