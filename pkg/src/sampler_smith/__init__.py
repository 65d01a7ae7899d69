"""Learn sampler programs by ABC-scored search; SMC with learned proposals."""

__version__ = "0.1.0"
