"""Build reflective instruction-tuning data for vision-language models and
score model predictions on hallucination and reasoning probes."""

__version__ = "0.1.0"
