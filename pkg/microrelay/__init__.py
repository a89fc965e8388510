"""microrelay: a functional, statically typed IR for deep learning programs."""

__version__ = "0.1.0"
__author__ = "microrelay developers"
__description__ = "Typecheck, optimize and interpret Relay-style tensor programs"
