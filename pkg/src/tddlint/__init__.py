"""Static detection of TDD anti-patterns and TDD maturity scoring."""

__version__ = "0.1.0"
