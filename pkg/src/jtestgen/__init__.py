"""Unit test generation for Java focal methods with mined invocation seeds
and branch-guided assertion prompts."""

__version__ = "0.1.0"
