"""startkit: a clean-room developer-environment orchestration kit.

Runs every task inside a fully controlled background shell, wraps
external tools in verify/repair adapters, composes shared steps into
user recipes, and recovers from broken-system failures via workarounds,
fallback chains and a learned-solution cache.
"""

__version__ = "0.1.0"
