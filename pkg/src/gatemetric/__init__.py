"""Environment-invariant distances and gate control for open quantum systems."""
