"""Universal coding for memoryless sources with polytope-constrained parameters."""
