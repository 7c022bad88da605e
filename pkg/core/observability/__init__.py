"""Runtime event emission and sink wiring."""
