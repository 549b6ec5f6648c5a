"""Topic models for short texts."""
